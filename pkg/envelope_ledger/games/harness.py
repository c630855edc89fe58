"""Shared machinery for the security games.

Each trial builds an isolated ``GameWorld`` from its own seeded RNG, lets one
adversary strategy play against it, and records a reproducing trace when the
strategy meets the game's win condition. Runs are deterministic in the seed.
"""
import logging
import math
import random
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

from pydantic import root_validator
from rich.progress import track

from envelope_ledger.conditions import ComparisonOp, ConditionTree, OracleSnapshot, PriceLeaf, feed_key
from envelope_ledger.crypto_core import GRUMPKIN_ORDER, KeyPair, derive_address
from envelope_ledger.data import DAY, Record
from envelope_ledger.errors import ContractViolation
from envelope_ledger.notes import Note
from envelope_ledger.registry import (
    REFERENCE_IRM_ADDR,
    REGISTRY_CHECKS,
    ActionType,
    AdminRegistry,
    EnvelopeRegistry,
    EnvelopeTerms,
    RedistributionIntent,
)
from envelope_ledger.relations import CONSTRAINT_NAMES, RelationChecker
from envelope_ledger.wallet import OwnerWallet

GAME_START = 1_700_000_000
ORACLE = derive_address("oracle/eth-usd")
PAIR = "ETH/USD"
LIQUIDATION_PRICE = 1_500
ADMIN = derive_address("registry-admin")
DEFAULT_POOL_SIZE = 8
DEFAULT_TREE_DEPTH = 8

MUTANTS = tuple(sorted(CONSTRAINT_NAMES)) + tuple(sorted(REGISTRY_CHECKS)) + ("admin",)


@lru_cache(maxsize=8)
def key_pool(size: int, seed: int) -> Tuple[KeyPair, ...]:
    """Pre-derived owner keys; deriving a public key per trial dominates run time otherwise."""
    rng = random.Random(f"key-pool/{seed}")
    return tuple(KeyPair.from_secret(rng.randrange(1, GRUMPKIN_ORDER)) for _ in range(size))


def build_registry(mutant: Optional[str] = None, *, tree_depth: int = DEFAULT_TREE_DEPTH) -> EnvelopeRegistry:
    """An intact registry, or one with the named check removed."""
    if mutant is None:
        return EnvelopeRegistry(tree_depth=tree_depth)
    if mutant in CONSTRAINT_NAMES:
        return EnvelopeRegistry(tree_depth=tree_depth, checker=RelationChecker(disabled=[mutant]))
    if mutant in REGISTRY_CHECKS:
        return EnvelopeRegistry(tree_depth=tree_depth, disabled_checks=[mutant])
    if mutant == "admin":
        return AdminRegistry(admin=ADMIN, policy_disabled=True, tree_depth=tree_depth)
    raise ContractViolation(f"unknown mutant {mutant!r}; choose from {', '.join(MUTANTS)}")


class GameWorld:
    """One owner with a funded note and an encumbered note, plus a bystander's note."""

    def __init__(self, rng: random.Random, *, mutant: Optional[str] = None, pool: Sequence[KeyPair], tree_depth: int):
        self.mutant = mutant
        self.registry = build_registry(mutant, tree_depth=tree_depth)
        owner, other = rng.sample(list(pool), 2)
        self.owner = owner
        self.wallet = OwnerWallet(keypair=owner, registry=self.registry, rng=rng)
        self.bystander_wallet = OwnerWallet(keypair=other, registry=self.registry, rng=rng, label="bystander")
        self.lender = derive_address(f"lender/{rng.getrandbits(32)}")
        self.keeper = derive_address(f"keeper/{rng.getrandbits(32)}")

        value = rng.randint(1_000, 1_000_000)
        self.funded: Note = self.wallet.mint(rng.randint(1_000, 1_000_000))
        self.encumbered: Note = self.wallet.mint(value)
        self.bystander: Note = self.bystander_wallet.mint(rng.randint(1_000, 1_000_000))

        self.tree = ConditionTree.of(
            PriceLeaf(oracle_addr=ORACLE, asset_pair=PAIR, op=ComparisonOp.LE, threshold=LIQUIDATION_PRICE)
        )
        fee = rng.randint(0, value // 100)
        self.intent = RedistributionIntent(
            action_type=ActionType.LIQUIDATE,
            target_addr=self.lender,
            keeper_fee=fee,
            max_amount=rng.randint(fee + 1, value),
        )
        self.terms = EnvelopeTerms(
            deadline=GAME_START + 30 * DAY, debt_principal=rng.randint(1, value // 2), irm_addr=REFERENCE_IRM_ADDR
        )
        self.eid = self.wallet.encumber(self.encumbered, self.tree, self.intent, self.terms, now=GAME_START).eid
        self.now = GAME_START + rng.randint(1, 29) * DAY

    def snapshot(self, price: int) -> OracleSnapshot:
        return OracleSnapshot(block_timestamp=self.now, prices={feed_key(ORACLE, PAIR): price})

    @property
    def triggered(self) -> OracleSnapshot:
        return self.snapshot(LIQUIDATION_PRICE)

    def live(self) -> bool:
        return self.registry.is_live(self.eid)

    def encumbered_spent(self) -> bool:
        return self.live() and self.wallet.nf_spend(self.encumbered) in self.registry.spent

    def debt(self) -> int:
        return self.registry.debt_of(self.registry.envelope(self.eid), self.now)


class WinTrace(Record):
    trial: int
    steps: List[str]


class GameResult(Record):
    game: str
    strategy: str
    mutant: Optional[str] = None
    seed: int
    trials: int
    wins: int
    win_traces: List[WinTrace] = []

    @root_validator(skip_on_failure=True)
    def wins_are_traced(cls, values):
        if values["wins"] > values["trials"]:
            raise ValueError("more wins than trials")
        if len(values["win_traces"]) != values["wins"]:
            raise ValueError("every win needs a reproducing trace")
        return values

    @property
    def rate(self) -> float:
        return self.wins / self.trials if self.trials else 0.0


class StatisticalResult(GameResult):
    """A distinguishing game scored against a coin-flip baseline."""

    expected_rate: float = 0.5
    sigma: float = 0.0
    z_score: float = 0.0
    band: str = "within-3σ"

    @classmethod
    def score(cls, result: GameResult, expected_rate: float = 0.5) -> "StatisticalResult":
        sigma = math.sqrt(expected_rate * (1 - expected_rate) / result.trials) if result.trials else 0.0
        deviation = abs(result.rate - expected_rate)
        z_score = deviation / sigma if sigma else (0.0 if deviation == 0 else math.inf)
        band = "within-3σ" if z_score <= 3 else "marginal" if z_score <= 5 else "fail"
        return cls(**result.dict(), expected_rate=expected_rate, sigma=sigma, z_score=z_score, band=band)


class Strategy(ABC):
    name = "strategy"
    # the mutant build this strategy must beat; None when no single check guards it
    detects: Optional[str] = None

    @abstractmethod
    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        """Return the steps of a win, or None."""


def trial_rng(seed: int, game: str, strategy: str, trial: int) -> random.Random:
    return random.Random(f"{seed}/{game}/{strategy}/{trial}")


def run_strategy(
    game: str,
    strategy: Strategy,
    *,
    trials: int,
    seed: int = 0,
    mutant: Optional[str] = None,
    pool_size: int = DEFAULT_POOL_SIZE,
    tree_depth: int = DEFAULT_TREE_DEPTH,
) -> GameResult:
    pool = key_pool(pool_size, seed)
    traces = []
    for trial in track(range(trials), description=f"{game}/{strategy.name}", transient=True):
        rng = trial_rng(seed, game, strategy.name, trial)
        world = GameWorld(rng, mutant=mutant, pool=pool, tree_depth=tree_depth)
        steps = strategy.play(world, rng)
        if steps is not None:
            traces.append(WinTrace(trial=trial, steps=steps))
    result = GameResult(
        game=game,
        strategy=strategy.name,
        mutant=mutant,
        seed=seed,
        trials=trials,
        wins=len(traces),
        win_traces=traces,
    )
    logging.info(f"{game}/{strategy.name}{f' vs {mutant}' if mutant else ''}: {result.wins}/{trials} wins")
    return result


def run_suite(
    game: str, strategies: Sequence[Strategy], *, trials: int, seed: int = 0, mutant: Optional[str] = None, **kwargs
) -> List[GameResult]:
    return [run_strategy(game, s, trials=trials, seed=seed, mutant=mutant, **kwargs) for s in strategies]