"""The settle game: release an encumbrance without a proper exit.

The adversary is not given the owner key or the note blinding. It wins by
settling without owner authorization (W1), settling below the accrued debt
(W2), or lifting the encumbrance through anything other than settle, enforce
or expire (W3).
"""
import random
from typing import Callable, List, Optional, Tuple

from envelope_ledger.crypto_core import random_field_element
from envelope_ledger.errors import ProtocolRejection
from envelope_ledger.games.harness import ADMIN, GameResult, GameWorld, Strategy, run_suite
from envelope_ledger.intents import RedistributionIntent
from envelope_ledger.registry import AdminRegistry, EnvelopeStatus
from envelope_ledger.relations import SettleWitness, SpendWitness, settle_statement, spend_statement

GAME = "settle"


def _settle_with(world: GameWorld, witness: SettleWitness, repayment: int, caller: str) -> bool:
    registry = world.registry
    try:
        st = settle_statement(
            witness,
            eid=world.eid,
            tree_root=registry.root,
            repayment_amount=repayment,
            nf_encumber_public_input=registry.envelope(world.eid).nf_encumber,
        )
        att = registry.checker.check_settle(st, witness)
        registry.settle(world.eid, st, att, now=world.now, caller=caller)
    except ProtocolRejection:
        return False
    return registry.status(world.eid) is EnvelopeStatus.SETTLED


class BlindForge(Strategy):
    """W1 without the opening: guess a blinding factor and prove with the adversary's own key."""

    name = "forge-blind"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        adversary = world.bystander_wallet.keypair
        guess = world.encumbered.copy(update={"r": random_field_element(rng)})
        path = world.wallet.path(world.encumbered)
        witness = SettleWitness.for_note(guess, adversary.sk, path)
        if not _settle_with(world, witness, world.debt(), world.bystander_wallet.address):
            return None
        return ["guess the blinding factor", "settle with the adversary key"]


class OpeningLeak(Strategy):
    """W1 with a leaked note opening but no owner key."""

    name = "opening-leak"
    detects = "settle.ownership"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        adversary = world.bystander_wallet.keypair
        witness = SettleWitness.for_note(world.encumbered, adversary.sk, world.wallet.path(world.encumbered))
        if not _settle_with(world, witness, world.debt(), world.bystander_wallet.address):
            return None
        return ["learn the note opening", "settle with the adversary key in place of the owner key"]


class Underpay(Strategy):
    """W2: get an owner-proven settle for one unit less than the accrued debt."""

    name = "underpay"
    detects = "debt_check"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        debt = world.debt()
        try:
            world.wallet.settle(world.encumbered, world.eid, debt - 1, now=world.now)
        except ProtocolRejection:
            return None
        if world.registry.status(world.eid) is not EnvelopeStatus.SETTLED:
            return None
        return [f"settle with repayment {debt - 1} against debt {debt}"]


class NonExitSearch(Strategy):
    """W3: try every operation that is not settle, enforce or expire-after-deadline."""

    name = "non-exit-search"
    detects = "admin"

    def _attempts(self, world: GameWorld, rng: random.Random) -> List[Tuple[str, Callable[[], object]]]:
        registry = world.registry
        adversary = world.bystander_wallet
        note = world.encumbered

        def foreign_spend():
            witness = SpendWitness.for_note(note, adversary.keypair.sk, world.wallet.path(note))
            st = spend_statement(witness, registry.root)
            return registry.spend(st, registry.checker.check_spend(st, witness), caller=adversary.address)

        greedy = RedistributionIntent(
            action_type=world.intent.action_type,
            target_addr=adversary.address,
            keeper_fee=world.intent.keeper_fee,
            max_amount=world.intent.max_amount,
        )
        attempts: List[Tuple[str, Callable[[], object]]] = [
            ("spend the encumbered note with the adversary key", foreign_spend),
            ("expire before the deadline", lambda: registry.expire(world.eid, now=world.now, caller=adversary.address)),
            (
                "enforce with the condition false",
                lambda: registry.enforce(
                    world.eid, world.snapshot(10**9), world.tree, world.intent, caller=adversary.address
                ),
            ),
            (
                "enforce with a substituted intent",
                lambda: registry.enforce(world.eid, world.triggered, world.tree, greedy, caller=adversary.address),
            ),
        ]
        if isinstance(registry, AdminRegistry):
            attempts.append(("admin release", lambda: registry.admin_release(world.eid, caller=ADMIN)))
        rng.shuffle(attempts)
        return attempts

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        steps: List[str] = []
        for label, attempt in self._attempts(world, rng):
            try:
                attempt()
            except ProtocolRejection:
                continue
            steps.append(label)
            if not world.live():
                return steps
        return None


STRATEGIES = (BlindForge(), OpeningLeak(), Underpay(), NonExitSearch())


def run_g_settle(
    strategies=STRATEGIES, *, trials: int, seed: int = 0, mutant: Optional[str] = None, **kwargs
) -> List[GameResult]:
    return run_suite(GAME, strategies, trials=trials, seed=seed, mutant=mutant, **kwargs)
