"""The agent-key game.

An automated agent holds its own key, chooses the public inputs of an
encumbrance, and has the owner's prover sign whatever it asks for. It then
calls enforce itself. It wins if a redistribution pays out more than the note
is worth or pays anything beyond the keeper fee to an address that is not the
intent's target.
"""
import random
from typing import List, Optional

from envelope_ledger.conditions import cond_hash
from envelope_ledger.crypto_core import address_to_field, derive_address
from envelope_ledger.errors import ProtocolRejection
from envelope_ledger.games.harness import GameResult, GameWorld, Strategy, run_suite
from envelope_ledger.notes import PositionOpening
from envelope_ledger.registry import EnvelopeTerms, Receipt, RedistributionIntent
from envelope_ledger.relations import EncumberWitness, encumber_statement

GAME = "agent"


def _agent(rng: random.Random) -> str:
    return derive_address(f"agent/{rng.getrandbits(64)}")


class OverAmount(Strategy):
    """Commit an intent whose cap and debt exceed the note's value, then enforce it."""

    name = "over-amount"
    detects = "encumber.9"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        agent = _agent(rng)
        note, value = world.funded, world.funded.value
        intent = RedistributionIntent(
            action_type=world.intent.action_type,
            target_addr=world.lender,
            keeper_fee=world.intent.keeper_fee,
            max_amount=3 * value,
        )
        terms = world.terms.copy(update={"debt_principal": 2 * value})
        try:
            receipt = world.wallet.encumber(note, world.tree, intent, terms, now=world.now)
            enforced = world.registry.enforce(receipt.eid, world.triggered, world.tree, intent, caller=agent)
        except ProtocolRejection:
            return None
        redistributed = enforced.amounts["redistributed"]
        if redistributed <= value:
            return None
        return [f"encumber with max_amount {3 * value} on a note of {value}", f"enforce redistributing {redistributed}"]


class WrongTarget(Strategy):
    """Prove an encumbrance whose target public input names the agent instead of the intent's target."""

    name = "wrong-target"
    detects = "encumber.13"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        agent = _agent(rng)
        registry, wallet, note = world.registry, world.wallet, world.funded
        terms: EnvelopeTerms = world.terms
        opening = PositionOpening.for_note(note, terms.debt_principal)
        witness = EncumberWitness.for_note(note, wallet.keypair.sk, wallet.path(note), opening)
        honest = encumber_statement(
            witness, world.intent, cond_hash=cond_hash(world.tree), irm_addr=terms.irm_addr, tree_root=registry.root
        )
        st = honest.copy(update={"target_addr": address_to_field(agent)})
        try:
            att = registry.checker.check_encumber(st, witness, world.intent)
            receipt = registry.create(st, att, terms, now=world.now, caller=agent, nf_spend=wallet.nf_spend(note))
            enforced = registry.enforce(receipt.eid, world.triggered, world.tree, world.intent, caller=agent)
        except ProtocolRejection:
            return None
        return self._diverted(world, enforced, agent)

    @staticmethod
    def _diverted(world: GameWorld, enforced: Receipt, agent: str) -> Optional[List[str]]:
        intent: RedistributionIntent = world.intent
        if world.registry.payouts.get(agent, 0) <= intent.keeper_fee:
            return None
        return [
            f"prove target public input {agent} against an intent targeting {intent.target_addr}",
            f"enforce paying {enforced.amounts['to_target']} to {agent}",
        ]


STRATEGIES = (OverAmount(), WrongTarget())


def run_g_agent_key(
    strategies=STRATEGIES, *, trials: int, seed: int = 0, mutant: Optional[str] = None, **kwargs
) -> List[GameResult]:
    return run_suite(GAME, strategies, trials=trials, seed=seed, mutant=mutant, **kwargs)
