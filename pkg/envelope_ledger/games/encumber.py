"""The encumbrance game: spend a note whose encumbrance marker is still active.

The adversary holds the owner key and every note opening. It wins when a
spend of the encumbered note is accepted while the envelope is live.
"""
import random
from typing import List, Optional

from envelope_ledger.crypto_core import random_field_element
from envelope_ledger.errors import ProtocolRejection
from envelope_ledger.games.harness import GameResult, GameWorld, Strategy, run_suite
from envelope_ledger.notes import commit, encumbrance_nullifier

GAME = "encumber"


def _won(world: GameWorld, steps: List[str]) -> Optional[List[str]]:
    return steps if world.encumbered_spent() else None


class HonestSpend(Strategy):
    """Spend the unencumbered note, then try the encumbered one with an honest proof."""

    name = "honest"
    detects = "spend_marker"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        world.wallet.spend(world.funded)
        steps = ["spend funded note"]
        try:
            world.wallet.spend(world.encumbered)
        except ProtocolRejection:
            return None
        return _won(world, steps + ["spend encumbered note"])


class PhantomMarker(Strategy):
    """Attack A: put a fresh random value where the encumbrance marker belongs."""

    name = "attack-a"
    detects = "spend.binding"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        phantom = random_field_element(rng)
        try:
            st, att = world.wallet.prove_spend(world.encumbered, nf_encumber_public_input=phantom)
            world.registry.spend(st, att, caller=world.wallet.address)
        except ProtocolRejection:
            return None
        return _won(world, [f"spend encumbered note against phantom marker {phantom.hex()}"])


class BorrowedMarker(Strategy):
    """Attack B: present the inactive marker of another note the adversary owns."""

    name = "attack-b"
    detects = "spend.binding"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        borrowed = encumbrance_nullifier(world.funded.r, commit(world.funded))
        try:
            st, att = world.wallet.prove_spend(world.encumbered, nf_encumber_public_input=borrowed)
            world.registry.spend(st, att, caller=world.wallet.address)
        except ProtocolRejection:
            return None
        return _won(world, ["spend encumbered note against the funded note's marker"])


class ReplaySpend(Strategy):
    """Prove a spend while the note is still free, encumber it, then submit the old proof."""

    name = "replay"
    detects = "spend_marker"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        st, att = world.wallet.prove_spend(world.funded)
        intent = world.intent.copy(update={"keeper_fee": 0, "max_amount": world.funded.value})
        world.wallet.encumber(world.funded, world.tree, intent, world.terms, now=world.now)
        try:
            world.registry.spend(st, att, caller=world.wallet.address)
        except ProtocolRejection:
            return None
        funded_live = any(
            world.registry.is_live(eid) and env.cm_note == commit(world.funded)
            for eid, env in world.registry.envelopes.items()
        )
        if not funded_live:
            return None
        return ["prove spend of funded note", "encumber funded note", "replay the earlier spend proof"]


class MarkerRace(Strategy):
    """Spend from inside a settle interaction once the marker has moved, then revert the settle."""

    name = "marker-race"
    detects = "spend_marker"

    def play(self, world: GameWorld, rng: random.Random) -> Optional[List[str]]:
        steps: List[str] = []

        def spend_then_revert(receipt) -> None:
            try:
                world.wallet.spend(world.encumbered)
                steps.append("spend encumbered note inside the release interaction")
            except ProtocolRejection:
                pass
            raise RuntimeError("revert settle")

        try:
            world.wallet.settle(
                world.encumbered, world.eid, world.debt(), now=world.now, on_release=spend_then_revert
            )
        except RuntimeError:
            pass
        if world.encumbered_spent():
            return steps + ["settle reverted with the spend kept"]
        # no hook: try the plain spend once the settle is rolled back
        try:
            world.wallet.spend(world.encumbered)
        except ProtocolRejection:
            return None
        return _won(world, steps + ["settle reverted", "spend encumbered note"])


STRATEGIES = (HonestSpend(), PhantomMarker(), BorrowedMarker(), ReplaySpend(), MarkerRace())


def run_g_encumber(
    strategies=STRATEGIES, *, trials: int, seed: int = 0, mutant: Optional[str] = None, **kwargs
) -> List[GameResult]:
    return run_suite(GAME, strategies, trials=trials, seed=seed, mutant=mutant, **kwargs)
