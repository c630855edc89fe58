"""Unlinkability of encumbrance markers.

Two notes of the same owner are committed; the adversary sees both
commitments and the encumbrance nullifier of one of them, and guesses which.
In the forward-and-backward game it also holds the owner key. The marker is a
function of the blinding factor and the commitment only, so the best the
adversary can do without the blinding factor is a coin flip.
"""
import logging
import random
from abc import ABC, abstractmethod
from typing import List, Optional

from rich.progress import track

from envelope_ledger.crypto_core import DomainTag, FieldElement, hash_3
from envelope_ledger.data import Record
from envelope_ledger.games.harness import (
    DEFAULT_POOL_SIZE,
    GameResult,
    StatisticalResult,
    WinTrace,
    key_pool,
    trial_rng,
)
from envelope_ledger.merkle import MerklePath
from envelope_ledger.notes import Note, commit, encumbrance_nullifier
from envelope_ledger.relations import SpendWitness, spend_statement


class AdversaryView(Record):
    """Everything the distinguisher receives. It has no blinding field."""

    sk: Optional[int] = None
    pk_x: Optional[FieldElement] = None
    pk_y: Optional[FieldElement] = None
    cm_0: FieldElement
    cm_1: FieldElement
    nf_b: FieldElement


class Distinguisher(ABC):
    name = "distinguisher"
    expected_rate = 0.5

    @abstractmethod
    def guess(self, view: AdversaryView, rng: random.Random, leaked_r: Optional[FieldElement] = None) -> int:
        ...


class RecomputeDistinguisher(Distinguisher):
    """Recompute the marker from whatever secret the view offers, else fall back to the marker's parity."""

    name = "recompute"

    def guess(self, view: AdversaryView, rng: random.Random, leaked_r: Optional[FieldElement] = None) -> int:
        if view.sk is not None:
            for index, cm in enumerate((view.cm_0, view.cm_1)):
                if hash_3(view.sk, cm, DomainTag.ENCUMBER_TAG) == view.nf_b:
                    return index
        return view.nf_b.n & 1


class BlindingInversion(Distinguisher):
    """Handed the blinding factor of the challenge note, the marker identifies it outright."""

    name = "r-inversion"
    expected_rate = 1.0

    def guess(self, view: AdversaryView, rng: random.Random, leaked_r: Optional[FieldElement] = None) -> int:
        if leaked_r is None:
            return rng.getrandbits(1)
        for index, cm in enumerate((view.cm_0, view.cm_1)):
            if hash_3(leaked_r, cm, DomainTag.ENCUMBER_TAG) == view.nf_b:
                return index
        return rng.getrandbits(1)


def _run(
    game: str,
    distinguisher: Distinguisher,
    *,
    trials: int,
    seed: int,
    disclose_sk: bool,
    pool_size: int,
) -> StatisticalResult:
    pool = key_pool(pool_size, seed)
    traces = []
    for trial in track(range(trials), description=f"{game}/{distinguisher.name}", transient=True):
        rng = trial_rng(seed, game, distinguisher.name, trial)
        owner = rng.choice(pool)
        notes = [Note.new(rng, rng.randint(1, 10**9), owner, 1) for _ in range(2)]
        b = rng.getrandbits(1)
        challenge = notes[b]
        view = AdversaryView(
            sk=owner.sk if disclose_sk else None,
            pk_x=owner.pk_x if disclose_sk else None,
            pk_y=owner.pk_y if disclose_sk else None,
            cm_0=commit(notes[0]),
            cm_1=commit(notes[1]),
            nf_b=encumbrance_nullifier(challenge.r, commit(challenge)),
        )
        leaked = challenge.r if isinstance(distinguisher, BlindingInversion) else None
        guess = distinguisher.guess(view, rng, leaked)
        if guess == b:
            traces.append(WinTrace(trial=trial, steps=[f"challenge bit {b}", f"guessed {guess}"]))
    result = GameResult(
        game=game, strategy=distinguisher.name, seed=seed, trials=trials, wins=len(traces), win_traces=traces
    )
    scored = StatisticalResult.score(result, distinguisher.expected_rate)
    logging.info(
        f"{game}/{distinguisher.name}: rate {scored.rate:.4f} vs {scored.expected_rate} "
        f"(z={scored.z_score:.2f}, {scored.band})"
    )
    return scored


def run_g_fwdback(
    distinguisher: Optional[Distinguisher] = None, *, trials: int, seed: int = 0, pool_size: int = DEFAULT_POOL_SIZE
) -> StatisticalResult:
    """Forward-and-backward unlinkability: the adversary holds the owner key."""
    return _run(
        "fwdback",
        distinguisher or RecomputeDistinguisher(),
        trials=trials,
        seed=seed,
        disclose_sk=True,
        pool_size=pool_size,
    )


def run_eig(
    distinguisher: Optional[Distinguisher] = None, *, trials: int, seed: int = 0, pool_size: int = DEFAULT_POOL_SIZE
) -> StatisticalResult:
    """Encumbrance indistinguishability without the owner key."""
    return _run(
        "eig",
        distinguisher or RecomputeDistinguisher(),
        trials=trials,
        seed=seed,
        disclose_sk=False,
        pool_size=pool_size,
    )


class ObservablesAudit(Record):
    trials: int
    view_fields: List[str]
    blinding_hidden: bool
    sk_invariant: bool
    counterexample: Optional[int] = None

    @property
    def holds(self) -> bool:
        return self.blinding_hidden and self.sk_invariant


def observables_audit(*, trials: int, seed: int = 0, pool_size: int = DEFAULT_POOL_SIZE) -> ObservablesAudit:
    """Check that the marker the ledger publishes does not move when the proving key does.

    For every sampled note, two spend statements are built with different
    secret keys. Their spend nullifiers must differ and their encumbrance
    markers must be identical.
    """
    pool = key_pool(pool_size, seed)
    placeholder = MerklePath(leaf_index=0, siblings=[])
    counterexample = None
    for trial in track(range(trials), description="observables", transient=True):
        rng = trial_rng(seed, "observables", "sk-substitution", trial)
        owner, other = rng.sample(list(pool), 2)
        note = Note.new(rng, rng.randint(1, 10**9), owner, 1)
        statements = [
            spend_statement(SpendWitness.for_note(note, key.sk, placeholder), FieldElement(0)) for key in (owner, other)
        ]
        markers_equal = statements[0].nf_encumber_public_input == statements[1].nf_encumber_public_input
        if not markers_equal or statements[0].nf_spend == statements[1].nf_spend:
            counterexample = trial
            break
    fields = sorted(AdversaryView.__fields__)
    audit = ObservablesAudit(
        trials=trials,
        view_fields=fields,
        blinding_hidden=not any(name in ("r", "r_0", "r_1", "blinding") for name in fields),
        sk_invariant=counterexample is None,
        counterexample=counterexample,
    )
    logging.info(f"observables audit over {trials} notes: {'holds' if audit.holds else 'FAILS'}")
    return audit
