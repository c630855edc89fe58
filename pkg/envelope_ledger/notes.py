"""Notes, note commitments, and the two nullifier namespaces.

A spend nullifier is keyed by the owner's secret key. An encumbrance nullifier
is keyed by the note's blinding factor and carries no key material, so a key
compromise reveals nothing about which note an encumbrance marker belongs to.
"""
import random
from typing import Optional

from envelope_ledger.crypto_core import (
    DomainTag,
    FieldElement,
    FieldLike,
    KeyPair,
    hash_3,
    hash_4,
    random_field_element,
)
from envelope_ledger.data import Record
from envelope_ledger.errors import ContractViolation, DegenerateKey, ZeroBlinding, ZeroValue

NoteCommitment = FieldElement
SpendNullifier = FieldElement
EncumbranceNullifier = FieldElement


class Note(Record):
    v: FieldElement
    r: FieldElement
    pk_x: FieldElement
    pk_y: FieldElement
    aid: FieldElement

    @classmethod
    def new(cls, rng: random.Random, value: int, owner: KeyPair, aid: FieldLike) -> "Note":
        return cls(
            v=FieldElement(value),
            r=random_field_element(rng),
            pk_x=owner.pk_x,
            pk_y=owner.pk_y,
            aid=FieldElement(aid),
        )

    @property
    def value(self) -> int:
        return self.v.n


class NoteView(Record):
    """What an observer learns about a note. ``r`` only for the owner role."""

    cm: FieldElement
    pk_x: FieldElement
    aid: FieldElement
    r: Optional[FieldElement] = None


def commit(note: Note) -> NoteCommitment:
    if note.v == 0:
        raise ZeroValue("note value must be positive")
    if note.r == 0:
        raise ZeroBlinding("note blinding factor must be nonzero")
    return hash_4(note.v, note.r, note.pk_x, note.aid)


def note_view(note: Note, *, reveal_blinding: bool = False) -> NoteView:
    return NoteView(
        cm=commit(note),
        pk_x=note.pk_x,
        aid=note.aid,
        r=note.r if reveal_blinding else None,
    )


def spend_nullifier(sk: FieldLike, cm: NoteCommitment) -> SpendNullifier:
    if int(sk) == 0:
        raise DegenerateKey("spend nullifier needs a nonzero key")
    return hash_3(sk, cm, DomainTag.SPEND_TAG)


def encumbrance_nullifier(r: FieldLike, cm: NoteCommitment) -> EncumbranceNullifier:
    if r == 0:
        raise ZeroBlinding("encumbrance nullifier needs a nonzero blinding factor")
    return hash_3(r, cm, DomainTag.ENCUMBER_TAG)


def position_commit(col_nominal: FieldLike, debt_principal: FieldLike, cm: NoteCommitment) -> FieldElement:
    return hash_3(col_nominal, debt_principal, cm)


def blinded_position_commit(
    col_nominal: FieldLike, debt_principal: FieldLike, cm: NoteCommitment, col_rand: FieldLike
) -> FieldElement:
    if col_rand == 0:
        raise ZeroBlinding("position blinding must be nonzero")
    return hash_4(col_nominal, debt_principal, cm, col_rand)


class PositionOpening(Record):
    col_nominal: int
    debt_principal: int
    col_rand: Optional[FieldElement] = None

    @classmethod
    def for_note(
        cls,
        note: Note,
        debt_principal: int,
        *,
        col_nominal: Optional[int] = None,
        rng: Optional[random.Random] = None,
    ) -> "PositionOpening":
        nominal = note.value if col_nominal is None else col_nominal
        if nominal != note.value:
            raise ContractViolation("partial encumbrance is not supported; col_nominal must equal v")
        col_rand = random_field_element(rng) if rng is not None else None
        return cls(col_nominal=nominal, debt_principal=debt_principal, col_rand=col_rand)

    @property
    def blinded(self) -> bool:
        return self.col_rand is not None

    def commitment(self, cm: NoteCommitment) -> FieldElement:
        if self.col_rand is None:
            return position_commit(self.col_nominal, self.debt_principal, cm)
        return blinded_position_commit(self.col_nominal, self.debt_principal, cm, self.col_rand)
