import random

import pytest

from envelope_ledger.crypto_core import DomainTag, FieldElement, hash_3, hash_4
from envelope_ledger.errors import ContractViolation, DegenerateKey, ZeroBlinding, ZeroValue
from envelope_ledger.notes import (
    Note,
    PositionOpening,
    blinded_position_commit,
    commit,
    encumbrance_nullifier,
    note_view,
    position_commit,
    spend_nullifier,
)


@pytest.fixture
def note(owner_key):
    return Note.new(random.Random(5), 10_000, owner_key, 1)


def test_commitment_binds_value_blinding_key_and_asset(note):
    assert commit(note) == hash_4(note.v, note.r, note.pk_x, note.aid)
    assert commit(note) != commit(note.copy(update={"v": FieldElement(10_001)}))
    assert commit(note) != commit(note.copy(update={"aid": FieldElement(2)}))


def test_zero_value_and_zero_blinding_are_refused(note):
    with pytest.raises(ZeroValue):
        commit(note.copy(update={"v": FieldElement(0)}))
    with pytest.raises(ZeroBlinding):
        commit(note.copy(update={"r": FieldElement(0)}))


def test_nullifier_namespaces_are_disjoint(note, owner_key):
    cm = commit(note)
    nf_spend = spend_nullifier(owner_key.sk, cm)
    nf_enc = encumbrance_nullifier(note.r, cm)
    assert nf_spend == hash_3(owner_key.sk, cm, DomainTag.SPEND_TAG)
    assert nf_enc == hash_3(note.r, cm, DomainTag.ENCUMBER_TAG)
    assert nf_spend != nf_enc


def test_degenerate_nullifier_inputs(note):
    with pytest.raises(DegenerateKey):
        spend_nullifier(0, commit(note))
    with pytest.raises(ZeroBlinding):
        encumbrance_nullifier(0, commit(note))


def test_note_view_hides_blinding_by_default(note):
    assert note_view(note).r is None
    assert note_view(note, reveal_blinding=True).r == note.r


def test_position_commitments(note):
    cm = commit(note)
    plain = PositionOpening.for_note(note, 6_000)
    assert not plain.blinded
    assert plain.commitment(cm) == position_commit(10_000, 6_000, cm)
    blinded = PositionOpening.for_note(note, 6_000, rng=random.Random(1))
    assert blinded.blinded
    assert blinded.commitment(cm) == blinded_position_commit(10_000, 6_000, cm, blinded.col_rand)
    assert blinded.commitment(cm) != plain.commitment(cm)
    with pytest.raises(ZeroBlinding):
        blinded_position_commit(10_000, 6_000, cm, 0)


def test_partial_encumbrance_is_refused(note):
    with pytest.raises(ContractViolation):
        PositionOpening.for_note(note, 6_000, col_nominal=5_000)
