import pytest

from envelope_ledger.assumptions import LEDGER, AssumptionKind, assumption, depends_on
from envelope_ledger.errors import ContractViolation
from envelope_ledger.games import ADVERSARIAL_GAMES, STATISTICAL_GAMES

MODULES = {"crypto_core", "notes", "merkle", "conditions", "relations", "registry", "ledger_models"}


def test_ledger_entries_are_unique_and_well_formed():
    keys = [entry.key for entry in LEDGER]
    assert len(keys) == len(set(keys)) == 8
    for entry in LEDGER:
        assert entry.modules
        assert set(entry.modules) <= MODULES
        assert set(entry.games) <= set(ADVERSARIAL_GAMES) | set(STATISTICAL_GAMES)


def test_only_discrete_log_is_broken_by_quantum_adversaries():
    assert [entry.key for entry in LEDGER if not entry.post_quantum] == ["discrete-log"]


def test_lookup():
    entry = assumption("registry-immutability")
    assert entry.kind is AssumptionKind.DEPLOYMENT
    assert "settle" in entry.games
    with pytest.raises(ContractViolation):
        assumption("trusted-setup")


def test_depends_on():
    keys = {entry.key for entry in depends_on("merkle")}
    assert keys == {"hash-collision-resistance"}
    assert {entry.key for entry in depends_on("conditions")} == {"oracle-integrity"}
    assert depends_on("economics") == []
