"""The Encumbrance, Spend and Settle relations and the attestation layer.

Proofs are not generated here. A ``RelationChecker`` evaluates every constraint
of a relation on a statement and its witness and, when all hold, seals an
``Attestation`` for the statement digest. The seal is an HMAC under a key that
never leaves this module, so the only way to obtain a verifiable attestation is
a successful ``check_*`` call. That is how the simulator models knowledge
soundness. Attestations carry the statement digest and nothing of the witness,
which is how it models zero knowledge.

A checker built with ``disabled`` constraint names skips them. Such mutant
builds exist so the security games can show they detect each missing check.
"""
import hashlib
import hmac
import secrets
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Type, Union

from pydantic import conint

from envelope_ledger.crypto_core import (
    GRUMPKIN_ORDER,
    DomainTag,
    FieldElement,
    address_to_field,
    derive_pubkey,
    fold_hash,
    hash_2,
    hash_3,
    hash_4,
)
from envelope_ledger.data import Record
from envelope_ledger.errors import (
    Constraint1Violation,
    Constraint2Violation,
    Constraint3Violation,
    Constraint4Violation,
    Constraint6Violation,
    Constraint7Violation,
    Constraint8Violation,
    Constraint9Violation,
    Constraint10Violation,
    Constraint11Violation,
    Constraint12Violation,
    Constraint13Violation,
    ContractViolation,
    MembershipViolation,
    NullifierBindingViolation,
    OwnershipViolation,
    PubkeyViolation,
    RangeViolation,
    RelationViolation,
    SpendNullifierViolation,
)
from envelope_ledger.intents import RedistributionIntent, intent_hash
from envelope_ledger.merkle import MerklePath, verify_path
from envelope_ledger.notes import Note, PositionOpening

CHECKER_VERSION = "relation-checker/v1"
REPAYMENT_BOUND = 2**128

_SEAL_KEY = secrets.token_bytes(32)


class AttestationKind(str, Enum):
    ENCUMBER = "encumber"
    SPEND = "spend"
    SETTLE = "settle"


KIND_CODES = {AttestationKind.ENCUMBER: 1, AttestationKind.SPEND: 2, AttestationKind.SETTLE: 3}


class EncumberStatement(Record):
    cm_note: FieldElement
    nf_encumber: FieldElement
    cond_hash: FieldElement
    intent_hash: FieldElement
    position_commit: FieldElement
    tree_root: FieldElement
    irm_addr_commit: FieldElement
    irm_addr: FieldElement
    target_addr: FieldElement

    def public_inputs(self) -> List[FieldElement]:
        return [
            self.cm_note,
            self.nf_encumber,
            self.cond_hash,
            self.intent_hash,
            self.position_commit,
            self.tree_root,
            self.irm_addr_commit,
            self.irm_addr,
            self.target_addr,
        ]


class NoteWitness(Record):
    v: FieldElement
    r: FieldElement
    aid: FieldElement
    pk_x: FieldElement
    pk_y: FieldElement
    owner_sk: int
    merkle_path: MerklePath

    @property
    def cm(self) -> FieldElement:
        # no zero checks: degenerate witnesses must reach the constraints
        return hash_4(self.v, self.r, self.pk_x, self.aid)


class EncumberWitness(NoteWitness):
    col_nominal: int
    debt_principal: int
    col_rand: Optional[FieldElement] = None

    @classmethod
    def for_note(cls, note: Note, owner_sk: int, path: MerklePath, opening: PositionOpening) -> "EncumberWitness":
        return cls(
            **_note_fields(note),
            owner_sk=owner_sk,
            merkle_path=path,
            col_nominal=opening.col_nominal,
            debt_principal=opening.debt_principal,
            col_rand=opening.col_rand,
        )

    def position(self, cm: FieldElement) -> FieldElement:
        if self.col_rand is None:
            return hash_3(self.col_nominal, self.debt_principal, cm)
        return hash_4(self.col_nominal, self.debt_principal, cm, self.col_rand)


class SpendStatement(Record):
    nf_spend: FieldElement
    tree_root: FieldElement
    nf_encumber_public_input: FieldElement

    def public_inputs(self) -> List[FieldElement]:
        return [self.nf_spend, self.tree_root, self.nf_encumber_public_input]


class SpendWitness(NoteWitness):
    @classmethod
    def for_note(cls, note: Note, owner_sk: int, path: MerklePath) -> "SpendWitness":
        return cls(**_note_fields(note), owner_sk=owner_sk, merkle_path=path)


class SettleStatement(Record):
    eid: conint(ge=0)
    nf_encumber_public_input: FieldElement
    tree_root: FieldElement
    repayment_amount: conint(ge=0)

    def public_inputs(self) -> List[FieldElement]:
        return [
            FieldElement(self.eid),
            self.nf_encumber_public_input,
            self.tree_root,
            FieldElement(self.repayment_amount),
        ]


class SettleWitness(NoteWitness):
    @classmethod
    def for_note(cls, note: Note, owner_sk: int, path: MerklePath) -> "SettleWitness":
        return cls(**_note_fields(note), owner_sk=owner_sk, merkle_path=path)


Statement = Union[EncumberStatement, SpendStatement, SettleStatement]


def _note_fields(note: Note) -> Dict[str, FieldElement]:
    return dict(v=note.v, r=note.r, aid=note.aid, pk_x=note.pk_x, pk_y=note.pk_y)


def statement_kind(st: Statement) -> AttestationKind:
    if isinstance(st, EncumberStatement):
        return AttestationKind.ENCUMBER
    if isinstance(st, SpendStatement):
        return AttestationKind.SPEND
    if isinstance(st, SettleStatement):
        return AttestationKind.SETTLE
    raise ContractViolation(f"not a statement: {type(st).__name__}")


def statement_digest(st: Statement) -> FieldElement:
    kind = statement_kind(st)
    return fold_hash([KIND_CODES[kind], *st.public_inputs()], DomainTag.CM_TAG)


def _seal(kind: AttestationKind, digest: FieldElement, version: str) -> str:
    message = f"{kind.value}|{digest.hex()}|{version}".encode()
    return hmac.new(_SEAL_KEY, message, hashlib.sha256).hexdigest()


class Attestation(Record):
    kind: AttestationKind
    statement_digest: FieldElement
    checker_version: str
    seal: str

    def public_view(self) -> Dict[str, str]:
        return {"kind": self.kind.value, "digest": self.statement_digest.hex()}


ENCUMBER_ERRORS: Dict[str, Type[RelationViolation]] = {
    "1": Constraint1Violation,
    "2": Constraint2Violation,
    "3": Constraint3Violation,
    "4": Constraint4Violation,
    "6": Constraint6Violation,
    "7": Constraint7Violation,
    "8": Constraint8Violation,
    "9": Constraint9Violation,
    "10": Constraint10Violation,
    "11": Constraint11Violation,
    "12": Constraint12Violation,
    "13": Constraint13Violation,
}
SPEND_ERRORS: Dict[str, Type[RelationViolation]] = {
    "pubkey": PubkeyViolation,
    "nullifier": SpendNullifierViolation,
    "membership": MembershipViolation,
    "binding": NullifierBindingViolation,
}
SETTLE_ERRORS: Dict[str, Type[RelationViolation]] = {
    "ownership": OwnershipViolation,
    "membership": MembershipViolation,
    "binding": NullifierBindingViolation,
    "range": RangeViolation,
}
CONSTRAINT_NAMES: FrozenSet[str] = frozenset(
    [f"encumber.{name}" for name in ENCUMBER_ERRORS]
    + [f"spend.{name}" for name in SPEND_ERRORS]
    + [f"settle.{name}" for name in SETTLE_ERRORS]
)


def _pubkey_matches(sk: int, pk_x: FieldElement, pk_y: FieldElement) -> bool:
    if not 0 < sk < GRUMPKIN_ORDER:
        return False
    x, y = derive_pubkey(sk)
    return x == pk_x and y == pk_y


class RelationChecker:
    def __init__(self, *, disabled: Iterable[str] = ()):
        self.disabled: FrozenSet[str] = frozenset(disabled)
        unknown = self.disabled - CONSTRAINT_NAMES
        if unknown:
            raise ContractViolation(f"unknown constraint(s): {sorted(unknown)}")
        suffix = ",".join(sorted(self.disabled))
        self.version = CHECKER_VERSION if not suffix else f"{CHECKER_VERSION}-mutant:{suffix}"

    @property
    def is_mutant(self) -> bool:
        return bool(self.disabled)

    def _collector(self, relation: str):
        found: List[str] = []

        def check(name: str, holds: bool) -> None:
            if not holds and f"{relation}.{name}" not in self.disabled:
                found.append(name)

        return found, check

    def violations_encumber(
        self, st: EncumberStatement, w: EncumberWitness, intent: RedistributionIntent
    ) -> List[str]:
        found, check = self._collector("encumber")
        v = w.v.n
        check("1", w.cm == st.cm_note)
        if w.owner_sk != 0:
            check("2", _pubkey_matches(w.owner_sk, w.pk_x, w.pk_y))
        check("3", hash_3(w.r, st.cm_note, DomainTag.ENCUMBER_TAG) == st.nf_encumber)
        check("4", verify_path(st.tree_root, st.cm_note, w.merkle_path))
        check("6", intent_hash(intent) == st.intent_hash)
        check("7", (w.col_rand is None or w.col_rand != 0) and w.position(st.cm_note) == st.position_commit)
        check("8", FieldElement(w.col_nominal) == w.v)
        check("9", v > 0 and intent.max_amount <= v and intent.keeper_fee < intent.max_amount)
        check("10", hash_2(st.irm_addr, DomainTag.PARAMS_TAG) == st.irm_addr_commit)
        check("11", w.owner_sk != 0)
        check("12", w.r != 0)
        check("13", address_to_field(intent.target_addr) == st.target_addr)
        return found

    def violations_spend(self, st: SpendStatement, w: SpendWitness) -> List[str]:
        found, check = self._collector("spend")
        cm = w.cm
        check("pubkey", _pubkey_matches(w.owner_sk, w.pk_x, w.pk_y))
        check("nullifier", w.owner_sk != 0 and hash_3(w.owner_sk, cm, DomainTag.SPEND_TAG) == st.nf_spend)
        check("membership", verify_path(st.tree_root, cm, w.merkle_path))
        check("binding", hash_3(w.r, cm, DomainTag.ENCUMBER_TAG) == st.nf_encumber_public_input)
        return found

    def violations_settle(self, st: SettleStatement, w: SettleWitness) -> List[str]:
        found, check = self._collector("settle")
        cm = w.cm
        check("ownership", _pubkey_matches(w.owner_sk, w.pk_x, w.pk_y))
        check("membership", verify_path(st.tree_root, cm, w.merkle_path))
        check("binding", hash_3(w.r, cm, DomainTag.ENCUMBER_TAG) == st.nf_encumber_public_input)
        check("range", st.repayment_amount < REPAYMENT_BOUND)
        return found

    def _issue(self, st: Statement, violations: List[str], errors: Dict[str, Type[RelationViolation]]) -> Attestation:
        if violations:
            first = violations[0]
            raise errors[first](f"{statement_kind(st).value} constraint {first} violated", violations=violations)
        kind = statement_kind(st)
        digest = statement_digest(st)
        return Attestation(
            kind=kind,
            statement_digest=digest,
            checker_version=self.version,
            seal=_seal(kind, digest, self.version),
        )

    def check_encumber(self, st: EncumberStatement, w: EncumberWitness, intent: RedistributionIntent) -> Attestation:
        return self._issue(st, self.violations_encumber(st, w, intent), ENCUMBER_ERRORS)

    def check_spend(self, st: SpendStatement, w: SpendWitness) -> Attestation:
        return self._issue(st, self.violations_spend(st, w), SPEND_ERRORS)

    def check_settle(self, st: SettleStatement, w: SettleWitness) -> Attestation:
        return self._issue(st, self.violations_settle(st, w), SETTLE_ERRORS)

    def verify(self, att: Attestation, st: Statement) -> bool:
        if not isinstance(att, Attestation):
            return False
        try:
            kind = statement_kind(st)
        except ContractViolation:
            return False
        if att.kind != kind or att.checker_version != self.version:
            return False
        if att.statement_digest != statement_digest(st):
            return False
        return hmac.compare_digest(att.seal, _seal(att.kind, att.statement_digest, att.checker_version))


DEFAULT_CHECKER = RelationChecker()


def check_encumber(st: EncumberStatement, w: EncumberWitness, intent: RedistributionIntent) -> Attestation:
    return DEFAULT_CHECKER.check_encumber(st, w, intent)


def check_spend(st: SpendStatement, w: SpendWitness) -> Attestation:
    return DEFAULT_CHECKER.check_spend(st, w)


def check_settle(st: SettleStatement, w: SettleWitness) -> Attestation:
    return DEFAULT_CHECKER.check_settle(st, w)


def verify(att: Attestation, st: Statement) -> bool:
    return DEFAULT_CHECKER.verify(att, st)


# Honest statement builders


def encumber_statement(
    w: EncumberWitness,
    intent: RedistributionIntent,
    *,
    cond_hash: FieldElement,
    irm_addr: str,
    tree_root: FieldElement,
) -> EncumberStatement:
    cm = w.cm
    irm = address_to_field(irm_addr)
    return EncumberStatement(
        cm_note=cm,
        nf_encumber=hash_3(w.r, cm, DomainTag.ENCUMBER_TAG),
        cond_hash=cond_hash,
        intent_hash=intent_hash(intent),
        position_commit=w.position(cm),
        tree_root=tree_root,
        irm_addr_commit=hash_2(irm, DomainTag.PARAMS_TAG),
        irm_addr=irm,
        target_addr=address_to_field(intent.target_addr),
    )


def spend_statement(
    w: SpendWitness,
    tree_root: FieldElement,
    nf_encumber_public_input: Optional[FieldElement] = None,
) -> SpendStatement:
    cm = w.cm
    if nf_encumber_public_input is None:
        nf_encumber_public_input = hash_3(w.r, cm, DomainTag.ENCUMBER_TAG)
    return SpendStatement(
        nf_spend=hash_3(w.owner_sk, cm, DomainTag.SPEND_TAG),
        tree_root=tree_root,
        nf_encumber_public_input=nf_encumber_public_input,
    )


def settle_statement(
    w: SettleWitness,
    *,
    eid: int,
    tree_root: FieldElement,
    repayment_amount: int,
    nf_encumber_public_input: Optional[FieldElement] = None,
) -> SettleStatement:
    if nf_encumber_public_input is None:
        nf_encumber_public_input = hash_3(w.r, w.cm, DomainTag.ENCUMBER_TAG)
    return SettleStatement(
        eid=eid,
        nf_encumber_public_input=nf_encumber_public_input,
        tree_root=tree_root,
        repayment_amount=repayment_amount,
    )

