"""The envelope registry: marker sets, the envelope table and the four lifecycle paths.

The registry is a serial state machine; each public operation is one
transaction. Operations that reach an interaction (settle, enforce, expire)
follow checks-effects-interactions: the marker moves to ``M_tomb`` before the
caller's hook runs. Any exception, a rejection or a raising hook, rolls the
whole transaction back, clock and tree included.
"""
import copy
import logging
from contextlib import contextmanager
from enum import Enum
from types import MappingProxyType
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Set

from pydantic import Field, conint, validator

from envelope_ledger.conditions import ConditionTree, OracleSnapshot, cond_hash, evaluate
from envelope_ledger.crypto_core import (
    DomainTag,
    FieldElement,
    FieldLike,
    address_to_field,
    field_to_address,
    hash_3,
    normalize_address,
)
from envelope_ledger.data import PPM, SNAPSHOT_SCHEMA, SUITE_ID, Record, canonical_digest
from envelope_ledger.errors import (
    AlreadyEncumbered,
    AttestationInvalid,
    CondHashMismatch,
    ConditionFalse,
    ContractViolation,
    CreateFrozen,
    EnvelopeMismatch,
    InputError,
    InsufficientRepayment,
    IntentHashMismatch,
    InvariantViolation,
    NoteAlreadySpent,
    NoteSpentMarker,
    NotActive,
    NotYetExpired,
    StaleRoot,
    TermsMismatch,
    TimeReversal,
    Unauthorized,
    UnknownIrm,
)
from envelope_ledger.intents import RedistributionIntent, intent_hash
from envelope_ledger.merkle import DEFAULT_DEPTH, MerkleSnapshot, MerkleTree
from envelope_ledger.registry.debt import InterestRateModel, debt_accrued, health_factor
from envelope_ledger.registry.templates import (
    BreakGlassTemplate,
    DeploymentTemplate,
    ParameterSet,
    PendingChange,
    StrictTemplate,
    default_parameters,
)
from envelope_ledger.relations import (
    DEFAULT_CHECKER,
    Attestation,
    EncumberStatement,
    RelationChecker,
    SettleStatement,
    SpendStatement,
)

ANONYMOUS = "0x" + "0" * 40
DEFAULT_LTV_PPM = 800_000
REGISTRY_CHECKS = frozenset({"spend_marker", "debt_check"})


class EnvelopeStatus(str, Enum):
    ACTIVE = "active"
    SETTLED = "settled"
    ENFORCED = "enforced"
    EXPIRED = "expired"

    @property
    def terminal(self) -> bool:
        return self is not EnvelopeStatus.ACTIVE


class EnvelopeTerms(Record):
    """Public terms submitted alongside an encumbrance attestation."""

    deadline: conint(ge=0)
    debt_principal: conint(ge=0, lt=2**128)
    irm_addr: str
    ltv_ppm: conint(gt=0, le=PPM) = DEFAULT_LTV_PPM
    fallback_addr: Optional[str] = None

    _irm = validator("irm_addr", allow_reuse=True)(normalize_address)

    @validator("fallback_addr")
    def normalized_fallback(cls, value):
        return None if value is None else normalize_address(value)


class Envelope(Record):
    eid: int
    cm_note: FieldElement
    nf_encumber: FieldElement
    cond_hash: FieldElement
    intent_hash: FieldElement
    position_commit: FieldElement
    deadline: int
    irm_addr: str
    status: EnvelopeStatus = EnvelopeStatus.ACTIVE
    target_addr: str
    created_at: int
    debt_principal: int
    ltv_ppm: int
    irm_model: InterestRateModel
    fallback_addr: Optional[str] = None
    reencumbered: bool = False


class ReentryAttempt(Record):
    operation: str
    eid: Optional[int] = None
    outcome: str


class Receipt(Record):
    operation: str
    eid: Optional[int] = None
    caller: str
    status: Optional[EnvelopeStatus] = None
    amounts: Dict[str, int] = {}
    markers_read: List[FieldElement] = []
    details: Dict[str, str] = {}
    reentry_attempts: List[ReentryAttempt] = []


Hook = Callable[[Receipt], None]


class RegistrySnapshot(Record):
    schema_id: str = Field(SNAPSHOT_SCHEMA, alias="schema")
    suite: str = SUITE_ID
    template: DeploymentTemplate
    parameters: ParameterSet
    pending_changes: List[PendingChange] = []
    tree: MerkleSnapshot
    active: List[FieldElement]
    tomb: List[FieldElement]
    spent: List[FieldElement]
    spent_markers: List[FieldElement] = []
    envelopes: List[Envelope]
    payouts: Dict[str, int] = {}
    next_eid: int
    clock: int
    create_frozen: bool = False
    checker_disabled: List[str] = []
    disabled_checks: List[str] = []

    class Config:
        allow_population_by_field_name = True


def _sorted(values: Iterable[FieldElement]) -> List[FieldElement]:
    return sorted(values, key=lambda f: f.n)


class EnvelopeRegistry:
    """Single-writer registry. Marker sets are readable, never writable, from outside."""

    _STATE = (
        "_active",
        "_tomb",
        "_spent",
        "_spent_markers",
        "_envelopes",
        "_latest",
        "payouts",
        "pending",
        "parameters",
        "create_frozen",
        "clock",
        "_next_eid",
        "_next_proposal",
    )

    def __init__(
        self,
        *,
        template: Optional[DeploymentTemplate] = None,
        parameters: Optional[ParameterSet] = None,
        tree_depth: int = DEFAULT_DEPTH,
        checker: Optional[RelationChecker] = None,
        disabled_checks: Iterable[str] = (),
    ):
        self.template: DeploymentTemplate = template or StrictTemplate()
        self.parameters = parameters or default_parameters()
        self.checker = checker or DEFAULT_CHECKER
        self.disabled_checks: FrozenSet[str] = frozenset(disabled_checks)
        unknown = self.disabled_checks - REGISTRY_CHECKS
        if unknown:
            raise ContractViolation(f"unknown registry check(s): {sorted(unknown)}")
        self.tree = MerkleTree(depth=tree_depth)
        self._active: Set[FieldElement] = set()
        self._tomb: Set[FieldElement] = set()
        self._spent: Set[FieldElement] = set()
        self._spent_markers: Set[FieldElement] = set()
        self._envelopes: Dict[int, Envelope] = {}
        self._latest: Dict[FieldElement, int] = {}
        self.payouts: Dict[str, int] = {}
        self.pending: List[PendingChange] = []
        self.create_frozen = False
        self.clock = 0
        self._next_eid = 1
        self._next_proposal = 1
        self._interaction_depth = 0
        self._reentries: List[ReentryAttempt] = []

    # Read-only views

    @property
    def m_active(self) -> FrozenSet[FieldElement]:
        return frozenset(self._active)

    @property
    def m_tomb(self) -> FrozenSet[FieldElement]:
        return frozenset(self._tomb)

    @property
    def spent(self) -> FrozenSet[FieldElement]:
        return frozenset(self._spent)

    @property
    def envelopes(self) -> Mapping[int, Envelope]:
        return MappingProxyType(self._envelopes)

    @property
    def root(self) -> FieldElement:
        return self.tree.root

    @property
    def is_mutant(self) -> bool:
        return bool(self.disabled_checks) or self.checker.is_mutant

    def envelope(self, eid: int) -> Envelope:
        try:
            return self._envelopes[eid]
        except KeyError:
            raise NotActive(f"no envelope with eid {eid}") from None

    def status(self, eid: int) -> EnvelopeStatus:
        return self.envelope(eid).status

    def is_live(self, eid: int) -> bool:
        env = self._envelopes.get(eid)
        return env is not None and env.nf_encumber in self._active and self._latest.get(env.nf_encumber) == eid

    # Transaction plumbing

    def _advance(self, now: int) -> None:
        if now < self.clock:
            raise TimeReversal(f"operation at {now} precedes the registry clock {self.clock}")
        self.clock = now

    def advance(self, now: int) -> None:
        self._advance(now)

    def _checkpoint(self) -> Dict[str, object]:
        state = {name: copy.copy(getattr(self, name)) for name in self._STATE}
        state["tree"] = self.tree.copy()
        return state

    def _restore(self, checkpoint: Dict[str, object]) -> None:
        for name, value in checkpoint.items():
            setattr(self, name, value)

    @contextmanager
    def _transaction(self, operation: str, eid: Optional[int] = None) -> Iterator[None]:
        """Run one public operation; any exception restores the state it started from."""
        reentrant = bool(self._interaction_depth)
        if reentrant:
            logging.debug(f"re-entrant {operation} on envelope {eid} during an interaction")
        checkpoint = self._checkpoint()
        try:
            yield
        except Exception as e:
            self._restore(checkpoint)
            if reentrant:
                self._reentries.append(ReentryAttempt(operation=operation, eid=eid, outcome=type(e).__name__))
            raise
        if reentrant:
            self._reentries.append(ReentryAttempt(operation=operation, eid=eid, outcome="ok"))

    def _interact(self, hook: Optional[Hook], receipt: Receipt) -> Receipt:
        if hook is None:
            return receipt
        mark = len(self._reentries)
        self._interaction_depth += 1
        try:
            hook(receipt)
        except Exception:
            logging.info(f"{receipt.operation} of envelope {receipt.eid} reverted by its interaction")
            raise
        finally:
            self._interaction_depth -= 1
            attempts = self._reentries[mark:]
            del self._reentries[mark:]
        return receipt.copy(update={"reentry_attempts": attempts})

    def _verify(self, att: Attestation, st) -> None:
        if not self.checker.verify(att, st):
            raise AttestationInvalid(f"{type(st).__name__} attestation does not verify")

    def _require_current_root(self, root: FieldElement) -> None:
        if root != self.tree.root:
            raise StaleRoot("statement proves membership against a root that is not current")

    def _retire(self, env: Envelope, status: EnvelopeStatus) -> Envelope:
        if env.status.terminal:
            raise InvariantViolation(f"envelope {env.eid} is already {env.status.value}")
        self._active.remove(env.nf_encumber)
        self._tomb.add(env.nf_encumber)
        retired = env.copy(update={"status": status})
        self._envelopes[env.eid] = retired
        return retired

    def _credit(self, address: str, amount: int) -> None:
        if amount:
            self.payouts[address] = self.payouts.get(address, 0) + amount

    # Ledger

    def shield(self, cm: FieldLike) -> int:
        index = self.tree.insert(cm)
        logging.debug(f"note commitment inserted at leaf {index}")
        return index

    def spend(
        self,
        st: SpendStatement,
        att: Attestation,
        *,
        caller: str = ANONYMOUS,
        outputs: Sequence[FieldLike] = (),
    ) -> Receipt:
        with self._transaction("spend"):
            return self._spend("spend", st, att, normalize_address(caller), outputs)

    def drain(self, st: SpendStatement, att: Attestation, *, caller: str = ANONYMOUS) -> Receipt:
        """Break-glass exit for unencumbered notes once ``create`` is frozen."""
        with self._transaction("drain"):
            template = self.template
            if not (isinstance(template, BreakGlassTemplate) and template.drain_frozen and self.create_frozen):
                raise Unauthorized("the drain exit is closed")
            return self._spend("drain", st, att, normalize_address(caller), ())

    def _spend(
        self, operation: str, st: SpendStatement, att: Attestation, caller: str, outputs: Sequence[FieldLike]
    ) -> Receipt:
        self._verify(att, st)
        self._require_current_root(st.tree_root)
        if st.nf_spend in self._spent:
            raise NoteAlreadySpent("spend nullifier already recorded")
        marker = st.nf_encumber_public_input
        if "spend_marker" not in self.disabled_checks and marker in self._active:
            raise NoteSpentMarker("note is encumbered by an active envelope")
        self._spent.add(st.nf_spend)
        self._spent_markers.add(marker)
        for cm in outputs:
            self.tree.insert(cm)
        logging.debug(f"{operation} recorded; {len(outputs)} output(s)")
        return Receipt(operation=operation, caller=caller, markers_read=[marker])

    # Lifecycle

    def create(
        self,
        st: EncumberStatement,
        att: Attestation,
        terms: EnvelopeTerms,
        *,
        now: int,
        caller: str = ANONYMOUS,
        nf_spend: Optional[FieldElement] = None,
    ) -> Receipt:
        with self._transaction("create"):
            caller = normalize_address(caller)
            self._advance(now)
            self.apply_due_changes(now)
            if self.create_frozen:
                raise CreateFrozen("new envelopes are frozen")
            self._verify(att, st)
            self._require_current_root(st.tree_root)
            nf = st.nf_encumber
            if nf in self._active:
                raise AlreadyEncumbered("note already backs an active envelope")
            if nf in self._spent_markers or (nf_spend is not None and nf_spend in self._spent):
                raise NoteAlreadySpent("note has been spent")
            if address_to_field(terms.irm_addr) != st.irm_addr:
                raise TermsMismatch("terms name a different IRM than the attested statement")
            if not self.parameters.knows(terms.irm_addr):
                raise UnknownIrm(f"no interest-rate model registered at {terms.irm_addr}")
            if terms.deadline <= now:
                raise TermsMismatch("deadline must lie in the future")

            reencumbered = nf in self._tomb
            eid = self._next_eid
            self._next_eid += 1
            envelope = Envelope(
                eid=eid,
                cm_note=st.cm_note,
                nf_encumber=nf,
                cond_hash=st.cond_hash,
                intent_hash=st.intent_hash,
                position_commit=st.position_commit,
                deadline=terms.deadline,
                irm_addr=terms.irm_addr,
                target_addr=field_to_address(st.target_addr),
                created_at=now,
                debt_principal=terms.debt_principal,
                ltv_ppm=terms.ltv_ppm,
                irm_model=self.parameters.irm(terms.irm_addr),
                fallback_addr=terms.fallback_addr,
                reencumbered=reencumbered,
            )
            self._tomb.discard(nf)
            self._active.add(nf)
            self._envelopes[eid] = envelope
            self._latest[nf] = eid
            logging.info(f"envelope {eid} created{' (re-encumbrance)' if reencumbered else ''}")
            return Receipt(
                operation="create",
                eid=eid,
                caller=caller,
                status=EnvelopeStatus.ACTIVE,
                amounts={"debt_principal": terms.debt_principal},
                markers_read=[nf],
                details={"reencumbered": str(reencumbered).lower(), "deadline": str(terms.deadline)},
            )

    def settle(
        self,
        eid: int,
        st: SettleStatement,
        att: Attestation,
        *,
        now: int,
        caller: str = ANONYMOUS,
        on_release: Optional[Hook] = None,
    ) -> Receipt:
        with self._transaction("settle", eid):
            caller = normalize_address(caller)
            self._advance(now)
            # 1. proof
            self._verify(att, st)
            if st.eid != eid:
                raise EnvelopeMismatch(f"statement is for envelope {st.eid}, not {eid}")
            self._require_current_root(st.tree_root)
            env = self.envelope(eid)
            # 2. marker
            nf = st.nf_encumber_public_input
            if nf not in self._active:
                raise NotActive("encumbrance marker is not active")
            if nf != env.nf_encumber or not self.is_live(eid):
                raise EnvelopeMismatch(f"marker does not belong to envelope {eid}")
            # 3. debt
            debt = self.debt_of(env, now)
            if "debt_check" not in self.disabled_checks and st.repayment_amount < debt:
                raise InsufficientRepayment(f"repayment {st.repayment_amount} below accrued debt {debt}")
            # 4. effects
            self._retire(env, EnvelopeStatus.SETTLED)
            self._credit(env.target_addr, st.repayment_amount)
            logging.info(f"envelope {eid} settled; repaid {st.repayment_amount} against {debt}")
            receipt = Receipt(
                operation="settle",
                eid=eid,
                caller=caller,
                status=EnvelopeStatus.SETTLED,
                amounts={"repayment": st.repayment_amount, "debt": debt},
                markers_read=[nf],
                details={
                    "repayment_commit": hash_3(eid, st.repayment_amount, DomainTag.REPAY_TAG).hex(),
                    "released_to": env.target_addr,
                },
            )
            # 5. interaction
            return self._interact(on_release, receipt)

    def enforce(
        self,
        eid: int,
        snapshot: OracleSnapshot,
        revealed_tree: ConditionTree,
        revealed_intent: RedistributionIntent,
        *,
        caller: str = ANONYMOUS,
        on_redistribute: Optional[Hook] = None,
    ) -> Receipt:
        with self._transaction("enforce", eid):
            caller = normalize_address(caller)
            now = snapshot.block_timestamp
            self._advance(now)
            env = self.envelope(eid)
            if not self.is_live(eid):
                raise NotActive(f"envelope {eid} is {env.status.value}")
            if cond_hash(revealed_tree) != env.cond_hash:
                raise CondHashMismatch("revealed condition tree does not match the envelope")
            if intent_hash(revealed_intent) != env.intent_hash:
                raise IntentHashMismatch("revealed intent does not match the envelope")
            if not evaluate(revealed_tree, snapshot):
                raise ConditionFalse(f"condition for envelope {eid} is false at {now}")

            debt = self.debt_of(env, now)
            total = min(revealed_intent.max_amount, debt + revealed_intent.keeper_fee)
            fee = min(revealed_intent.keeper_fee, total)
            self._retire(env, EnvelopeStatus.ENFORCED)
            self._credit(caller, fee)
            self._credit(env.target_addr, total - fee)
            logging.info(f"envelope {eid} enforced by {caller}; redistributed {total}")
            receipt = Receipt(
                operation="enforce",
                eid=eid,
                caller=caller,
                status=EnvelopeStatus.ENFORCED,
                amounts={"debt": debt, "keeper_fee": fee, "to_target": total - fee, "redistributed": total},
                markers_read=[env.nf_encumber],
                details={"target_addr": env.target_addr, "action": revealed_intent.action_type.name.lower()},
            )
            return self._interact(on_redistribute, receipt)

    def expire(
        self,
        eid: int,
        *,
        now: int,
        caller: str = ANONYMOUS,
        fallback: Optional[Hook] = None,
    ) -> Receipt:
        with self._transaction("expire", eid):
            caller = normalize_address(caller)
            self._advance(now)
            env = self.envelope(eid)
            if not self.is_live(eid):
                raise NotActive(f"envelope {eid} is {env.status.value}")
            if now <= env.deadline:
                raise NotYetExpired(f"deadline {env.deadline} has not passed at {now}")
            self._retire(env, EnvelopeStatus.EXPIRED)
            logging.info(f"envelope {eid} expired")
            details = {"fallback_addr": env.fallback_addr} if env.fallback_addr else {}
            receipt = Receipt(
                operation="expire",
                eid=eid,
                caller=caller,
                status=EnvelopeStatus.EXPIRED,
                markers_read=[env.nf_encumber],
                details=details,
            )
            return self._interact(fallback, receipt)

    # Debt and health

    def debt_of(self, env: Envelope, now: int) -> int:
        return debt_accrued(env.debt_principal, env.irm_model.rate_ppm(now), env.created_at, now)

    def position_health(self, eid: int, col_nominal: int, price: int, now: int) -> int:
        env = self.envelope(eid)
        return health_factor(col_nominal, price, env.ltv_ppm, self.debt_of(env, now))

    # Deployment template

    def required_approvals(self, operation: str) -> FrozenSet[str]:
        """Keys other than the note owner's that ``operation`` cannot go through without."""
        if operation in ("freeze", "propose_parameter_change"):
            return frozenset(getattr(self.template, "signers", ()))
        return frozenset()

    def propose_parameter_change(
        self, parameters: ParameterSet, approvals: Iterable[str], *, now: int
    ) -> PendingChange:
        with self._transaction("propose_parameter_change"):
            self._advance(now)
            effective_at = self.template.change_effective_at(approvals, now)
            change = PendingChange(
                proposal_id=self._next_proposal, parameters=parameters, proposed_at=now, effective_at=effective_at
            )
            self._next_proposal += 1
            self.pending = self.pending + [change]
        logging.info(f"parameter change {change.proposal_id} queued until {effective_at}")
        return change

    def apply_due_changes(self, now: int) -> List[PendingChange]:
        due = [change for change in self.pending if change.effective_at <= now]
        for change in due:
            self.parameters = change.parameters
            logging.info(f"parameter change {change.proposal_id} applied")
        self.pending = [change for change in self.pending if change.effective_at > now]
        return due

    def freeze_create(self, approvals: Iterable[str]) -> None:
        self.template.authorize_freeze(approvals)
        self.create_frozen = True
        logging.info("create frozen by break-glass quorum")

    # Invariants

    def check_invariants(self) -> List[str]:
        problems = []
        overlap = self._active & self._tomb
        if overlap:
            problems.append(f"{len(overlap)} marker(s) in both M_active and M_tomb")
        for nf in self._active | self._tomb:
            if nf not in self._latest:
                problems.append(f"marker {nf.hex()} has no envelope")
        live_per_marker: Dict[FieldElement, int] = {}
        for env in self._envelopes.values():
            if env.status is EnvelopeStatus.ACTIVE:
                live_per_marker[env.nf_encumber] = live_per_marker.get(env.nf_encumber, 0) + 1
        for nf, count in live_per_marker.items():
            if count > 1:
                problems.append(f"marker {nf.hex()} backs {count} active envelopes")
        for nf, eid in self._latest.items():
            env = self._envelopes[eid]
            if env.status is EnvelopeStatus.ACTIVE and nf not in self._active:
                problems.append(f"active envelope {eid} has no active marker")
            if env.status.terminal and nf not in self._tomb:
                problems.append(f"{env.status.value} envelope {eid} has no tomb marker")
        for env in self._envelopes.values():
            if env.status is EnvelopeStatus.ACTIVE and self._latest.get(env.nf_encumber) != env.eid:
                problems.append(f"active envelope {env.eid} is superseded")
        return problems

    def assert_invariants(self) -> None:
        problems = self.check_invariants()
        if problems:
            raise InvariantViolation("; ".join(problems))

    # Snapshots

    def snapshot(self) -> RegistrySnapshot:
        return RegistrySnapshot(
            template=self.template,
            parameters=self.parameters,
            pending_changes=list(self.pending),
            tree=self.tree.snapshot(),
            active=_sorted(self._active),
            tomb=_sorted(self._tomb),
            spent=_sorted(self._spent),
            spent_markers=_sorted(self._spent_markers),
            envelopes=[self._envelopes[eid] for eid in sorted(self._envelopes)],
            payouts=dict(sorted(self.payouts.items())),
            next_eid=self._next_eid,
            clock=self.clock,
            create_frozen=self.create_frozen,
            checker_disabled=sorted(self.checker.disabled),
            disabled_checks=sorted(self.disabled_checks),
        )

    @classmethod
    def from_snapshot(cls, snapshot: RegistrySnapshot) -> "EnvelopeRegistry":
        if snapshot.suite != SUITE_ID:
            raise InputError(f"snapshot was written under hash suite {snapshot.suite}")
        registry = cls(
            template=snapshot.template,
            parameters=snapshot.parameters,
            tree_depth=snapshot.tree.depth,
            checker=RelationChecker(disabled=snapshot.checker_disabled) if snapshot.checker_disabled else None,
            disabled_checks=snapshot.disabled_checks,
        )
        registry.tree = MerkleTree.from_snapshot(snapshot.tree)
        registry._active = set(snapshot.active)
        registry._tomb = set(snapshot.tomb)
        registry._spent = set(snapshot.spent)
        registry._spent_markers = set(snapshot.spent_markers)
        registry._envelopes = {env.eid: env for env in snapshot.envelopes}
        registry._latest = {env.nf_encumber: env.eid for env in sorted(snapshot.envelopes, key=lambda e: e.eid)}
        registry.payouts = dict(snapshot.payouts)
        registry.pending = list(snapshot.pending_changes)
        registry._next_eid = snapshot.next_eid
        registry.clock = snapshot.clock
        registry.create_frozen = snapshot.create_frozen
        problems = registry.check_invariants()
        if problems:
            raise InputError(f"inconsistent registry snapshot: {'; '.join(problems)}")
        return registry

    def clone(self) -> "EnvelopeRegistry":
        other = copy.copy(self)
        other._restore(self._checkpoint())
        other._reentries = []
        return other

    def fingerprint(self) -> str:
        return canonical_digest(self.snapshot())
