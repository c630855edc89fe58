"""Scripted lifecycle scenarios.

A scenario declares actors, notes, condition trees, intents and an oracle
timeline, then a script of timestamped operations. The runner applies the
script serially to a fresh registry, checks the registry invariants after
every step, and produces a report that is byte-identical across runs with the
same seed apart from its ``generated_at`` header.
"""
import datetime
import logging
import random
from pathlib import Path
from typing import Dict, List, Literal, Optional, Set, Union

from pydantic import Field, conint, root_validator

from envelope_ledger.conditions import ConditionTree, OracleSnapshot, PriceLeaf, iter_leaves
from envelope_ledger.crypto_core import KeyPair, derive_address, normalize_address
from envelope_ledger.data import REPORT_SCHEMA, SCENARIO_SCHEMA, SUITE_ID, Record, load_document, parse_model
from envelope_ledger.errors import (
    ContractViolation,
    DivisionByZero,
    InputError,
    InsufficientHistory,
    InvariantViolation,
    OracleUnavailable,
    ProtocolRejection,
)
from envelope_ledger.ledger_models import AccountClass, EscapeTrace, build_setup, ks_escape, replay_trace
from envelope_ledger.merkle import DEFAULT_DEPTH
from envelope_ledger.notes import Note
from envelope_ledger.registry import (
    PIECEWISE_IRM_ADDR,
    REFERENCE_IRM_ADDR,
    ActionType,
    DeploymentTemplate,
    EnvelopeRegistry,
    EnvelopeStatus,
    EnvelopeTerms,
    Receipt,
    RedistributionIntent,
    StrictTemplate,
)
from envelope_ledger.wallet import OwnerWallet

Role = Literal["owner", "lender", "keeper", "adversary"]
Operation = Literal["shield", "create", "settle", "enforce", "expire", "spend", "advance", "health"]
INTERACTIVE = ("settle", "enforce", "expire")
ENVELOPE_OPS = INTERACTIVE + ("health",)
IRM_ALIASES = {"reference": REFERENCE_IRM_ADDR, "piecewise": PIECEWISE_IRM_ADDR}
FAILURES = (ProtocolRejection, OracleUnavailable, InsufficientHistory, DivisionByZero)


class Actor(Record):
    name: str
    role: Role
    secret: Optional[conint(gt=0)] = None


class NoteSpec(Record):
    name: str
    owner: str
    value: conint(gt=0)
    aid: conint(ge=0) = 1


class IntentSpec(Record):
    action: ActionType = ActionType.LIQUIDATE
    target: str
    keeper_fee: conint(ge=0)
    max_amount: conint(ge=0)


class Step(Record):
    op: Operation
    at: conint(ge=0)
    actor: Optional[str] = None
    note: Optional[str] = None
    envelope: Optional[str] = None
    tree: Optional[str] = None
    intent: Optional[str] = None
    deadline: Optional[int] = None
    debt_principal: Optional[conint(ge=0)] = None
    irm: str = "reference"
    blinded: bool = False
    fallback: Optional[str] = None
    repayment: Optional[conint(ge=0)] = None
    reenter: Optional[Literal["settle", "enforce", "expire", "spend", "create"]] = None
    expect: Optional[str] = None


class AblmSpec(Record):
    account_class: AccountClass
    owner_sk: conint(gt=0) = 0xA11CE
    balance: conint(ge=0) = 10**18
    tokens: Dict[str, conint(ge=0)] = {}


class Scenario(Record):
    schema_id: str = Field(SCENARIO_SCHEMA, alias="schema")
    name: str
    description: str = ""
    model: Literal["pslm", "ablm"] = "pslm"
    seed: Optional[int] = None
    tree_depth: Optional[conint(ge=1, le=32)] = None
    actors: List[Actor] = []
    notes: List[NoteSpec] = []
    trees: Dict[str, ConditionTree] = {}
    intents: Dict[str, IntentSpec] = {}
    oracle: List[OracleSnapshot] = []
    script: List[Step] = []
    ablm: Optional[AblmSpec] = None

    class Config:
        allow_population_by_field_name = True

    @root_validator(skip_on_failure=True)
    def references_resolve(cls, values):
        if values["schema_id"] != SCENARIO_SCHEMA:
            raise ValueError(f"unsupported scenario schema {values['schema_id']!r}")
        if values["model"] == "ablm":
            if values["ablm"] is None:
                raise ValueError("an ablm scenario needs an 'ablm' section")
            return values
        actors = {a.name: a for a in values["actors"]}
        notes = {n.name: n for n in values["notes"]}
        for note in values["notes"]:
            if actors.get(note.owner) is None or actors[note.owner].role != "owner":
                raise ValueError(f"note {note.name!r} names {note.owner!r}, which is not an owner actor")
        for label, intent in values["intents"].items():
            if intent.target not in actors:
                raise ValueError(f"intent {label!r} targets unknown actor {intent.target!r}")
        shielded: Set[str] = set()
        envelopes: Set[str] = set()
        last = 0
        for index, step in enumerate(values["script"]):
            where = f"script[{index}]"
            if step.at < last:
                raise ValueError(f"{where}: timestamp {step.at} precedes {last}")
            last = step.at
            for ref, pool in ((step.actor, actors), (step.fallback, actors), (step.note, notes)):
                if ref is not None and ref not in pool:
                    raise ValueError(f"{where}: unknown reference {ref!r}")
            if step.tree is not None and step.tree not in values["trees"]:
                raise ValueError(f"{where}: unknown condition tree {step.tree!r}")
            if step.intent is not None and step.intent not in values["intents"]:
                raise ValueError(f"{where}: unknown intent {step.intent!r}")
            if step.op in ("shield", "create", "spend") and step.note is None:
                raise ValueError(f"{where}: {step.op} needs a note")
            if step.op in ("create", "spend") and step.note not in shielded:
                raise ValueError(f"{where}: note {step.note!r} is used before it is shielded")
            if step.op == "shield":
                shielded.add(step.note)
            if step.op == "create":
                required = ("envelope", "tree", "intent", "deadline", "debt_principal")
                missing = [f for f in required if getattr(step, f) is None]
                if missing:
                    raise ValueError(f"{where}: create needs {', '.join(missing)}")
                envelopes.add(step.envelope)
            if step.op in ENVELOPE_OPS and step.envelope not in envelopes:
                raise ValueError(f"{where}: {step.op} names envelope {step.envelope!r} that no earlier step creates")
            if step.op in ("enforce", "health") and not any(s.block_timestamp <= step.at for s in values["oracle"]):
                raise ValueError(f"{where}: no oracle snapshot at or before {step.at}")
            if step.reenter is not None and step.op not in INTERACTIVE:
                raise ValueError(f"{where}: only settle, enforce and expire have an interaction to re-enter from")
        return values


class StepOutcome(Record):
    index: int
    op: str
    at: int
    ok: bool
    receipt: Optional[Receipt] = None
    error: Optional[str] = None
    message: Optional[str] = None
    expected: Optional[str] = None
    invariant_violations: List[str] = []

    @property
    def as_expected(self) -> bool:
        if self.expected is None:
            return self.ok
        return not self.ok and self.error == self.expected


class ScenarioReport(Record):
    schema_id: str = Field(REPORT_SCHEMA, alias="schema")
    suite: str = SUITE_ID
    generated_at: str
    scenario: str
    model: str
    seed: int
    steps: List[StepOutcome] = []
    envelopes: Dict[str, EnvelopeStatus] = {}
    payouts: Dict[str, int] = {}
    final_digest: Optional[str] = None
    escape: Optional[EscapeTrace] = None

    class Config:
        allow_population_by_field_name = True

    @property
    def invariants_hold(self) -> bool:
        return not any(step.invariant_violations for step in self.steps)

    @property
    def unexpected(self) -> List[StepOutcome]:
        return [step for step in self.steps if not step.as_expected]

    def deterministic_json(self) -> str:
        return self.json(by_alias=True, exclude={"generated_at"}, sort_keys=True)


def load_scenario(path: Union[str, Path]) -> Scenario:
    return parse_model(Scenario, load_document(path), source=str(path))


class ScenarioRunner:
    def __init__(
        self,
        scenario: Scenario,
        *,
        seed: Optional[int] = None,
        template: Optional[DeploymentTemplate] = None,
        tree_depth: int = DEFAULT_DEPTH,
    ):
        self.scenario = scenario
        self.seed = seed if seed is not None else (scenario.seed or 0)
        self.rng = random.Random(self.seed)
        self.registry = EnvelopeRegistry(
            template=template or StrictTemplate(), tree_depth=scenario.tree_depth or tree_depth
        )
        self.wallets: Dict[str, OwnerWallet] = {}
        self.addresses: Dict[str, str] = {}
        self.notes: Dict[str, Note] = {}
        self.eids: Dict[str, int] = {}
        self.backing: Dict[str, str] = {}
        self.revealed: Dict[str, Step] = {}
        for actor in scenario.actors:
            if actor.role == "owner":
                keypair = KeyPair.from_secret(actor.secret) if actor.secret else KeyPair.generate(self.rng)
                wallet = OwnerWallet(keypair=keypair, registry=self.registry, rng=self.rng, label=actor.name)
                self.wallets[actor.name] = wallet
                self.addresses[actor.name] = wallet.address
            else:
                self.addresses[actor.name] = derive_address(f"{actor.role}/{actor.name}")

    def run(self) -> ScenarioReport:
        scenario = self.scenario
        header = dict(
            generated_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            scenario=scenario.name,
            model=scenario.model,
            seed=self.seed,
        )
        if scenario.model == "ablm":
            return ScenarioReport(**header, escape=self._escape())
        steps = [self._step(index, step) for index, step in enumerate(scenario.script)]
        logging.info(f"scenario {scenario.name}: {len(steps)} step(s) applied")
        return ScenarioReport(
            **header,
            steps=steps,
            envelopes={label: self.registry.status(eid) for label, eid in self.eids.items()},
            payouts=dict(sorted(self.registry.payouts.items())),
            final_digest=self.registry.fingerprint(),
        )

    def _escape(self) -> EscapeTrace:
        spec = self.scenario.ablm
        setup = build_setup(spec.account_class, owner_sk=spec.owner_sk, balance=spec.balance, tokens=spec.tokens)
        trace = ks_escape(setup)
        replay_trace(setup, trace)
        logging.info(f"{spec.account_class.value}: owner-only escape in {len(trace.steps)} transaction(s)")
        return trace

    def _step(self, index: int, step: Step) -> StepOutcome:
        try:
            receipt = self._apply(step)
            outcome = StepOutcome(index=index, op=step.op, at=step.at, ok=True, receipt=receipt, expected=step.expect)
        except FAILURES as e:
            outcome = StepOutcome(
                index=index,
                op=step.op,
                at=step.at,
                ok=False,
                error=type(e).__name__,
                message=str(e),
                expected=step.expect,
            )
        problems = self.registry.check_invariants()
        if problems:
            logging.error(f"step {index} ({step.op}) broke registry invariants: {'; '.join(problems)}")
        elif not outcome.as_expected:
            logging.warning(
                f"step {index} ({step.op}): {outcome.error or 'succeeded'}, expected {step.expect or 'success'}"
            )
        return outcome.copy(update={"invariant_violations": problems})

    # Operations

    def _caller(self, step: Step) -> str:
        if step.actor is None:
            return derive_address("anonymous")
        return self.addresses[step.actor]

    def _owner_of(self, note: str) -> OwnerWallet:
        spec = next(n for n in self.scenario.notes if n.name == note)
        return self.wallets[spec.owner]

    def _intent(self, label: str) -> RedistributionIntent:
        spec = self.scenario.intents[label]
        return RedistributionIntent(
            action_type=spec.action,
            target_addr=self.addresses[spec.target],
            keeper_fee=spec.keeper_fee,
            max_amount=spec.max_amount,
        )

    def _snapshot(self, at: int) -> OracleSnapshot:
        eligible = [s for s in self.scenario.oracle if s.block_timestamp <= at]
        return max(eligible, key=lambda s: s.block_timestamp).at(at)

    def _irm(self, name: str) -> str:
        return IRM_ALIASES.get(name) or normalize_address(name)

    def _apply(self, step: Step) -> Optional[Receipt]:
        if step.op == "advance":
            self.registry.advance(step.at)
            return None
        if step.op == "shield":
            spec = next(n for n in self.scenario.notes if n.name == step.note)
            self.notes[spec.name] = self._owner_of(spec.name).mint(spec.value, spec.aid)
            return None
        if step.op == "spend":
            return self._owner_of(step.note).spend(self.notes[step.note])
        if step.op == "create":
            return self._create(step)
        if step.op == "health":
            return self._health(step)
        hook = self._reentry_hook(step) if step.reenter else None
        eid = self.eids[step.envelope]
        if step.op == "settle":
            note = self.backing[step.envelope]
            wallet = self._owner_of(note)
            repayment = step.repayment
            if repayment is None:
                repayment = self.registry.debt_of(self.registry.envelope(eid), step.at)
            return wallet.settle(self.notes[note], eid, repayment, now=step.at, on_release=hook)
        if step.op == "enforce":
            created = self.revealed[step.envelope]
            tree = self.scenario.trees[step.tree or created.tree]
            intent = self._intent(step.intent or created.intent)
            return self.registry.enforce(
                eid, self._snapshot(step.at), tree, intent, caller=self._caller(step), on_redistribute=hook
            )
        return self.registry.expire(eid, now=step.at, caller=self._caller(step), fallback=hook)

    def _create(self, step: Step) -> Receipt:
        wallet = self._owner_of(step.note)
        terms = EnvelopeTerms(
            deadline=step.deadline,
            debt_principal=step.debt_principal,
            irm_addr=self._irm(step.irm),
            fallback_addr=self.addresses[step.fallback] if step.fallback else None,
        )
        receipt = wallet.encumber(
            self.notes[step.note],
            self.scenario.trees[step.tree],
            self._intent(step.intent),
            terms,
            now=step.at,
            blinded=step.blinded,
        )
        self.eids[step.envelope] = receipt.eid
        self.backing[step.envelope] = step.note
        self.revealed[step.envelope] = step
        return receipt

    def _health(self, step: Step) -> Receipt:
        """Health of the position behind an envelope, priced by the first price leaf of its tree."""
        created = self.revealed[step.envelope]
        prices = [leaf for leaf in iter_leaves(self.scenario.trees[created.tree]) if isinstance(leaf, PriceLeaf)]
        if not prices:
            raise ContractViolation(f"envelope {step.envelope!r} has no price leaf to value its collateral")
        price = self._snapshot(step.at).price(prices[0].oracle_addr, prices[0].asset_pair)
        eid = self.eids[step.envelope]
        collateral = self.notes[self.backing[step.envelope]].value
        health = self.registry.position_health(eid, collateral, price, step.at)
        debt = self.registry.debt_of(self.registry.envelope(eid), step.at)
        return Receipt(
            operation="health",
            eid=eid,
            caller=self._caller(step),
            amounts={"health_ppm": health, "price": price, "debt": debt},
        )

    def _reentry_hook(self, step: Step):
        """A hook that attempts ``step.reenter`` on the same envelope from inside the interaction."""
        label, operation = step.envelope, step.reenter
        note_name = self.backing[label]
        wallet = self._owner_of(note_name)
        eid = self.eids[label]

        def reenter(receipt: Receipt) -> None:
            try:
                if operation == "settle":
                    wallet.settle(self.notes[note_name], eid, receipt.amounts.get("debt", 0), now=step.at)
                elif operation == "enforce":
                    created = self.revealed[label]
                    self.registry.enforce(
                        eid,
                        self._snapshot(step.at),
                        self.scenario.trees[created.tree],
                        self._intent(created.intent),
                        caller=self._caller(step),
                    )
                elif operation == "expire":
                    self.registry.expire(eid, now=step.at, caller=self._caller(step))
                elif operation == "spend":
                    wallet.spend(self.notes[note_name])
                else:
                    created = self.revealed[label]
                    terms = EnvelopeTerms(
                        deadline=created.deadline,
                        debt_principal=created.debt_principal,
                        irm_addr=self._irm(created.irm),
                    )
                    wallet.encumber(
                        self.notes[note_name],
                        self.scenario.trees[created.tree],
                        self._intent(created.intent),
                        terms,
                        now=step.at,
                    )
            except FAILURES as e:
                logging.info(f"re-entrant {operation} rejected: {type(e).__name__}")

        return reenter


def run_scenario(
    path: Union[str, Path],
    *,
    seed: Optional[int] = None,
    template: Optional[DeploymentTemplate] = None,
    tree_depth: int = DEFAULT_DEPTH,
) -> ScenarioReport:
    """Run one scenario file; ``tree_depth`` applies when the file does not fix its own."""
    scenario = load_scenario(path)
    try:
        return ScenarioRunner(scenario, seed=seed, template=template, tree_depth=tree_depth).run()
    except ContractViolation as e:
        raise InputError(f"scenario {scenario.name} cannot run: {e}", location=str(path)) from e


def require_clean(report: ScenarioReport) -> None:
    """Raise for broken invariants; unexpected rejections are left to the caller."""
    broken = [step for step in report.steps if step.invariant_violations]
    if broken:
        first = broken[0]
        raise InvariantViolation(f"step {first.index} ({first.op}): {'; '.join(first.invariant_violations)}")
