import itertools
import random
from decimal import Decimal, localcontext

import pytest
import hypothesis.strategies as st
from hypothesis import HealthCheck, given, settings
from hypothesis.stateful import Bundle, RuleBasedStateMachine, initialize, invariant, rule

from envelope_ledger.conditions import (
    AndNode,
    ComparisonOp,
    ConditionTree,
    NotNode,
    OnChainStateLeaf,
    OracleSnapshot,
    OrNode,
    PriceLeaf,
    TimeLeaf,
    evaluate,
    feed_key,
    state_key,
)
from envelope_ledger.crypto_core import KeyPair, derive_address
from envelope_ledger.data import DAY, PPM, SECONDS_PER_YEAR
from envelope_ledger.errors import (
    AlreadyEncumbered,
    AttestationInvalid,
    ConditionFalse,
    CondHashMismatch,
    CreateFrozen,
    DivisionByZero,
    EnforcementPaused,
    ImmutableRegistry,
    InsufficientRepayment,
    IntentHashMismatch,
    NoteAlreadySpent,
    NoteSpentMarker,
    NotActive,
    NotYetExpired,
    ParameterChangeRejected,
    ProtocolRejection,
    RegistryImmutabilityViolation,
    StaleRoot,
    TermsMismatch,
    TimeReversal,
    Unauthorized,
    UnknownIrm,
)
from envelope_ledger.registry import (
    PIECEWISE_IRM_ADDR,
    REFERENCE_IRM_ADDR,
    ActionType,
    AdminRegistry,
    BreakGlassTemplate,
    ConstantRateModel,
    EnvelopeRegistry,
    EnvelopeStatus,
    EnvelopeTerms,
    ManagedRegistry,
    PausableRegistry,
    PiecewiseLinearModel,
    RedistributionIntent,
    TimelockTemplate,
    debt_accrued,
    default_parameters,
    health_factor,
    signer_set,
)
from envelope_ledger.wallet import OwnerWallet

from tests.conftest import ORACLE, PAIR, T0, TREE_DEPTH, price_snapshot


# Debt and health


def test_debt_compounds_annually():
    assert debt_accrued(1_000, 50_000, 0, 0) == 1_000
    assert debt_accrued(1_000, 50_000, 0, SECONDS_PER_YEAR) == 1_050
    assert debt_accrued(1_000, 50_000, 0, 2 * SECONDS_PER_YEAR) == 1_103
    assert debt_accrued(1_000, 50_000, 0, SECONDS_PER_YEAR // 2) == 1_025
    assert debt_accrued(1_000, 0, 0, 10 * SECONDS_PER_YEAR) == 1_000


def test_debt_is_monotone_in_time():
    values = [debt_accrued(6_000, 50_000, T0, T0 + d * DAY) for d in range(0, 400, 37)]
    assert values == sorted(values)
    with pytest.raises(TimeReversal):
        debt_accrued(1_000, 50_000, T0, T0 - 1)


def _exact_debt(principal, rate_ppm, elapsed):
    with localcontext() as ctx:
        ctx.prec = 120
        return Decimal(principal) * (1 + Decimal(rate_ppm) / PPM) ** (Decimal(elapsed) / SECONDS_PER_YEAR)


@given(
    principal=st.integers(min_value=10**6, max_value=10**18),
    rate_ppm=st.integers(min_value=0, max_value=PPM // 2),
    elapsed=st.integers(min_value=0, max_value=5 * SECONDS_PER_YEAR),
)
@settings(max_examples=1_000, deadline=None)
def test_debt_matches_the_closed_form(principal, rate_ppm, elapsed):
    actual = debt_accrued(principal, rate_ppm, T0, T0 + elapsed)
    exact = _exact_debt(principal, rate_ppm, elapsed)
    assert abs(actual - exact) * PPM <= exact
    assert debt_accrued(principal, rate_ppm, T0, T0) == principal


def test_health_factor():
    assert health_factor(10, 2_000, 800_000, 8_000) == 2_000_000
    with pytest.raises(DivisionByZero):
        health_factor(10, 2_000, 800_000, 0)


def test_piecewise_rate_never_decreases():
    model = default_parameters().irm(PIECEWISE_IRM_ADDR)
    assert isinstance(model, PiecewiseLinearModel)
    rates = [model.rate_ppm(t * SECONDS_PER_YEAR) for t in range(12)]
    assert rates == sorted(rates)
    assert model.rate_ppm(0) == 10_000 + 40_000 * 500_000 // 800_000
    assert default_parameters().irm(REFERENCE_IRM_ADDR) == ConstantRateModel(annual_rate_ppm=50_000)


# Lifecycle


def test_create_records_an_active_envelope(registry, loan, lender):
    note, eid = loan
    env = registry.envelope(eid)
    assert registry.status(eid) is EnvelopeStatus.ACTIVE
    assert env.nf_encumber in registry.m_active
    assert env.target_addr == lender
    assert registry.check_invariants() == []


def test_encumbered_note_cannot_be_spent_until_settled(registry, wallet, loan):
    note, eid = loan
    with pytest.raises(NoteSpentMarker):
        wallet.spend(note)
    debt = registry.debt_of(registry.envelope(eid), T0 + DAY)
    receipt = wallet.settle(note, eid, debt, now=T0 + DAY)
    assert receipt.status is EnvelopeStatus.SETTLED
    assert registry.envelope(eid).nf_encumber in registry.m_tomb
    wallet.spend(note)
    with pytest.raises(NoteAlreadySpent):
        wallet.spend(note)


def test_double_encumbrance_is_refused(wallet, loan, liquidation_tree, intent, terms):
    note, _ = loan
    with pytest.raises(AlreadyEncumbered):
        wallet.encumber(note, liquidation_tree, intent, terms, now=T0 + 1)


def test_settled_note_can_be_encumbered_again(registry, wallet, loan, liquidation_tree, intent, terms):
    note, eid = loan
    wallet.settle(note, eid, registry.debt_of(registry.envelope(eid), T0 + DAY), now=T0 + DAY)
    again = wallet.encumber(note, liquidation_tree, intent, terms, now=T0 + DAY)
    assert again.eid != eid
    assert registry.envelope(again.eid).reencumbered
    assert registry.status(eid) is EnvelopeStatus.SETTLED
    assert registry.check_invariants() == []


def test_spent_note_cannot_be_encumbered(wallet, liquidation_tree, intent, terms):
    note = wallet.mint(10_000)
    wallet.spend(note)
    with pytest.raises(NoteAlreadySpent):
        wallet.encumber(note, liquidation_tree, intent, terms, now=T0)


def test_settle_requires_the_full_debt(registry, wallet, loan):
    note, eid = loan
    debt = registry.debt_of(registry.envelope(eid), T0 + 10 * DAY)
    assert debt > 6_000
    with pytest.raises(InsufficientRepayment):
        wallet.settle(note, eid, debt - 1, now=T0 + 10 * DAY)
    receipt = wallet.settle(note, eid, debt, now=T0 + 10 * DAY)
    assert receipt.amounts == {"repayment": debt, "debt": debt}


def test_settle_pays_the_envelope_target(registry, wallet, loan, lender):
    note, eid = loan
    wallet.settle(note, eid, 7_000, now=T0 + DAY)
    assert registry.payouts == {lender: 7_000}


def test_enforce_is_permissionless_once_triggered(registry, loan, liquidation_tree, intent, keeper, lender):
    note, eid = loan
    with pytest.raises(ConditionFalse):
        registry.enforce(eid, price_snapshot(2_000), liquidation_tree, intent, caller=keeper)
    receipt = registry.enforce(eid, price_snapshot(1_400), liquidation_tree, intent, caller=keeper)
    debt = receipt.amounts["debt"]
    assert receipt.amounts["redistributed"] == min(intent.max_amount, debt + intent.keeper_fee)
    assert registry.payouts[keeper] == intent.keeper_fee
    assert registry.payouts[lender] == receipt.amounts["to_target"]
    assert registry.status(eid) is EnvelopeStatus.ENFORCED
    with pytest.raises(NotActive):
        registry.enforce(eid, price_snapshot(1_400), liquidation_tree, intent, caller=keeper)


def test_enforce_checks_the_revealed_commitments(registry, loan, liquidation_tree, intent, keeper):
    _, eid = loan
    other_tree = liquidation_tree.copy(update={"root": liquidation_tree.root.copy(update={"threshold": 1_600})})
    with pytest.raises(CondHashMismatch):
        registry.enforce(eid, price_snapshot(1_400), other_tree, intent, caller=keeper)
    greedy = intent.copy(update={"target_addr": keeper})
    with pytest.raises(IntentHashMismatch):
        registry.enforce(eid, price_snapshot(1_400), liquidation_tree, greedy, caller=keeper)
    assert registry.is_live(eid)


def test_expire_only_after_the_deadline(registry, loan, terms, keeper):
    _, eid = loan
    with pytest.raises(NotYetExpired):
        registry.expire(eid, now=terms.deadline, caller=keeper)
    receipt = registry.expire(eid, now=terms.deadline + 1, caller=keeper)
    assert receipt.status is EnvelopeStatus.EXPIRED
    assert registry.payouts == {}


def test_create_preconditions(registry, wallet, liquidation_tree, intent, terms):
    note = wallet.mint(10_000)
    with pytest.raises(TermsMismatch):
        wallet.encumber(note, liquidation_tree, intent, terms.copy(update={"deadline": T0}), now=T0)
    unknown = derive_address("irm/unknown")
    with pytest.raises(UnknownIrm):
        wallet.encumber(note, liquidation_tree, intent, terms.copy(update={"irm_addr": unknown}), now=T0)
    st, att = wallet.prove_encumber(
        note, liquidation_tree, intent, debt_principal=terms.debt_principal, irm_addr=REFERENCE_IRM_ADDR
    )
    with pytest.raises(TermsMismatch):
        registry.create(st, att, terms.copy(update={"irm_addr": PIECEWISE_IRM_ADDR}), now=T0)


def test_stale_roots_and_forged_attestations(registry, wallet, liquidation_tree, intent, terms):
    note = wallet.mint(10_000)
    st, att = wallet.prove_encumber(
        note, liquidation_tree, intent, debt_principal=terms.debt_principal, irm_addr=terms.irm_addr
    )
    wallet.mint(1)
    with pytest.raises(StaleRoot):
        registry.create(st, att, terms, now=T0)
    spend_st, spend_att = wallet.prove_spend(note)
    with pytest.raises(AttestationInvalid):
        registry.create(st, spend_att, terms, now=T0)
    with pytest.raises(AttestationInvalid):
        registry.spend(spend_st, att)


def test_time_never_runs_backwards(registry, loan, keeper):
    _, eid = loan
    registry.advance(T0 + DAY)
    with pytest.raises(TimeReversal):
        registry.expire(eid, now=T0, caller=keeper)


def test_failed_interaction_reverts_the_exit(registry, wallet, loan):
    note, eid = loan
    bystander = wallet.mint(500)
    before = registry.fingerprint()
    leaves = len(registry.tree)

    def revert(receipt):
        st, att = wallet.prove_spend(bystander)
        registry.spend(st, att, outputs=[123, 456])
        raise RuntimeError("callee reverted")

    marker = registry.envelope(eid).nf_encumber
    with pytest.raises(RuntimeError):
        wallet.settle(note, eid, 10_000, now=T0 + DAY, on_release=revert)
    assert registry.is_live(eid)
    assert marker in registry.m_active
    assert marker not in registry.m_tomb
    assert registry.payouts == {}
    assert registry.fingerprint() == before
    assert len(registry.tree) == leaves
    assert registry.check_invariants() == []
    wallet.spend(bystander)


def test_rejected_enforce_leaves_no_trace(registry, wallet, loan, liquidation_tree, intent, keeper):
    note, eid = loan
    before = registry.fingerprint()
    with pytest.raises(ConditionFalse):
        registry.enforce(eid, price_snapshot(2_000, at=T0 + 365 * DAY), liquidation_tree, intent, caller=keeper)
    assert registry.fingerprint() == before
    assert registry.clock == T0
    receipt = wallet.settle(note, eid, registry.debt_of(registry.envelope(eid), T0 + DAY), now=T0 + DAY)
    assert receipt.status is EnvelopeStatus.SETTLED


def test_rejected_settle_and_create_leave_no_trace(registry, wallet, loan, liquidation_tree, intent, terms):
    note, eid = loan
    spare = wallet.mint(10_000)
    before = registry.fingerprint()
    with pytest.raises(InsufficientRepayment):
        wallet.settle(note, eid, 6_000, now=T0 + 90 * DAY)
    assert registry.fingerprint() == before
    with pytest.raises(TermsMismatch):
        wallet.encumber(spare, liquidation_tree, intent, terms, now=T0 + 60 * DAY)
    assert registry.fingerprint() == before
    assert wallet.encumber(spare, liquidation_tree, intent, terms, now=T0 + DAY).eid == eid + 1


@pytest.mark.parametrize("order", list(itertools.permutations(["settle", "enforce", "expire"])), ids="-".join)
def test_exactly_one_exit_wins(registry, wallet, loan, liquidation_tree, intent, terms, keeper, order):
    note, eid = loan
    late = terms.deadline + 1
    crashed = price_snapshot(1_400, at=late)
    exits = {
        "settle": lambda: wallet.settle(note, eid, 10_000, now=late),
        "enforce": lambda: registry.enforce(eid, crashed, liquidation_tree, intent, caller=keeper),
        "expire": lambda: registry.expire(eid, now=late, caller=keeper),
    }
    winners = []
    for name in order:
        try:
            exits[name]()
        except NotActive:
            continue
        winners.append(name)
    assert winners == [order[0]]
    assert registry.status(eid).value == {"settle": "settled", "enforce": "enforced", "expire": "expired"}[order[0]]
    assert registry.check_invariants() == []


VAULT = derive_address("vault/state")
SLOTS = ("0x01", "0x02", "0x03")

leaves = st.one_of(
    st.builds(
        PriceLeaf,
        oracle_addr=st.just(ORACLE),
        asset_pair=st.just(PAIR),
        op=st.sampled_from(ComparisonOp),
        threshold=st.integers(min_value=1_000, max_value=2_000),
    ),
    st.builds(
        TimeLeaf,
        timestamp=st.integers(min_value=T0, max_value=T0 + 20 * DAY),
        op=st.sampled_from([ComparisonOp.LE, ComparisonOp.GE]),
    ),
    st.builds(
        OnChainStateLeaf,
        contract_addr=st.just(VAULT),
        calldata=st.sampled_from(SLOTS),
        op=st.sampled_from(ComparisonOp),
        threshold=st.integers(min_value=0, max_value=3),
    ),
)
condition_trees = st.recursive(
    leaves,
    lambda children: st.one_of(
        st.builds(AndNode, left=children, right=children),
        st.builds(OrNode, left=children, right=children),
        st.builds(NotNode, child=children),
    ),
    max_leaves=6,
).map(ConditionTree.of)
snapshots = st.builds(
    lambda at, price, state: OracleSnapshot(
        block_timestamp=at,
        prices={feed_key(ORACLE, PAIR): price},
        chain_state={state_key(VAULT, slot): value for slot, value in zip(SLOTS, state)},
    ),
    at=st.integers(min_value=T0, max_value=T0 + 20 * DAY),
    price=st.integers(min_value=1_000, max_value=2_000),
    state=st.lists(st.integers(min_value=0, max_value=3), min_size=len(SLOTS), max_size=len(SLOTS)),
)


def _enforce_once(owner_key, tree, snapshot, caller_seed):
    registry = EnvelopeRegistry(tree_depth=4)
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(caller_seed))
    intent = _intent().copy(update={"max_amount": 10_000, "keeper_fee": 25})
    terms = EnvelopeTerms(deadline=T0 + 30 * DAY, debt_principal=6_000, irm_addr=REFERENCE_IRM_ADDR)
    eid = owner.encumber(owner.mint(10_000), tree, intent, terms, now=T0).eid
    caller = derive_address(f"keeper/{caller_seed}")
    before = registry.fingerprint()
    if evaluate(tree, snapshot):
        receipt = registry.enforce(eid, snapshot, tree, intent, caller=caller)
        assert receipt.status is EnvelopeStatus.ENFORCED
        assert registry.payouts[caller] == 25
    else:
        with pytest.raises(ConditionFalse):
            registry.enforce(eid, snapshot, tree, intent, caller=caller)
        assert registry.fingerprint() == before
        assert registry.is_live(eid)


@given(tree=condition_trees, snapshot=snapshots, caller_seed=st.integers(min_value=0, max_value=2**32))
@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_enforce_follows_the_condition(owner_key, tree, snapshot, caller_seed):
    _enforce_once(owner_key, tree, snapshot, caller_seed)


@pytest.mark.slow
@given(tree=condition_trees, snapshot=snapshots, caller_seed=st.integers(min_value=0, max_value=2**32))
@settings(max_examples=1_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_enforce_follows_the_condition_at_scale(owner_key, tree, snapshot, caller_seed):
    _enforce_once(owner_key, tree, snapshot, caller_seed)


def test_reentrant_calls_see_the_effects(registry, wallet, loan, liquidation_tree, intent, keeper):
    note, eid = loan

    def reenter(receipt):
        with pytest.raises(NotActive):
            registry.enforce(eid, price_snapshot(1_400, at=T0 + DAY), liquidation_tree, intent, caller=keeper)
        wallet.spend(note)

    receipt = wallet.settle(note, eid, 10_000, now=T0 + DAY, on_release=reenter)
    assert [(a.operation, a.outcome) for a in receipt.reentry_attempts] == [("enforce", "NotActive"), ("spend", "ok")]
    assert registry.check_invariants() == []


def test_snapshot_round_trip(registry, loan):
    restored = EnvelopeRegistry.from_snapshot(registry.snapshot())
    assert restored.fingerprint() == registry.fingerprint()
    _, eid = loan
    assert restored.is_live(eid)


def test_clone_is_independent(registry, wallet, loan):
    note, eid = loan
    clone = registry.clone()
    clone_wallet = OwnerWallet(keypair=wallet.keypair, registry=clone, rng=random.Random(0))
    clone_wallet.settle(note, eid, 10_000, now=T0 + DAY)
    assert registry.is_live(eid)
    assert not clone.is_live(eid)


# Deployment templates


def test_strict_deployment_has_no_governance(registry):
    with pytest.raises(ImmutableRegistry):
        registry.propose_parameter_change(default_parameters(), [], now=T0)
    with pytest.raises(ImmutableRegistry):
        registry.freeze_create([])


def test_timelock_changes_apply_to_new_envelopes_only(owner_key, liquidation_tree, intent, terms):
    signers = signer_set(9, "timelock")
    registry = EnvelopeRegistry(
        template=TimelockTemplate(signers=signers, threshold=5, timelock_seconds=7 * DAY), tree_depth=TREE_DEPTH
    )
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(9))
    first = owner.mint(10_000)
    eid = owner.encumber(first, liquidation_tree, intent, terms, now=T0).eid
    doubled = default_parameters().copy(
        update={"irm_models": {REFERENCE_IRM_ADDR: ConstantRateModel(annual_rate_ppm=100_000)}}
    )
    with pytest.raises(ParameterChangeRejected):
        registry.propose_parameter_change(doubled, signers[:4], now=T0)
    change = registry.propose_parameter_change(doubled, signers[:5], now=T0)
    assert change.effective_at == T0 + 7 * DAY
    second = owner.mint(10_000)
    later = owner.encumber(second, liquidation_tree, intent, terms, now=T0 + 8 * DAY).eid
    assert registry.envelope(eid).irm_model.rate_ppm(0) == 50_000
    assert registry.envelope(later).irm_model.rate_ppm(0) == 100_000


def test_timelock_template_floors():
    with pytest.raises(ValueError):
        TimelockTemplate(signers=signer_set(8), threshold=5)
    with pytest.raises(ValueError):
        TimelockTemplate(signers=signer_set(9), threshold=4)
    with pytest.raises(ValueError):
        TimelockTemplate(signers=signer_set(9), threshold=5, timelock_seconds=DAY)


def test_break_glass_freezes_create_and_opens_the_drain(owner_key, liquidation_tree, intent, terms):
    signers = signer_set(5, "break-glass")
    registry = EnvelopeRegistry(template=BreakGlassTemplate(signers=signers, threshold=3), tree_depth=TREE_DEPTH)
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(4))
    locked = owner.mint(10_000)
    free = owner.mint(500)
    eid = owner.encumber(locked, liquidation_tree, intent, terms, now=T0).eid
    st, att = owner.prove_spend(free)
    with pytest.raises(Unauthorized):
        registry.drain(st, att)
    with pytest.raises(Unauthorized):
        registry.freeze_create(signers[:2])
    registry.freeze_create(signers[:3])
    with pytest.raises(CreateFrozen):
        owner.encumber(free, liquidation_tree, intent.copy(update={"max_amount": 500}), terms, now=T0 + 1)
    registry.drain(st, att)
    locked_st, locked_att = owner.prove_spend(locked)
    with pytest.raises(NoteSpentMarker):
        registry.drain(locked_st, locked_att)
    assert registry.is_live(eid)


def test_unsafe_variants_refuse_construction_by_default():
    with pytest.raises(RegistryImmutabilityViolation):
        AdminRegistry(admin=derive_address("admin"))
    with pytest.raises(RegistryImmutabilityViolation):
        PausableRegistry(pauser=derive_address("pauser"))
    with pytest.raises(RegistryImmutabilityViolation):
        ManagedRegistry(manager=derive_address("manager"))


def test_admin_release_lifts_an_encumbrance(owner_key, liquidation_tree, intent, terms):
    admin = derive_address("admin")
    registry = AdminRegistry(admin=admin, policy_disabled=True, tree_depth=TREE_DEPTH)
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(2))
    note = owner.mint(10_000)
    eid = owner.encumber(note, liquidation_tree, intent, terms, now=T0).eid
    with pytest.raises(Unauthorized):
        registry.admin_release(eid, caller=owner.address)
    registry.admin_release(eid, caller=admin)
    owner.spend(note)


def test_managed_registry_needs_the_manager(owner_key, liquidation_tree, intent, terms):
    manager = derive_address("manager")
    registry = ManagedRegistry(manager=manager, policy_disabled=True, tree_depth=TREE_DEPTH)
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(6))
    note = owner.mint(10_000)
    with pytest.raises(Unauthorized):
        owner.encumber(note, liquidation_tree, intent, terms, now=T0)
    eid = owner.encumber(note, liquidation_tree, intent, terms, now=T0, cosigner=manager).eid
    with pytest.raises(Unauthorized):
        owner.settle(note, eid, 10_000, now=T0 + DAY)
    owner.settle(note, eid, 10_000, now=T0 + DAY, cosigner=manager)
    with pytest.raises(Unauthorized):
        owner.spend(note, cosigner=derive_address("someone-else"))
    owner.spend(note, cosigner=manager)
    assert registry.required_approvals("spend") == {manager}
    assert registry.required_approvals("enforce") == frozenset()


def test_pause_blocks_enforcement(owner_key, liquidation_tree, intent, terms, keeper):
    pauser = derive_address("pauser")
    registry = PausableRegistry(pauser=pauser, policy_disabled=True, tree_depth=TREE_DEPTH)
    owner = OwnerWallet(keypair=owner_key, registry=registry, rng=random.Random(2))
    eid = owner.encumber(owner.mint(10_000), liquidation_tree, intent, terms, now=T0).eid
    registry.set_paused(True, caller=pauser)
    with pytest.raises(EnforcementPaused):
        registry.enforce(eid, price_snapshot(1_400), liquidation_tree, intent, caller=keeper)


# Random lifecycles


class RegistryLifecycle(RuleBasedStateMachine):
    """Random owner and keeper operations; the marker sets must stay consistent."""

    notes = Bundle("notes")

    @initialize()
    def setup(self):
        self.registry = EnvelopeRegistry(tree_depth=6)
        self.wallet = OwnerWallet(keypair=KeyPair.from_secret(0xA11CE), registry=self.registry, rng=random.Random(0))
        self.keeper = derive_address("keeper/machine")
        self.now = T0
        self.eids = {}
        self.tree = _tree()
        self.intent = _intent()

    def _tick(self, seconds):
        self.now += seconds

    @rule(target=notes, value=st.integers(min_value=100, max_value=10_000))
    def mint(self, value):
        return self.wallet.mint(value)

    @rule(note=notes, debt=st.integers(min_value=1, max_value=50))
    def encumber(self, note, debt):
        intent = self.intent.copy(update={"max_amount": note.value})
        terms = EnvelopeTerms(deadline=self.now + 10 * DAY, debt_principal=debt, irm_addr=REFERENCE_IRM_ADDR)
        try:
            receipt = self.wallet.encumber(note, self.tree, intent, terms, now=self.now)
        except ProtocolRejection:
            return
        self.eids[receipt.eid] = (note, intent)

    @rule(note=notes)
    def spend(self, note):
        live = any(self.registry.is_live(eid) for eid, (n, _) in self.eids.items() if n == note)
        try:
            self.wallet.spend(note)
        except ProtocolRejection:
            return
        assert not live, "an encumbered note was spent"

    @rule(data=st.data(), extra=st.integers(min_value=0, max_value=100))
    def settle(self, data, extra):
        live = [eid for eid in self.eids if self.registry.is_live(eid)]
        if not live:
            return
        eid = data.draw(st.sampled_from(live))
        self._tick(DAY)
        note, _ = self.eids[eid]
        debt = self.registry.debt_of(self.registry.envelope(eid), self.now)
        self.wallet.settle(note, eid, debt + extra, now=self.now)

    @rule(data=st.data(), price=st.integers(min_value=1_000, max_value=2_000))
    def enforce(self, data, price):
        live = [eid for eid in self.eids if self.registry.is_live(eid)]
        if not live:
            return
        eid = data.draw(st.sampled_from(live))
        _, intent = self.eids[eid]
        try:
            self.registry.enforce(eid, price_snapshot(price, at=self.now), self.tree, intent, caller=self.keeper)
        except ConditionFalse:
            assert price > 1_500

    @rule(days=st.integers(min_value=1, max_value=12))
    def expire_all(self, days):
        self._tick(days * DAY)
        for eid in list(self.eids):
            if self.registry.is_live(eid) and self.now > self.registry.envelope(eid).deadline:
                self.registry.expire(eid, now=self.now, caller=self.keeper)

    @invariant()
    def markers_are_consistent(self):
        if hasattr(self, "registry"):
            assert self.registry.check_invariants() == []


def _tree():
    return ConditionTree.of(PriceLeaf(oracle_addr=ORACLE, asset_pair=PAIR, op=ComparisonOp.LE, threshold=1_500))


def _intent():
    return RedistributionIntent(
        action_type=ActionType.LIQUIDATE, target_addr=derive_address("lender/machine"), keeper_fee=0, max_amount=1
    )


RegistryLifecycle.TestCase.settings = settings(
    max_examples=15, stateful_step_count=12, deadline=None, suppress_health_check=list(HealthCheck)
)
TestRegistryLifecycle = RegistryLifecycle.TestCase
