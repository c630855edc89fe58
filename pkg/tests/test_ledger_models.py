import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envelope_ledger.crypto_core import derive_address
from envelope_ledger.errors import AblmRejection, ContractViolation, NoAccount
from envelope_ledger.ledger_models import (
    AblmAdapter,
    AccountClass,
    Action,
    PslmAdapter,
    SignedTransaction,
    apply,
    build_setup,
    key_address,
    ks_escape,
    ncee_audit,
    random_state,
    replay_trace,
    write_domain,
)
from envelope_ledger.ledger_models.ablm import Account, Transfer
from envelope_ledger.registry import (
    AdminRegistry,
    BreakGlassTemplate,
    EnvelopeRegistry,
    ManagedRegistry,
    PausableRegistry,
    TimelockTemplate,
    signer_set,
)

OWNER_SK = 663006
AUDIT_DEPTH = 2


@pytest.fixture(params=list(AccountClass), ids=lambda c: c.value)
def setup(request):
    return build_setup(request.param, owner_sk=OWNER_SK, balance=10**18, tokens={"USDC": 5_000 * 10**6})


# Key-sufficiency escape


def test_escape_moves_every_restricted_asset_out_of_scope(setup):
    trace = ks_escape(setup)
    assert all(step.authorizer == key_address(OWNER_SK) for step in trace.steps)
    assert {o.asset: o.amount for o in trace.outcomes} == {"ETH": 10**18, "USDC": 5_000 * 10**6}
    for outcome in trace.outcomes:
        assert not outcome.destination_in_scope
        # the vault's record is never consulted, so it still says "active"
        assert outcome.restriction_active
    final = replay_trace(setup, trace)
    assert final.holding("ETH", setup.account) == 0
    assert final.holding("USDC", setup.account) == 0


def test_code_bearing_accounts_swap_their_code_first(setup):
    kinds = [step.tx.kind for step in ks_escape(setup).steps]
    if setup.account_class is AccountClass.EOA:
        assert kinds == ["transfer", "token_transfer"]
    elif setup.account_class is AccountClass.ERC4337:
        assert kinds == ["deploy_wallet", "call_via_wallet", "call_via_wallet"]
    else:
        assert kinds == ["set_delegate_authorization", "call_via_wallet", "call_via_wallet"]


def test_restrictive_code_blocks_direct_calls(setup):
    if setup.account_class is AccountClass.EOA:
        pytest.skip("an EOA carries no code")
    call = ks_escape(setup).steps[-1]
    with pytest.raises(AblmRejection):
        apply(setup.state, SignedTransaction(authorizer=call.authorizer, tx=call.tx))


def test_replay_rejects_tampered_traces(setup):
    trace = ks_escape(setup)
    first, *rest = trace.steps
    forged = trace.copy(update={"steps": [first.copy(update={"authorizer": key_address(1)}), *rest]})
    with pytest.raises(ContractViolation):
        replay_trace(setup, forged)
    rewritten = trace.copy(update={"steps": [first.copy(update={"writes": []}), *rest]})
    with pytest.raises(ContractViolation):
        replay_trace(setup, rewritten)
    truncated = trace.copy(update={"steps": trace.steps[:-1]})
    with pytest.raises(ContractViolation):
        replay_trace(setup, truncated)


def test_escape_needs_an_account_in_scope(setup):
    with pytest.raises(ContractViolation):
        ks_escape(setup.copy(update={"account": key_address(999)}))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32), account_class=st.sampled_from(list(AccountClass)))
def test_escape_succeeds_from_random_states(seed, account_class):
    setup = random_state(account_class, random.Random(seed))
    trace = ks_escape(setup)
    final = replay_trace(setup, trace)
    for asset in setup.restriction.assets:
        assert final.holding(asset, setup.account) == 0


def test_write_domain_of_an_eoa_key():
    setup = build_setup(AccountClass.EOA, owner_sk=OWNER_SK, balance=100)
    domain = write_domain(OWNER_SK, setup.state)
    assert f"{setup.account}.balance" in domain
    assert f"{setup.account}.nonce" in domain
    with pytest.raises(NoAccount):
        write_domain(12345, setup.state)


def test_foreign_key_cannot_move_the_account():
    setup = build_setup(AccountClass.EOA, owner_sk=OWNER_SK, balance=100)
    theft = Transfer(sender=setup.account, to=derive_address("thief"), amount=100)
    with pytest.raises(AblmRejection):
        apply(setup.state, SignedTransaction(authorizer=key_address(7), tx=theft))


# Audits


@pytest.mark.parametrize("account_class", list(AccountClass), ids=lambda c: c.value)
def test_account_ledgers_fail_transition_restriction(account_class):
    verdict = ncee_audit(AblmAdapter(account_class), depth=AUDIT_DEPTH)
    assert verdict.p1_self_custody.holds
    assert not verdict.p2_transition_restriction.holds
    assert "escape" in verdict.p2_transition_restriction.witness[-1]
    assert not verdict.p4_permissionless.holds
    assert not verdict.all_hold


@pytest.mark.parametrize(
    "template",
    [
        None,
        TimelockTemplate(signers=signer_set(9, "timelock"), threshold=5),
        BreakGlassTemplate(signers=signer_set(5), threshold=3),
    ],
    ids=["strict", "timelock", "break-glass"],
)
def test_intact_registry_satisfies_every_property(template):
    verdict = ncee_audit(PslmAdapter(template), depth=AUDIT_DEPTH)
    assert verdict.all_hold, verdict.json(indent=2)
    assert verdict.explored_states > 1


def test_admin_release_breaks_irrevocability():
    def factory(template):
        return AdminRegistry(admin=derive_address("admin"), policy_disabled=True, template=template, tree_depth=8)

    verdict = ncee_audit(PslmAdapter(registry_factory=factory), depth=AUDIT_DEPTH)
    assert not verdict.p3_irrevocability.holds
    assert verdict.p3_irrevocability.witness[0] == "admin-release"
    assert verdict.p2_transition_restriction.holds


def test_pause_breaks_permissionless_enforcement():
    def factory(template):
        return PausableRegistry(pauser=derive_address("pauser"), policy_disabled=True, template=template, tree_depth=8)

    verdict = ncee_audit(PslmAdapter(registry_factory=factory), depth=AUDIT_DEPTH)
    assert not verdict.p4_permissionless.holds
    assert verdict.p4_permissionless.witness[0] == "pause-enforcement"
    assert verdict.p3_irrevocability.holds


def test_mutant_registry_fails_transition_restriction():
    def factory(template):
        return EnvelopeRegistry(template=template, tree_depth=8, disabled_checks=["spend_marker"])

    verdict = ncee_audit(PslmAdapter(registry_factory=factory), depth=1)
    assert not verdict.p2_transition_restriction.holds
    assert verdict.p2_transition_restriction.witness == ["spend-encumbered"]


def test_manager_cosignature_breaks_self_custody():
    manager = derive_address("manager")

    def factory(template):
        return ManagedRegistry(manager=manager, policy_disabled=True, template=template, tree_depth=8)

    verdict = ncee_audit(PslmAdapter(registry_factory=factory), depth=AUDIT_DEPTH)
    assert not verdict.p1_self_custody.holds
    assert f"spend-encumbered requires {manager}" in verdict.p1_self_custody.witness
    assert f"settle-underpay requires {manager}" in verdict.p1_self_custody.witness
    assert verdict.p2_transition_restriction.holds
    assert verdict.p4_permissionless.holds


def test_privileged_paths_do_not_count_against_self_custody():
    signers = signer_set(5)
    adapter = PslmAdapter(BreakGlassTemplate(signers=signers, threshold=3))
    assert adapter.required_cosigners(Action("spend-bystander", "spend")) == frozenset()
    assert adapter.required_cosigners(Action("break-glass-freeze", "freeze")) == frozenset(signers)
    assert ncee_audit(adapter, depth=1).p1_self_custody.holds


def test_account_cosigners_follow_the_controller():
    setup = build_setup(AccountClass.EOA, owner_sk=OWNER_SK, balance=100)
    custodied = derive_address("custodied")
    accounts = {**setup.state.accounts, custodied: Account(balance=50, controller=key_address(99))}
    setup = setup.copy(update={"state": setup.state.copy(update={"accounts": accounts})})
    adapter = AblmAdapter(AccountClass.EOA, setup=setup)

    def transfer(sender):
        tx = Transfer(sender=sender, to=derive_address("elsewhere"), amount=1)
        return Action("transfer", "transfer", SignedTransaction(authorizer=setup.signer, tx=tx))

    assert adapter.required_cosigners(transfer(setup.account)) == frozenset()
    assert adapter.required_cosigners(transfer(custodied)) == {key_address(99)}
