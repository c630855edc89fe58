"""The private-state ledger with the envelope registry, seen through the audit's eyes."""
import random
from typing import Callable, FrozenSet, List, Optional

from envelope_ledger.conditions import ComparisonOp, ConditionTree, OracleSnapshot, PriceLeaf, feed_key
from envelope_ledger.crypto_core import KeyPair, derive_address, random_field_element
from envelope_ledger.data import DAY
from envelope_ledger.ledger_models.audit import REJECTIONS, Action, MechanismAdapter
from envelope_ledger.notes import commit, encumbrance_nullifier
from envelope_ledger.registry import (
    REFERENCE_IRM_ADDR,
    ActionType,
    AdminRegistry,
    BreakGlassTemplate,
    DeploymentTemplate,
    EnvelopeRegistry,
    EnvelopeTerms,
    ManagedRegistry,
    PausableRegistry,
    RedistributionIntent,
    StrictTemplate,
)
from envelope_ledger.wallet import OwnerWallet

OWNER_SK = 0x5EC12E7
CREATED_AT = 1_700_000_000
ACTION_TIME = CREATED_AT + DAY
ORACLE = derive_address("oracle/eth-usd")
PAIR = "ETH/USD"
LIQUIDATION_PRICE = 1_500

RegistryFactory = Callable[[DeploymentTemplate], EnvelopeRegistry]


def _intact(template: DeploymentTemplate) -> EnvelopeRegistry:
    return EnvelopeRegistry(template=template, tree_depth=8)


class PslmAdapter(MechanismAdapter):
    """One encumbered note and one bystander note under a single owner key."""

    exit_paths = frozenset({"settle", "enforce", "expire"})
    custody_paths = frozenset({"spend", "create", "settle"})

    def __init__(
        self,
        template: Optional[DeploymentTemplate] = None,
        registry_factory: Optional[RegistryFactory] = None,
        *,
        seed: int = 0,
    ):
        self.template = template or StrictTemplate()
        registry = (registry_factory or _intact)(self.template)
        self.name = f"pslm/{type(registry).__name__}/{self.template.kind}"
        self.keypair = KeyPair.from_secret(OWNER_SK)
        rng = random.Random(seed)
        wallet = OwnerWallet(keypair=self.keypair, registry=registry, rng=rng)
        self.notes = wallet.notes
        self.note = wallet.mint(1_000)
        self.bystander = wallet.mint(500)
        self.lender = derive_address("lender")
        self.keeper = derive_address("keeper")
        self.tree = ConditionTree.of(
            PriceLeaf(oracle_addr=ORACLE, asset_pair=PAIR, op=ComparisonOp.LE, threshold=LIQUIDATION_PRICE)
        )
        self.intent = RedistributionIntent(
            action_type=ActionType.LIQUIDATE, target_addr=self.lender, keeper_fee=10, max_amount=1_000
        )
        self.terms = EnvelopeTerms(deadline=CREATED_AT + 30 * DAY, debt_principal=600, irm_addr=REFERENCE_IRM_ADDR)
        # the loan is opened with whatever co-signature the deployment demands
        cosign = {"cosigner": registry.manager} if isinstance(registry, ManagedRegistry) else {}
        receipt = wallet.encumber(self.note, self.tree, self.intent, self.terms, now=CREATED_AT, **cosign)
        self.eid = receipt.eid
        self.phantom_marker = random_field_element(rng)
        self.initial = registry

    def _snapshot(self, price: int) -> OracleSnapshot:
        return OracleSnapshot(block_timestamp=ACTION_TIME, prices={feed_key(ORACLE, PAIR): price})

    def _wallet(self, registry: EnvelopeRegistry) -> OwnerWallet:
        wallet = OwnerWallet(keypair=self.keypair, registry=registry, rng=random.Random(OWNER_SK))
        wallet.notes = self.notes
        return wallet

    def initial_state(self) -> EnvelopeRegistry:
        return self.initial

    def owner_alphabet(self, state: EnvelopeRegistry) -> List[Action]:
        actions = [
            Action("spend-encumbered", "spend"),
            Action("spend-attack-a", "spend"),
            Action("spend-attack-b", "spend"),
            Action("spend-bystander", "spend"),
            Action("re-create", "create"),
            Action("settle-underpay", "settle"),
            Action("enforce-false-condition", "enforce"),
            Action("expire-early", "expire"),
        ]
        if isinstance(state.template, BreakGlassTemplate):
            actions.append(Action("break-glass-freeze", "freeze"))
        if isinstance(state, AdminRegistry):
            actions.append(Action("admin-release", "admin_release"))
        if isinstance(state, PausableRegistry):
            actions.append(Action("pause-enforcement", "pause"))
        return actions

    def apply(self, state: EnvelopeRegistry, action: Action) -> EnvelopeRegistry:
        registry = state.clone()
        wallet = self._wallet(registry)
        label = action.label
        if label == "spend-encumbered":
            wallet.spend(self.note)
        elif label in ("spend-attack-a", "spend-attack-b"):
            if label == "spend-attack-a":
                fake = self.phantom_marker
            else:
                fake = encumbrance_nullifier(self.bystander.r, commit(self.bystander))
            st, att = wallet.prove_spend(self.note, nf_encumber_public_input=fake)
            registry.spend(st, att, caller=wallet.address)
        elif label == "spend-bystander":
            wallet.spend(self.bystander)
        elif label == "re-create":
            receipt_terms = self.terms.copy(update={"deadline": self.terms.deadline + DAY})
            wallet.encumber(self.note, self.tree, self.intent, receipt_terms, now=ACTION_TIME)
        elif label == "settle-underpay":
            debt = registry.debt_of(registry.envelope(self.eid), ACTION_TIME)
            wallet.settle(self.note, self.eid, debt - 1, now=ACTION_TIME)
        elif label == "enforce-false-condition":
            snapshot = self._snapshot(LIQUIDATION_PRICE + 1)
            registry.enforce(self.eid, snapshot, self.tree, self.intent, caller=wallet.address)
        elif label == "expire-early":
            registry.expire(self.eid, now=ACTION_TIME, caller=wallet.address)
        elif label == "break-glass-freeze":
            registry.freeze_create(registry.template.signers)
        elif label == "admin-release":
            registry.admin_release(self.eid, caller=registry.admin)
        elif label == "pause-enforcement":
            registry.set_paused(True, caller=registry.pauser)
        else:
            raise ValueError(f"unknown action {label}")
        return registry

    def required_cosigners(self, action: Action) -> FrozenSet[str]:
        return self.initial.required_approvals(action.path)

    def asset_moved(self, before: EnvelopeRegistry, after: EnvelopeRegistry) -> bool:
        nf_spend = self._wallet(before).nf_spend(self.note)
        return nf_spend in after.spent and nf_spend not in before.spent

    def restriction_active(self, state: EnvelopeRegistry) -> bool:
        return state.is_live(self.eid)

    def enforce_by_stranger(self, state: EnvelopeRegistry) -> Optional[str]:
        registry = state.clone()
        try:
            registry.enforce(self.eid, self._snapshot(LIQUIDATION_PRICE), self.tree, self.intent, caller=self.keeper)
        except REJECTIONS as e:
            return f"{type(e).__name__}: {e}"
        return None

    def fingerprint(self, state: EnvelopeRegistry) -> str:
        extra = f"|paused={state.paused}" if isinstance(state, PausableRegistry) else ""
        return state.fingerprint() + extra
