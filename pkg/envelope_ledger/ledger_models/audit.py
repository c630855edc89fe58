"""Bounded audit of the four non-custodial enforced encumbrance properties.

P1 self-custody is checked structurally: no operation on the owner's
custody paths may need another key's approval. P2 (transition restriction)
and P3 (irrevocability) are falsified by breadth-first search over
owner-authorized operation sequences, deduplicating states by fingerprint.
P4 (permissionless enforcement) is tried on every reachable state in which
the restriction is still active. A failing property always carries the
operation sequence that reproduces it.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

from rich.progress import track

from envelope_ledger.crypto_core import derive_address
from envelope_ledger.data import Record, canonical_digest
from envelope_ledger.errors import ContractViolation, IncompleteAdapter, ProtocolRejection
from envelope_ledger.ledger_models.ablm import (
    AccountClass,
    AblmState,
    CallViaWallet,
    DeployWallet,
    ProgramPolicy,
    SetDelegateAuthorization,
    SignedTransaction,
    TRANSACTION_KINDS,
    TokenTransfer,
    Transfer,
    WalletCall,
    apply,
    controlled_accounts,
    key_address,
)
from envelope_ledger.ledger_models.escape import PRIMARY_SALT, KsSetup, build_setup, ks_escape

DEFAULT_DEPTH = 4
REJECTIONS = (ProtocolRejection, ContractViolation)


class Action(NamedTuple):
    label: str
    path: str
    payload: Any = None


class PropertyVerdict(Record):
    holds: bool
    witness: List[str] = []
    detail: str = ""


class NceeVerdict(Record):
    mechanism: str
    depth: int
    explored_states: int
    p1_self_custody: PropertyVerdict
    p2_transition_restriction: PropertyVerdict
    p3_irrevocability: PropertyVerdict
    p4_permissionless: PropertyVerdict

    @property
    def all_hold(self) -> bool:
        return all(
            v.holds
            for v in (
                self.p1_self_custody,
                self.p2_transition_restriction,
                self.p3_irrevocability,
                self.p4_permissionless,
            )
        )


class MechanismAdapter(ABC):
    """What the audit needs to know about a ledger plus restriction mechanism."""

    name = "mechanism"
    exit_paths: FrozenSet[str] = frozenset()
    # paths through which the owner exercises control of the asset
    custody_paths: FrozenSet[str] = frozenset()

    @abstractmethod
    def initial_state(self) -> Any:
        ...

    @abstractmethod
    def owner_alphabet(self, state: Any) -> Sequence[Action]:
        """Every operation the owner key can submit from ``state``, honest or not."""

    @abstractmethod
    def apply(self, state: Any, action: Action) -> Any:
        """Successor state; raises a ProtocolRejection when the ledger refuses."""

    @abstractmethod
    def required_cosigners(self, action: Action) -> FrozenSet[str]:
        """Keys besides the owner's whose approval ``action`` needs to go through."""

    @abstractmethod
    def asset_moved(self, before: Any, after: Any) -> bool:
        ...

    @abstractmethod
    def restriction_active(self, state: Any) -> bool:
        ...

    @abstractmethod
    def enforce_by_stranger(self, state: Any) -> Optional[str]:
        """None when a non-owner, non-privileged caller can enforce; otherwise why not."""

    @abstractmethod
    def fingerprint(self, state: Any) -> str:
        ...

    def candidate_escapes(self) -> List[List[Action]]:
        return []


class _Findings:
    def __init__(self, exit_paths: FrozenSet[str]):
        self.exit_paths = exit_paths
        self.p2: Optional[List[str]] = None
        self.p3: Optional[List[str]] = None
        self.p4: Optional[List[str]] = None

    def examine(self, adapter: MechanismAdapter, trail: List[str], before: Any, action: Action, after: Any) -> None:
        if action.path in self.exit_paths or not adapter.restriction_active(before):
            return
        if self.p2 is None and adapter.asset_moved(before, after):
            self.p2 = trail + [action.label]
        if self.p3 is None and not adapter.restriction_active(after):
            self.p3 = trail + [action.label]

    def try_enforce(self, adapter: MechanismAdapter, state: Any, trail: List[str]) -> None:
        if self.p4 is not None or not adapter.restriction_active(state):
            return
        reason = adapter.enforce_by_stranger(state)
        if reason is not None:
            self.p4 = trail + [f"enforce by a non-owner caller fails: {reason}"]


def _verdict(witness: Optional[List[str]], detail: str) -> PropertyVerdict:
    if witness is None:
        return PropertyVerdict(holds=True, detail=detail)
    return PropertyVerdict(holds=False, witness=witness, detail=detail)


def ncee_audit(adapter: MechanismAdapter, depth: int = DEFAULT_DEPTH) -> NceeVerdict:
    initial = adapter.initial_state()
    alphabet = adapter.owner_alphabet(initial)
    if not alphabet or not adapter.exit_paths or not adapter.custody_paths:
        raise IncompleteAdapter(f"{adapter.name} does not declare the operation alphabet and paths the audit needs")
    if not adapter.restriction_active(initial):
        raise ContractViolation("the audit starts from a state with an active restriction")

    custody = [action for action in alphabet if action.path in adapter.custody_paths]
    cosigned = [(action, adapter.required_cosigners(action)) for action in custody]
    cosigned = [(action, signers) for action, signers in cosigned if signers]
    p1 = _verdict(
        [f"{action.label} requires {', '.join(sorted(signers))}" for action, signers in cosigned] or None,
        f"none of {len(custody)} custody operation(s) requires a co-signer",
    )

    findings = _Findings(adapter.exit_paths)
    for candidate in adapter.candidate_escapes():
        state, trail = initial, []
        for action in candidate:
            try:
                successor = adapter.apply(state, action)
            except REJECTIONS:
                break
            findings.examine(adapter, trail, state, action, successor)
            trail.append(action.label)
            state = successor

    seen = {adapter.fingerprint(initial)}
    frontier: List[Tuple[Any, List[str]]] = [(initial, [])]
    for _ in track(range(depth), description=f"Auditing {adapter.name}..."):
        expanded: List[Tuple[Any, List[str]]] = []
        for state, trail in frontier:
            findings.try_enforce(adapter, state, trail)
            if not adapter.restriction_active(state):
                continue
            for action in adapter.owner_alphabet(state):
                try:
                    successor = adapter.apply(state, action)
                except REJECTIONS:
                    continue
                findings.examine(adapter, trail, state, action, successor)
                if action.path in adapter.exit_paths:
                    continue
                fingerprint = adapter.fingerprint(successor)
                if fingerprint not in seen:
                    seen.add(fingerprint)
                    expanded.append((successor, trail + [action.label]))
        frontier = expanded
    for state, trail in frontier:
        findings.try_enforce(adapter, state, trail)

    verdict = NceeVerdict(
        mechanism=adapter.name,
        depth=depth,
        explored_states=len(seen),
        p1_self_custody=p1,
        p2_transition_restriction=_verdict(findings.p2, "no owner operation moves the asset while restricted"),
        p3_irrevocability=_verdict(findings.p3, "only the exit paths lift the restriction"),
        p4_permissionless=_verdict(findings.p4, "a non-owner caller enforces on every reachable restricted state"),
    )
    for name in ("p1_self_custody", "p2_transition_restriction", "p3_irrevocability", "p4_permissionless"):
        logging.info(f"{adapter.name} {name}: {'holds' if getattr(verdict, name).holds else 'FAILS'}")
    return verdict


class AblmAdapter(MechanismAdapter):
    """An account of one class under a lending-vault restriction recorded in the vault's storage."""

    exit_paths = frozenset({"vault_release"})
    custody_paths = frozenset(TRANSACTION_KINDS)

    def __init__(self, account_class: AccountClass, *, setup: Optional[KsSetup] = None):
        self.account_class = account_class
        self.setup = setup or build_setup(
            account_class, owner_sk=0xA11CE, balance=10**18, tokens={"USDC": 5_000 * 10**6}
        )
        self.name = f"ablm/{account_class.value}"
        self.keeper = key_address(0xBEEF)

    def initial_state(self) -> AblmState:
        return self.setup.state

    def _transactions(self, state: AblmState, signer: str, accounts: List[str]) -> List[SignedTransaction]:
        destination = derive_address(f"fresh/{signer}/audit")
        restriction = self.setup.restriction
        txs = []
        for address in accounts:
            for asset in restriction.assets:
                amount = state.holding(asset, address)
                if not amount:
                    continue
                if asset == "ETH":
                    txs.append(Transfer(sender=address, to=destination, amount=amount))
                else:
                    txs.append(TokenTransfer(token=asset, sender=address, to=destination, amount=amount))
                txs.append(CallViaWallet(wallet=address, call=WalletCall(token=asset, to=destination, amount=amount)))
            txs.append(SetDelegateAuthorization(account=address, policy=ProgramPolicy.PERMISSIVE))
        txs.append(DeployWallet(salt=PRIMARY_SALT, policy=ProgramPolicy.PERMISSIVE))
        return [SignedTransaction(authorizer=signer, tx=tx) for tx in txs]

    def owner_alphabet(self, state: AblmState) -> List[Action]:
        signed = self._transactions(state, self.setup.signer, controlled_accounts(state, self.setup.owner_sk))
        return [Action(label=f"{s.tx.kind}#{i}", path=s.tx.kind, payload=s) for i, s in enumerate(signed)]

    def apply(self, state: AblmState, action: Action) -> AblmState:
        return apply(state, action.payload)

    def required_cosigners(self, action: Action) -> FrozenSet[str]:
        tx = action.payload.tx
        if isinstance(tx, (Transfer, TokenTransfer)):
            debited = tx.sender
        elif isinstance(tx, CallViaWallet):
            debited = tx.wallet
        elif isinstance(tx, SetDelegateAuthorization):
            debited = tx.account
        else:
            return frozenset()
        # exactly one key authorizes a transaction: the controller of the account it touches
        return frozenset({self.setup.state.account(debited).controller}) - {self.setup.signer}

    def _restricted_holdings(self, state: AblmState) -> int:
        restriction = self.setup.restriction
        return sum(state.holding(asset, address) for asset in restriction.assets for address in restriction.scope)

    def asset_moved(self, before: AblmState, after: AblmState) -> bool:
        return self._restricted_holdings(after) < self._restricted_holdings(before)

    def restriction_active(self, state: AblmState) -> bool:
        record = state.restrictions[self.setup.restriction_id]
        return record.active and self._restricted_holdings(state) > 0

    def enforce_by_stranger(self, state: AblmState) -> Optional[str]:
        # the vault can only submit transactions under its own key
        for signed in self._transactions(state, self.keeper, list(self.setup.restriction.scope)):
            try:
                if self.asset_moved(state, apply(state, signed)):
                    return None
            except REJECTIONS:
                continue
        return "the owner's assets move only under the owner key"

    def fingerprint(self, state: AblmState) -> str:
        return canonical_digest(state)

    def candidate_escapes(self) -> List[List[Action]]:
        trace = ks_escape(self.setup)
        return [
            [
                Action(
                    label=f"{step.tx.kind}#escape{i}",
                    path=step.tx.kind,
                    payload=SignedTransaction(authorizer=step.authorizer, tx=step.tx),
                )
                for i, step in enumerate(trace.steps)
            ]
        ]


