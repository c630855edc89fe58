"""Key-sovereignty escape traces for the three account classes.

Each trace uses only transactions signed by the owner key and ends with the
restricted assets at an address outside the restriction's scope, while the
mechanism's restriction record still reads as active.
"""
import random
from typing import Dict, List, Optional

from pydantic import Field

from envelope_ledger.crypto_core import derive_address
from envelope_ledger.data import Record
from envelope_ledger.errors import AblmRejection, ContractViolation
from envelope_ledger.ledger_models.ablm import (
    ETH,
    Account,
    AccountClass,
    AblmState,
    CallViaWallet,
    Code,
    CodeKind,
    DeployWallet,
    ProgramPolicy,
    Restriction,
    SetDelegateAuthorization,
    SignedTransaction,
    TokenTransfer,
    Transaction,
    Transfer,
    WalletCall,
    apply,
    key_address,
    slot_key,
    wallet_address,
    written_fields,
)

MECHANISM = "lending-vault"
PRIMARY_SALT = "primary"
TOKENS = ("USDC", "DAI", "WBTC")


class KsSetup(Record):
    """An account of one class holding assets under an active restriction."""

    account_class: AccountClass
    state: AblmState
    owner_sk: int
    account: str
    restriction_id: str

    @property
    def restriction(self) -> Restriction:
        return self.state.restrictions[self.restriction_id]

    @property
    def signer(self) -> str:
        return key_address(self.owner_sk)


class TraceStep(Record):
    authorizer: str
    tx: Transaction = Field(..., discriminator="kind")
    writes: List[str]


class EscapeOutcome(Record):
    asset: str
    amount: int
    destination: str
    destination_in_scope: bool
    restriction_active: bool


class EscapeTrace(Record):
    account_class: AccountClass
    restriction_id: str
    steps: List[TraceStep]
    outcomes: List[EscapeOutcome]

    def describe(self) -> List[str]:
        return [f"{step.tx.kind} signed by {step.authorizer}" for step in self.steps]


def build_setup(
    account_class: AccountClass,
    *,
    owner_sk: int,
    balance: int,
    tokens: Optional[Dict[str, int]] = None,
    policy: Optional[ProgramPolicy] = None,
    bystanders: Optional[Dict[str, int]] = None,
) -> KsSetup:
    signer = key_address(owner_sk)
    tokens = tokens or {}
    if account_class is AccountClass.EOA:
        account, code = signer, None
    elif account_class is AccountClass.ERC4337:
        account = wallet_address(signer, PRIMARY_SALT)
        code = Code(kind=CodeKind.WALLET, policy=policy or ProgramPolicy.BLOCK_TRANSFERS)
    else:
        account = signer
        code = Code(kind=CodeKind.DELEGATE, policy=policy or ProgramPolicy.REVERT_ALL)
    accounts = {account: Account(balance=balance, controller=signer, code=code)}
    for address, amount in (bystanders or {}).items():
        accounts[address] = Account(balance=amount, controller=address)
    restriction = Restriction(mechanism=MECHANISM, owner=signer, scope=[account], assets=[ETH, *sorted(tokens)])
    restriction_id = f"{MECHANISM}/{account}"
    state = AblmState(
        accounts=accounts,
        token_slots={slot_key(token, account): amount for token, amount in tokens.items()},
        restrictions={restriction_id: restriction},
    )
    return KsSetup(
        account_class=account_class, state=state, owner_sk=owner_sk, account=account, restriction_id=restriction_id
    )


def random_state(account_class: AccountClass, rng: random.Random) -> KsSetup:
    """Randomized holdings, bystanders and (for code-bearing classes) a hostile program."""
    tokens = {token: rng.randint(1, 10**12) for token in rng.sample(TOKENS, rng.randint(0, len(TOKENS)))}
    bystanders = {
        derive_address(f"bystander/{rng.getrandbits(64)}"): rng.randint(0, 10**18) for _ in range(rng.randint(0, 3))
    }
    policy = None
    if account_class is AccountClass.ERC4337:
        policy = rng.choice([ProgramPolicy.BLOCK_TRANSFERS, ProgramPolicy.REVERT_ALL])
    elif account_class is AccountClass.EIP7702:
        policy = rng.choice(list(ProgramPolicy))
    return build_setup(
        account_class,
        owner_sk=rng.randrange(1, 2**128),
        balance=rng.randint(1, 10**18),
        tokens=tokens,
        policy=policy,
        bystanders=bystanders,
    )


def _fresh_address(setup: KsSetup) -> str:
    return derive_address(f"fresh/{setup.signer}/{setup.restriction_id}")


def _escape_transactions(setup: KsSetup, destination: str) -> List[Transaction]:
    state, account = setup.state, setup.account
    holdings = [(asset, state.holding(asset, account)) for asset in setup.restriction.assets]
    holdings = [(asset, amount) for asset, amount in holdings if amount > 0]
    txs: List[Transaction] = []
    if setup.account_class is AccountClass.EOA:
        for asset, amount in holdings:
            if asset == ETH:
                txs.append(Transfer(sender=account, to=destination, amount=amount))
            else:
                txs.append(TokenTransfer(token=asset, sender=account, to=destination, amount=amount))
        return txs
    if setup.account_class is AccountClass.ERC4337:
        # same key, same factory salt: the wallet comes back with permissive code
        txs.append(DeployWallet(salt=PRIMARY_SALT, policy=ProgramPolicy.PERMISSIVE))
    else:
        txs.append(SetDelegateAuthorization(account=account, policy=ProgramPolicy.PERMISSIVE))
    for asset, amount in holdings:
        txs.append(CallViaWallet(wallet=account, call=WalletCall(token=asset, to=destination, amount=amount)))
    return txs


def ks_escape(setup: KsSetup) -> EscapeTrace:
    restriction = setup.restriction
    if not restriction.active or setup.account not in restriction.scope:
        raise ContractViolation("escape needs an active restriction covering the account")
    destination = _fresh_address(setup)
    state = setup.state
    steps = []
    for tx in _escape_transactions(setup, destination):
        signed = SignedTransaction(authorizer=setup.signer, tx=tx)
        successor = apply(state, signed)
        steps.append(TraceStep(authorizer=setup.signer, tx=tx, writes=written_fields(state, successor)))
        state = successor
    return EscapeTrace(
        account_class=setup.account_class,
        restriction_id=setup.restriction_id,
        steps=steps,
        outcomes=_outcomes(setup, state, destination),
    )


def _outcomes(setup: KsSetup, final: AblmState, destination: str) -> List[EscapeOutcome]:
    restriction = final.restrictions[setup.restriction_id]
    return [
        EscapeOutcome(
            asset=asset,
            amount=final.holding(asset, destination),
            destination=destination,
            destination_in_scope=destination in restriction.scope,
            restriction_active=restriction.active,
        )
        for asset in restriction.assets
        if setup.state.holding(asset, setup.account) > 0
    ]


def replay_trace(setup: KsSetup, trace: EscapeTrace) -> AblmState:
    """Re-execute ``trace`` from ``setup`` and check every claim it makes.

    Raises ContractViolation when a step was signed by another key, wrote
    fields other than the recorded ones, or the assets did not end up outside
    the restriction's scope.
    """
    state = setup.state
    for index, step in enumerate(trace.steps):
        if step.authorizer != setup.signer:
            raise ContractViolation(f"step {index} is not signed by the owner key")
        try:
            successor = apply(state, SignedTransaction(authorizer=step.authorizer, tx=step.tx))
        except AblmRejection as e:
            raise ContractViolation(f"step {index} reverts on replay: {e}") from e
        if written_fields(state, successor) != step.writes:
            raise ContractViolation(f"step {index} writes differ from the recorded trace")
        state = successor
    restriction = state.restrictions[setup.restriction_id]
    if any(outcome.destination in restriction.scope for outcome in trace.outcomes):
        raise ContractViolation("escape destination lies inside the restriction scope")
    for asset in restriction.assets:
        original = setup.state.holding(asset, setup.account)
        if any(state.holding(asset, address) for address in restriction.scope):
            raise ContractViolation(f"{asset} is still inside the restriction scope")
        delivered = any(o.asset == asset and state.holding(asset, o.destination) >= original for o in trace.outcomes)
        if original and not delivered:
            raise ContractViolation(f"{asset} did not reach the recorded destination")
    return state
