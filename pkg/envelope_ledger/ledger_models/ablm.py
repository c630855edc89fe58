"""Account-based ledger model.

Accounts hold balances and token slots and are driven by transactions, each
authorized by exactly one key. A restriction mechanism is only a record in the
mechanism's own storage: ``apply`` never consults it, which is the whole point.
"""
import hashlib
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Literal, Optional, Set, Union

from pydantic import Field, conint

from envelope_ledger.crypto_core import derive_address
from envelope_ledger.data import Record
from envelope_ledger.errors import AblmRejection, NoAccount

ETH = "ETH"


class AccountClass(str, Enum):
    EOA = "eoa"
    ERC4337 = "erc4337"
    EIP7702 = "eip7702"


class ProgramPolicy(str, Enum):
    """Behaviour of wallet or delegate code when a call is routed through it."""

    PERMISSIVE = "permissive"
    REVERT_ALL = "revert-all"
    BLOCK_TRANSFERS = "block-transfers"


class CodeKind(str, Enum):
    WALLET = "wallet"
    DELEGATE = "delegate"


class Code(Record):
    kind: CodeKind
    policy: ProgramPolicy


class Account(Record):
    balance: conint(ge=0) = 0
    nonce: conint(ge=0) = 0
    code: Optional[Code] = None
    controller: str


class Restriction(Record):
    mechanism: str
    owner: str
    scope: List[str]
    assets: List[str]
    active: bool = True


class AblmState(Record):
    accounts: Dict[str, Account] = {}
    token_slots: Dict[str, int] = {}
    restrictions: Dict[str, Restriction] = {}

    def account(self, address: str) -> Account:
        try:
            return self.accounts[address]
        except KeyError:
            raise NoAccount(f"no account at {address}") from None

    def holding(self, asset: str, address: str) -> int:
        if asset == ETH:
            account = self.accounts.get(address)
            return account.balance if account else 0
        return self.token_slots.get(slot_key(asset, address), 0)


def slot_key(token: str, address: str) -> str:
    return f"{token}|{address}"


def key_address(sk: int) -> str:
    """Address of the externally owned account controlled by ``sk``."""
    return "0x" + hashlib.sha256(f"ablm-key/{sk}".encode()).hexdigest()[:40]


def wallet_address(controller: str, salt: str) -> str:
    return derive_address(f"wallet/{controller}/{salt}")


# Transaction alphabet


class Transfer(Record):
    kind: Literal["transfer"] = "transfer"
    sender: str
    to: str
    amount: conint(gt=0)


class TokenTransfer(Record):
    kind: Literal["token_transfer"] = "token_transfer"
    token: str
    sender: str
    to: str
    amount: conint(gt=0)


class DeployWallet(Record):
    """Factory deployment at an address fixed by (controller, salt).

    Deploying to an existing address whose controller is the signer replaces
    the wallet code, which is how a single-key wallet is redeployed.
    """

    kind: Literal["deploy_wallet"] = "deploy_wallet"
    salt: str
    policy: ProgramPolicy = ProgramPolicy.PERMISSIVE


class SetDelegateAuthorization(Record):
    kind: Literal["set_delegate_authorization"] = "set_delegate_authorization"
    account: str
    policy: ProgramPolicy


class WalletCall(Record):
    token: str = ETH
    to: str
    amount: conint(gt=0)


class CallViaWallet(Record):
    kind: Literal["call_via_wallet"] = "call_via_wallet"
    wallet: str
    call: WalletCall


Transaction = Union[Transfer, TokenTransfer, DeployWallet, SetDelegateAuthorization, CallViaWallet]
TRANSACTION_KINDS: FrozenSet[str] = frozenset(
    ["transfer", "token_transfer", "deploy_wallet", "set_delegate_authorization", "call_via_wallet"]
)


class SignedTransaction(Record):
    authorizer: str
    tx: Transaction = Field(..., discriminator="kind")


def _move(state: AblmState, asset: str, sender: str, to: str, amount: int) -> AblmState:
    accounts = dict(state.accounts)
    slots = dict(state.token_slots)
    if asset == ETH:
        source = state.account(sender)
        if source.balance < amount:
            raise AblmRejection(f"{sender} holds {source.balance}, cannot send {amount}")
        accounts[sender] = source.copy(update={"balance": source.balance - amount})
        target = accounts.get(to, Account(controller=to))
        accounts[to] = target.copy(update={"balance": target.balance + amount})
    else:
        held = slots.get(slot_key(asset, sender), 0)
        if held < amount:
            raise AblmRejection(f"{sender} holds {held} {asset}, cannot send {amount}")
        slots[slot_key(asset, sender)] = held - amount
        slots[slot_key(asset, to)] = slots.get(slot_key(asset, to), 0) + amount
        accounts.setdefault(to, Account(controller=to))
    return state.copy(update={"accounts": accounts, "token_slots": slots})


def _bump_nonce(state: AblmState, address: str) -> AblmState:
    accounts = dict(state.accounts)
    account = state.account(address)
    accounts[address] = account.copy(update={"nonce": account.nonce + 1})
    return state.copy(update={"accounts": accounts})


def _require_signer(account: Account, address: str, authorizer: str) -> None:
    if account.controller != authorizer:
        raise AblmRejection(f"{authorizer} does not control {address}")


def apply(state: AblmState, signed: SignedTransaction) -> AblmState:
    """Apply one transaction, returning the successor state or raising AblmRejection."""
    tx, signer = signed.tx, signed.authorizer
    if isinstance(tx, (Transfer, TokenTransfer)):
        sender = state.account(tx.sender)
        _require_signer(sender, tx.sender, signer)
        if sender.code is not None and sender.code.kind is CodeKind.WALLET:
            raise AblmRejection(f"{tx.sender} is a contract wallet; route the call through it")
        asset = ETH if isinstance(tx, Transfer) else tx.token
        return _bump_nonce(_move(state, asset, tx.sender, tx.to, tx.amount), tx.sender)

    if isinstance(tx, DeployWallet):
        address = wallet_address(signer, tx.salt)
        accounts = dict(state.accounts)
        existing = accounts.get(address)
        if existing is not None and existing.code is not None and existing.controller != signer:
            raise AblmRejection(f"{address} is already deployed under another controller")
        balance = existing.balance if existing else 0
        code = Code(kind=CodeKind.WALLET, policy=tx.policy)
        accounts[address] = Account(balance=balance, controller=signer, code=code)
        return state.copy(update={"accounts": accounts})

    if isinstance(tx, SetDelegateAuthorization):
        # processed by the protocol before any delegate code could run
        account = state.account(tx.account)
        _require_signer(account, tx.account, signer)
        if tx.account != signer:
            raise AblmRejection("only an externally owned account can authorize a delegate")
        accounts = dict(state.accounts)
        accounts[tx.account] = account.copy(update={"code": Code(kind=CodeKind.DELEGATE, policy=tx.policy)})
        return _bump_nonce(state.copy(update={"accounts": accounts}), tx.account)

    if isinstance(tx, CallViaWallet):
        wallet = state.account(tx.wallet)
        if wallet.code is None:
            raise AblmRejection(f"{tx.wallet} has no code to call")
        _require_signer(wallet, tx.wallet, signer)
        policy = wallet.code.policy
        if policy is ProgramPolicy.REVERT_ALL:
            raise AblmRejection(f"{wallet.code.kind.value} code at {tx.wallet} reverts")
        if policy is ProgramPolicy.BLOCK_TRANSFERS:
            raise AblmRejection(f"{wallet.code.kind.value} code at {tx.wallet} blocks transfers")
        return _bump_nonce(_move(state, tx.call.token, tx.wallet, tx.call.to, tx.call.amount), tx.wallet)

    raise AblmRejection(f"unknown transaction {type(tx).__name__}")


# Write domains


def _fields(state: AblmState) -> Dict[str, object]:
    fields: Dict[str, object] = {}
    for address, account in state.accounts.items():
        fields[f"{address}.balance"] = account.balance
        fields[f"{address}.nonce"] = account.nonce
        fields[f"{address}.code"] = account.code
        fields[f"{address}.controller"] = account.controller
    for key, value in state.token_slots.items():
        fields[f"slot:{key}"] = value
    return fields


def written_fields(before: AblmState, after: AblmState) -> List[str]:
    old, new = _fields(before), _fields(after)
    return sorted(name for name in old.keys() | new.keys() if old.get(name) != new.get(name))


def controlled_accounts(state: AblmState, sk: int) -> List[str]:
    signer = key_address(sk)
    return sorted(address for address, account in state.accounts.items() if account.controller == signer)


def candidate_transactions(state: AblmState, sk: int) -> Iterable[SignedTransaction]:
    """One representative of every transaction shape the key can sign."""
    signer = key_address(sk)
    fresh = derive_address(f"fresh/{signer}/write-domain")
    tokens = sorted({key.split("|", 1)[0] for key in state.token_slots})
    for address in controlled_accounts(state, sk):
        yield SignedTransaction(authorizer=signer, tx=Transfer(sender=address, to=fresh, amount=1))
        for token in tokens:
            yield SignedTransaction(
                authorizer=signer, tx=TokenTransfer(token=token, sender=address, to=fresh, amount=1)
            )
            yield SignedTransaction(
                authorizer=signer,
                tx=CallViaWallet(wallet=address, call=WalletCall(token=token, to=fresh, amount=1)),
            )
        yield SignedTransaction(
            authorizer=signer, tx=CallViaWallet(wallet=address, call=WalletCall(to=fresh, amount=1))
        )
        for policy in ProgramPolicy:
            yield SignedTransaction(authorizer=signer, tx=SetDelegateAuthorization(account=address, policy=policy))
    yield SignedTransaction(authorizer=signer, tx=DeployWallet(salt="write-domain"))


def write_domain(sk: int, state: AblmState) -> Set[str]:
    """Fields some transaction authorized solely by ``sk`` can write."""
    if not controlled_accounts(state, sk):
        raise NoAccount("key controls no account")
    domain: Set[str] = set()
    for signed in candidate_transactions(state, sk):
        try:
            domain.update(written_fields(state, apply(state, signed)))
        except AblmRejection:
            continue
    return domain
