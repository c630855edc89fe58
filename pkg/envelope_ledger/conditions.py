"""Condition trees: the public enforcement predicate of an envelope.

Leaves read prices, time, realized volatility or contract state from a single
``OracleSnapshot``. Internal nodes are binary AND/OR and unary NOT. The tree is
committed at registration through ``cond_hash`` and revealed at enforcement.
"""
import math
import statistics
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterator, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

from pydantic import Field, conint, validator

from envelope_ledger.crypto_core import (
    DomainTag,
    FieldElement,
    FieldLike,
    address_to_field,
    encode_text,
    fold_hash,
    normalize_address,
)
from envelope_ledger.data import TREE_SCHEMA, Record, load_document, parse_model
from envelope_ledger.errors import (
    ContractViolation,
    InputError,
    InsufficientHistory,
    MalformedTree,
    OracleUnavailable,
)

GAS_PER_LEAF = 3000
GAS_OFFSET = 500
BLOCK_GAS_LIMIT = 30_000_000
MAX_LEAVES_AT_BLOCK_LIMIT = 10_000
OPERATIONAL_LEAF_LIMIT = 20
COMPLEX_LEAF_LIMIT = 100

ProtocolInt = conint(ge=0, lt=2**128)


class ComparisonOp(str, Enum):
    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"

    def compare(self, lhs: int, rhs: int) -> bool:
        if self is ComparisonOp.LE:
            return lhs <= rhs
        if self is ComparisonOp.GE:
            return lhs >= rhs
        if self is ComparisonOp.LT:
            return lhs < rhs
        return lhs > rhs


OP_CODES = {ComparisonOp.LE: 1, ComparisonOp.GE: 2, ComparisonOp.LT: 3, ComparisonOp.GT: 4}
TIME_OPS = frozenset({ComparisonOp.LE, ComparisonOp.GE})
VARIANT_CODES = {"price": 1, "time": 2, "volatility": 3, "state": 4, "and": 5, "or": 6, "not": 7}


def _address(value: str) -> str:
    return normalize_address(value)


def _calldata(value: str) -> str:
    body = value[2:] if value.lower().startswith("0x") else value
    try:
        bytes.fromhex(body)
    except ValueError as e:
        raise ValueError(f"calldata must be hex: {value!r}") from e
    return "0x" + body.lower()


def feed_key(oracle_addr: str, asset_pair: str) -> str:
    return f"{normalize_address(oracle_addr)}|{asset_pair}"


def state_key(contract_addr: str, calldata: str) -> str:
    return f"{normalize_address(contract_addr)}|{_calldata(calldata)}"


class PriceLeaf(Record):
    kind: Literal["price"] = "price"
    oracle_addr: str
    asset_pair: str
    op: ComparisonOp
    threshold: ProtocolInt
    oracle_code_hash: Optional[str] = None

    _oracle = validator("oracle_addr", allow_reuse=True)(_address)


class TimeLeaf(Record):
    kind: Literal["time"] = "time"
    timestamp: ProtocolInt
    op: ComparisonOp

    @validator("op")
    def time_ops_only(cls, op):
        if op not in TIME_OPS:
            raise ValueError(f"time leaves compare with <= or >= only, got {op.value}")
        return op


class VolatilityLeaf(Record):
    kind: Literal["volatility"] = "volatility"
    oracle_addr: str
    asset_pair: str
    window: ProtocolInt
    op: ComparisonOp
    threshold: ProtocolInt
    oracle_code_hash: Optional[str] = None

    _oracle = validator("oracle_addr", allow_reuse=True)(_address)


class OnChainStateLeaf(Record):
    kind: Literal["state"] = "state"
    contract_addr: str
    calldata: str
    op: ComparisonOp
    threshold: ProtocolInt

    _contract = validator("contract_addr", allow_reuse=True)(_address)
    _data = validator("calldata", allow_reuse=True)(_calldata)


class AndNode(Record):
    kind: Literal["and"] = "and"
    left: "Node"
    right: "Node"


class OrNode(Record):
    kind: Literal["or"] = "or"
    left: "Node"
    right: "Node"


class NotNode(Record):
    kind: Literal["not"] = "not"
    child: "Node"


Leaf = Union[PriceLeaf, TimeLeaf, VolatilityLeaf, OnChainStateLeaf]
Node = Union[PriceLeaf, TimeLeaf, VolatilityLeaf, OnChainStateLeaf, AndNode, OrNode, NotNode]
LEAF_TYPES = (PriceLeaf, TimeLeaf, VolatilityLeaf, OnChainStateLeaf)

AndNode.update_forward_refs()
OrNode.update_forward_refs()
NotNode.update_forward_refs()


class ConditionTree(Record):
    schema_id: str = Field(TREE_SCHEMA, alias="schema")
    root: Node

    class Config:
        allow_population_by_field_name = True

    @classmethod
    def of(cls, root: Node) -> "ConditionTree":
        return cls(root=root)


TreeLike = Union[ConditionTree, AndNode, OrNode, NotNode, PriceLeaf, TimeLeaf, VolatilityLeaf, OnChainStateLeaf]


def _root(tree: TreeLike) -> Node:
    return tree.root if isinstance(tree, ConditionTree) else tree


def conjunction(nodes: Sequence[Node]) -> Node:
    """Balanced AND over ``nodes``, keeping their left-to-right order."""
    if not nodes:
        raise ContractViolation("a conjunction needs at least one node")
    if len(nodes) == 1:
        return nodes[0]
    middle = len(nodes) // 2
    return AndNode(left=conjunction(nodes[:middle]), right=conjunction(nodes[middle:]))


def parse_tree(document: object) -> ConditionTree:
    payload = document if isinstance(document, dict) and "root" in document else {"root": document}
    try:
        tree = parse_model(ConditionTree, payload, source="condition tree")
    except InputError as e:
        raise MalformedTree(str(e)) from e
    if tree.schema_id != TREE_SCHEMA:
        raise MalformedTree(f"unsupported tree schema {tree.schema_id!r}")
    return tree


def load_tree(path: Union[str, Path]) -> ConditionTree:
    return parse_tree(load_document(path))


# Hashing


def _optional_text(value: Optional[str]) -> List[FieldLike]:
    return [0] if value is None else [1, encode_text(value)]


def _serialize(node: Node, out: List[FieldLike]) -> None:
    if isinstance(node, PriceLeaf):
        out += [VARIANT_CODES["price"], address_to_field(node.oracle_addr), encode_text(node.asset_pair)]
        out += [OP_CODES[node.op], node.threshold, *_optional_text(node.oracle_code_hash)]
    elif isinstance(node, TimeLeaf):
        out += [VARIANT_CODES["time"], node.timestamp, OP_CODES[node.op]]
    elif isinstance(node, VolatilityLeaf):
        out += [VARIANT_CODES["volatility"], address_to_field(node.oracle_addr), encode_text(node.asset_pair)]
        out += [node.window, OP_CODES[node.op], node.threshold, *_optional_text(node.oracle_code_hash)]
    elif isinstance(node, OnChainStateLeaf):
        out += [VARIANT_CODES["state"], address_to_field(node.contract_addr)]
        out += [encode_text(bytes.fromhex(node.calldata[2:])), OP_CODES[node.op], node.threshold]
    elif isinstance(node, (AndNode, OrNode)):
        out.append(VARIANT_CODES[node.kind])
        _serialize(node.left, out)
        _serialize(node.right, out)
    elif isinstance(node, NotNode):
        out.append(VARIANT_CODES["not"])
        _serialize(node.child, out)
    else:
        raise MalformedTree(f"not a condition node: {type(node).__name__}")


def cond_hash(tree: TreeLike) -> FieldElement:
    stream: List[FieldLike] = []
    _serialize(_root(tree), stream)
    return fold_hash(stream, DomainTag.PARAMS_TAG)


def leaf_count(tree: TreeLike) -> int:
    node = _root(tree)
    if isinstance(node, LEAF_TYPES):
        return 1
    if isinstance(node, (AndNode, OrNode)):
        return leaf_count(node.left) + leaf_count(node.right)
    if isinstance(node, NotNode):
        return leaf_count(node.child)
    raise MalformedTree(f"not a condition node: {type(node).__name__}")


def iter_leaves(tree: TreeLike) -> Iterator[Leaf]:
    node = _root(tree)
    if isinstance(node, LEAF_TYPES):
        yield node
    elif isinstance(node, (AndNode, OrNode)):
        yield from iter_leaves(node.left)
        yield from iter_leaves(node.right)
    elif isinstance(node, NotNode):
        yield from iter_leaves(node.child)


# Evaluation


class OracleSnapshot(Record):
    """Every value one enforcement transaction may read.

    Feeds are keyed ``"<oracle address>|<asset pair>"`` and contract state
    ``"<contract address>|<calldata>"``.
    """

    block_timestamp: ProtocolInt
    prices: Dict[str, int] = {}
    price_history: Dict[str, List[Tuple[int, int]]] = {}
    chain_state: Dict[str, int] = {}

    @validator("prices", "price_history", "chain_state")
    def canonical_keys(cls, mapping):
        canonical = {}
        for key, value in mapping.items():
            address, _, rest = key.partition("|")
            if not rest:
                raise ValueError(f"key {key!r} must look like '<address>|<name>'")
            canonical[f"{normalize_address(address)}|{rest}"] = value
        return canonical

    def price(self, oracle_addr: str, asset_pair: str) -> int:
        key = feed_key(oracle_addr, asset_pair)
        if key not in self.prices:
            raise OracleUnavailable(f"no price for {key} at {self.block_timestamp}")
        return self.prices[key]

    def history(self, oracle_addr: str, asset_pair: str) -> List[Tuple[int, int]]:
        key = feed_key(oracle_addr, asset_pair)
        if key not in self.price_history:
            raise OracleUnavailable(f"no price history for {key}")
        return self.price_history[key]

    def state(self, contract_addr: str, calldata: str) -> int:
        key = state_key(contract_addr, calldata)
        if key not in self.chain_state:
            raise OracleUnavailable(f"no state reading for {key}")
        return self.chain_state[key]

    def at(self, timestamp: int) -> "OracleSnapshot":
        return self.copy(update={"block_timestamp": timestamp})


def load_snapshot(path: Union[str, Path]) -> OracleSnapshot:
    return parse_model(OracleSnapshot, load_document(path), source=str(path))


def volatility(history: Sequence[Tuple[int, int]], window: int, now: Optional[int] = None) -> int:
    """Integer-floored population standard deviation of in-window prices."""
    if now is None:
        now = max((ts for ts, _ in history), default=0)
    samples = [Fraction(price) for ts, price in history if now - window <= ts <= now]
    if len(samples) < 2:
        raise InsufficientHistory(f"{len(samples)} sample(s) in the last {window}s, need at least 2")
    return math.isqrt(math.floor(statistics.pvariance(samples)))


def _evaluate(node: Node, snapshot: OracleSnapshot) -> bool:
    if isinstance(node, PriceLeaf):
        return node.op.compare(snapshot.price(node.oracle_addr, node.asset_pair), node.threshold)
    if isinstance(node, TimeLeaf):
        return node.op.compare(snapshot.block_timestamp, node.timestamp)
    if isinstance(node, VolatilityLeaf):
        history = snapshot.history(node.oracle_addr, node.asset_pair)
        measured = volatility(history, node.window, snapshot.block_timestamp)
        return node.op.compare(measured, node.threshold)
    if isinstance(node, OnChainStateLeaf):
        return node.op.compare(snapshot.state(node.contract_addr, node.calldata), node.threshold)
    # children are evaluated eagerly so missing data always aborts
    if isinstance(node, AndNode):
        left, right = _evaluate(node.left, snapshot), _evaluate(node.right, snapshot)
        return left and right
    if isinstance(node, OrNode):
        left, right = _evaluate(node.left, snapshot), _evaluate(node.right, snapshot)
        return left or right
    if isinstance(node, NotNode):
        return not _evaluate(node.child, snapshot)
    raise MalformedTree(f"not a condition node: {type(node).__name__}")


def evaluate(tree: TreeLike, snapshot: OracleSnapshot) -> bool:
    return _evaluate(_root(tree), snapshot)


# Gas model


def gas_cost_for_leaves(k: int) -> int:
    if k < 1:
        raise ContractViolation("a condition tree has at least one leaf")
    return GAS_PER_LEAF * k - GAS_OFFSET


def gas_cost(tree: TreeLike) -> int:
    return gas_cost_for_leaves(leaf_count(tree))


# Lint


class WarningCode(str, Enum):
    SINGLE_BLOCK_MANIPULABLE = "single-block-manipulable"
    OVERSIZE_TREE = "oversize-tree"
    LARGE_OPERATIONAL_TREE = "large-operational-tree"


class LintWarning(Record):
    code: WarningCode
    message: str
    path: Optional[str] = None


class NormalNode(NamedTuple):
    kind: str  # "leaf", "and" or "or"
    leaf: Optional[Leaf] = None
    negated: bool = False
    children: Tuple["NormalNode", ...] = ()


def normalize_negations(tree: TreeLike, negate: bool = False) -> NormalNode:
    """Push NOT down to the leaves (negation normal form)."""
    node = _root(tree)
    if isinstance(node, NotNode):
        return normalize_negations(node.child, not negate)
    if isinstance(node, (AndNode, OrNode)):
        kind = node.kind
        if negate:
            kind = "or" if kind == "and" else "and"
        return NormalNode(
            kind,
            children=(normalize_negations(node.left, negate), normalize_negations(node.right, negate)),
        )
    if isinstance(node, LEAF_TYPES):
        return NormalNode("leaf", leaf=node, negated=negate)
    raise MalformedTree(f"not a condition node: {type(node).__name__}")


def _bounds_time_from_below(node: NormalNode) -> bool:
    if not isinstance(node.leaf, TimeLeaf):
        return False
    return (node.leaf.op is ComparisonOp.GE) != node.negated


def _requires_time_guard(node: NormalNode) -> bool:
    if node.kind == "leaf":
        return _bounds_time_from_below(node)
    left, right = node.children
    if node.kind == "and":
        return _requires_time_guard(left) or _requires_time_guard(right)
    return _requires_time_guard(left) and _requires_time_guard(right)


def _unguarded_prices(node: NormalNode, guarded: bool, path: str) -> Iterator[str]:
    if node.kind == "leaf":
        if isinstance(node.leaf, PriceLeaf) and not guarded:
            yield path
        return
    left, right = node.children
    if node.kind == "and":
        yield from _unguarded_prices(left, guarded or _requires_time_guard(right), f"{path}.left")
        yield from _unguarded_prices(right, guarded or _requires_time_guard(left), f"{path}.right")
    else:
        yield from _unguarded_prices(left, guarded, f"{path}.left")
        yield from _unguarded_prices(right, guarded, f"{path}.right")


def lint(tree: TreeLike) -> List[LintWarning]:
    warnings = [
        LintWarning(
            code=WarningCode.SINGLE_BLOCK_MANIPULABLE,
            message=(
                "price leaf is not conjoined with a lower-bound time leaf; a single-block price move can trigger it"
            ),
            path=path,
        )
        for path in _unguarded_prices(normalize_negations(tree), False, "root")
    ]
    k = leaf_count(tree)
    if k > COMPLEX_LEAF_LIMIT:
        warnings.append(
            LintWarning(
                code=WarningCode.OVERSIZE_TREE,
                message=f"{k} leaves exceeds the {COMPLEX_LEAF_LIMIT}-leaf ceiling for complex trees",
            )
        )
    if k > OPERATIONAL_LEAF_LIMIT:
        warnings.append(
            LintWarning(
                code=WarningCode.LARGE_OPERATIONAL_TREE,
                message=f"{k} leaves exceeds the {OPERATIONAL_LEAF_LIMIT}-leaf operational recommendation",
            )
        )
    return warnings
