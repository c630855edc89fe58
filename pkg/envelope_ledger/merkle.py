"""Append-only binary Merkle accumulator over note commitments.

Internal nodes are ``hash_2(left, right)`` and the empty leaf is field zero.
Inserting a leaf changes the root, so a membership proof is only valid against
the root it was derived from.
"""
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

from envelope_ledger.crypto_core import FieldElement, FieldLike, hash_2
from envelope_ledger.data import SUITE_ID, Record
from envelope_ledger.errors import CapacityExceeded, ContractViolation, InputError, NoSuchLeaf

DEFAULT_DEPTH = 20
EMPTY_LEAF = FieldElement(0)


@lru_cache(maxsize=None)
def empty_subtree_roots(depth: int) -> Tuple[FieldElement, ...]:
    zeros = [EMPTY_LEAF]
    for _ in range(depth):
        zeros.append(hash_2(zeros[-1], zeros[-1]))
    return tuple(zeros)


class MerklePath(Record):
    leaf_index: int
    siblings: List[FieldElement]


class MerkleSnapshot(Record):
    suite: str = SUITE_ID
    depth: int
    leaves: List[FieldElement]
    root: FieldElement


def compute_root(leaves: Sequence[FieldLike], depth: int) -> FieldElement:
    """Root of the tree holding ``leaves`` left-aligned, recomputed level by level."""
    if len(leaves) > 2**depth:
        raise CapacityExceeded(f"{len(leaves)} leaves exceed capacity 2^{depth}")
    zeros = empty_subtree_roots(depth)
    level = [FieldElement(leaf) for leaf in leaves]
    for height in range(depth):
        if not level:
            return zeros[depth]
        if len(level) % 2:
            level.append(zeros[height])
        level = [hash_2(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    return level[0] if level else zeros[depth]


def verify_path(root: FieldLike, leaf: FieldLike, path: MerklePath) -> bool:
    if path.leaf_index < 0 or path.leaf_index >= 2 ** len(path.siblings):
        return False
    node = FieldElement(leaf)
    position = path.leaf_index
    for sibling in path.siblings:
        node = hash_2(node, sibling) if position % 2 == 0 else hash_2(sibling, node)
        position //= 2
    return node == FieldElement(root)


class MerkleTree:
    def __init__(self, *, depth: int = DEFAULT_DEPTH):
        if depth < 1:
            raise ContractViolation(f"Merkle depth must be positive, got {depth}")
        self.depth = depth
        self.leaves: List[FieldElement] = []
        self._zeros = empty_subtree_roots(depth)
        self._nodes: List[Dict[int, FieldElement]] = [{} for _ in range(depth + 1)]
        self.root: FieldElement = self._zeros[depth]

    @property
    def capacity(self) -> int:
        return 2**self.depth

    def __len__(self) -> int:
        return len(self.leaves)

    def _node(self, height: int, index: int) -> FieldElement:
        return self._nodes[height].get(index, self._zeros[height])

    def insert(self, leaf: FieldLike) -> int:
        if len(self.leaves) >= self.capacity:
            raise CapacityExceeded(f"tree of depth {self.depth} is full")
        index = len(self.leaves)
        node = FieldElement(leaf)
        self.leaves.append(node)
        self._nodes[0][index] = node
        position = index
        for height in range(self.depth):
            sibling = self._node(height, position ^ 1)
            node = hash_2(node, sibling) if position % 2 == 0 else hash_2(sibling, node)
            position //= 2
            self._nodes[height + 1][position] = node
        self.root = node
        return index

    def prove_membership(self, leaf_index: int) -> MerklePath:
        if not 0 <= leaf_index < len(self.leaves):
            raise NoSuchLeaf(f"no leaf at index {leaf_index} (tree holds {len(self.leaves)})")
        siblings = []
        position = leaf_index
        for height in range(self.depth):
            siblings.append(self._node(height, position ^ 1))
            position //= 2
        return MerklePath(leaf_index=leaf_index, siblings=siblings)

    def index_of(self, leaf: FieldLike) -> int:
        """First index holding ``leaf``."""
        target = FieldElement(leaf)
        for index, value in enumerate(self.leaves):
            if value == target:
                return index
        raise NoSuchLeaf(f"leaf {target.hex()} is not in the tree")

    def copy(self) -> "MerkleTree":
        clone = MerkleTree(depth=self.depth)
        clone.leaves = list(self.leaves)
        clone._nodes = [dict(level) for level in self._nodes]
        clone.root = self.root
        return clone

    def snapshot(self) -> MerkleSnapshot:
        return MerkleSnapshot(depth=self.depth, leaves=list(self.leaves), root=self.root)

    @classmethod
    def from_leaves(cls, leaves: Iterable[FieldLike], *, depth: int = DEFAULT_DEPTH) -> "MerkleTree":
        tree = cls(depth=depth)
        for leaf in leaves:
            tree.insert(leaf)
        return tree

    @classmethod
    def from_snapshot(cls, snapshot: MerkleSnapshot) -> "MerkleTree":
        if snapshot.suite != SUITE_ID:
            raise InputError(f"snapshot was built with hash suite {snapshot.suite}, this build uses {SUITE_ID}")
        tree = cls.from_leaves(snapshot.leaves, depth=snapshot.depth)
        if tree.root != snapshot.root:
            raise InputError("stored Merkle root does not match the root re-derived from its leaves")
        return tree
