import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envelope_ledger.crypto_core import FieldElement, hash_2
from envelope_ledger.errors import CapacityExceeded, ContractViolation, InputError, NoSuchLeaf
from envelope_ledger.merkle import (
    EMPTY_LEAF,
    MerklePath,
    MerkleTree,
    compute_root,
    empty_subtree_roots,
    verify_path,
)


def test_empty_tree_root_is_the_zero_chain():
    tree = MerkleTree(depth=4)
    zeros = empty_subtree_roots(4)
    assert zeros[0] == EMPTY_LEAF
    assert zeros[1] == hash_2(0, 0)
    assert tree.root == zeros[4]
    assert compute_root([], 4) == zeros[4]


def test_two_leaf_root_by_hand():
    tree = MerkleTree(depth=1)
    tree.insert(11)
    tree.insert(22)
    assert tree.root == hash_2(11, 22)


@settings(max_examples=15, deadline=None)
@given(leaves=st.lists(st.integers(min_value=1, max_value=2**64), min_size=1, max_size=9))
def test_incremental_root_matches_recomputation_and_paths_verify(leaves):
    tree = MerkleTree.from_leaves(leaves, depth=4)
    assert tree.root == compute_root(leaves, 4)
    for index, leaf in enumerate(leaves):
        path = tree.prove_membership(index)
        assert verify_path(tree.root, leaf, path)


def test_insert_changes_root_and_stales_old_paths():
    tree = MerkleTree.from_leaves([5, 6], depth=3)
    path = tree.prove_membership(0)
    old_root = tree.root
    tree.insert(7)
    assert tree.root != old_root
    assert verify_path(old_root, 5, path)
    assert not verify_path(tree.root, 5, path)
    assert verify_path(tree.root, 5, tree.prove_membership(0))


def test_wrong_leaf_or_index_fails():
    tree = MerkleTree.from_leaves([5, 6, 7], depth=3)
    path = tree.prove_membership(1)
    assert not verify_path(tree.root, 5, path)
    assert not verify_path(tree.root, 6, MerklePath(leaf_index=8, siblings=path.siblings))


def test_capacity_and_missing_leaves():
    tree = MerkleTree.from_leaves([1, 2], depth=1)
    with pytest.raises(CapacityExceeded):
        tree.insert(3)
    with pytest.raises(NoSuchLeaf):
        tree.prove_membership(2)
    with pytest.raises(NoSuchLeaf):
        tree.index_of(99)
    assert tree.index_of(FieldElement(2)) == 1


def test_snapshot_restores_the_same_root():
    tree = MerkleTree.from_leaves([3, 1, 4, 1, 5], depth=4)
    restored = MerkleTree.from_snapshot(tree.snapshot())
    assert restored.root == tree.root
    assert restored.leaves == tree.leaves


def test_tampered_snapshot_is_rejected():
    snapshot = MerkleTree.from_leaves([3, 1, 4], depth=4).snapshot()
    with pytest.raises(InputError):
        MerkleTree.from_snapshot(snapshot.copy(update={"root": FieldElement(1)}))


def test_copy_is_independent():
    tree = MerkleTree.from_leaves([1], depth=3)
    clone = tree.copy()
    clone.insert(2)
    assert len(tree) == 1
    assert tree.root != clone.root


def test_depth_must_be_positive():
    with pytest.raises(ContractViolation, match="positive"):
        MerkleTree(depth=0)
    with pytest.raises(ContractViolation):
        MerkleTree(depth=-3)


@settings(max_examples=5, deadline=None)
@given(count=st.integers(min_value=1, max_value=96))
def test_depth_ten_tree_matches_recomputation(count):
    leaves = list(range(1, count + 1))
    tree = MerkleTree.from_leaves(leaves, depth=10)
    assert tree.root == compute_root(leaves, 10)
    for index in {0, count // 2, count - 1}:
        assert verify_path(tree.root, leaves[index], tree.prove_membership(index))


@pytest.mark.slow
def test_full_depth_ten_tree():
    tree = MerkleTree(depth=10)
    leaves = []
    for value in range(1, 2**10 + 1):
        leaves.append(value * 7919)
        tree.insert(leaves[-1])
        if value in (1, 2, 3, 255, 256, 513, 1023, 1024):
            assert tree.root == compute_root(leaves, 10)
    for index in range(0, 2**10, 37):
        assert verify_path(tree.root, leaves[index], tree.prove_membership(index))
    with pytest.raises(CapacityExceeded):
        tree.insert(1)
