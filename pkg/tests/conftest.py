import random

import pytest

from envelope_ledger.conditions import ComparisonOp, ConditionTree, OracleSnapshot, PriceLeaf, feed_key
from envelope_ledger.crypto_core import KeyPair, derive_address
from envelope_ledger.data import DAY
from envelope_ledger.registry import (
    REFERENCE_IRM_ADDR,
    ActionType,
    EnvelopeRegistry,
    EnvelopeTerms,
    RedistributionIntent,
)
from envelope_ledger.wallet import OwnerWallet

T0 = 1_700_000_000
ORACLE = derive_address("oracle/eth-usd")
PAIR = "ETH/USD"
TREE_DEPTH = 8


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def owner_key():
    return KeyPair.from_secret(0xA11CE)


@pytest.fixture(scope="session")
def other_key():
    return KeyPair.from_secret(0xB0B)


@pytest.fixture
def registry():
    return EnvelopeRegistry(tree_depth=TREE_DEPTH)


@pytest.fixture
def wallet(owner_key, registry, rng):
    return OwnerWallet(keypair=owner_key, registry=registry, rng=rng, label="alice")


@pytest.fixture
def lender():
    return derive_address("lender/bob")


@pytest.fixture
def keeper():
    return derive_address("keeper/kim")


@pytest.fixture
def liquidation_tree():
    return ConditionTree.of(PriceLeaf(oracle_addr=ORACLE, asset_pair=PAIR, op=ComparisonOp.LE, threshold=1_500))


@pytest.fixture
def intent(lender):
    return RedistributionIntent(action_type=ActionType.LIQUIDATE, target_addr=lender, keeper_fee=50, max_amount=10_000)


@pytest.fixture
def terms():
    return EnvelopeTerms(deadline=T0 + 30 * DAY, debt_principal=6_000, irm_addr=REFERENCE_IRM_ADDR)


def price_snapshot(price: int, at: int = T0 + DAY) -> OracleSnapshot:
    return OracleSnapshot(block_timestamp=at, prices={feed_key(ORACLE, PAIR): price})


@pytest.fixture
def loan(wallet, liquidation_tree, intent, terms):
    """A shielded 10,000 note backing a live envelope; returns (note, eid)."""
    note = wallet.mint(10_000)
    receipt = wallet.encumber(note, liquidation_tree, intent, terms, now=T0)
    return note, receipt.eid
