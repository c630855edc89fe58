from decimal import Decimal
from fractions import Fraction

import pytest

from envelope_ledger.conditions import gas_cost_for_leaves
from envelope_ledger.economics import (
    DEFAULT_ENVIRONMENTS,
    CostModel,
    GasEnvironment,
    break_even,
    economics_table,
    environments_from_config,
    force_profit_bound,
    format_usd,
    manipulation_unprofitable,
    op_cost_usd,
)
from envelope_ledger.errors import ContractViolation

R_CUSTODY = Fraction(1, 100)


def _env(gwei: str) -> GasEnvironment:
    return GasEnvironment(label=f"{gwei} gwei", gas_price_gwei=Decimal(gwei))


@pytest.mark.parametrize(
    "gwei,cost,threshold",
    [
        ("100", "$700.00", "$70,000.00"),
        ("25", "$175.00", "$17,500.00"),
        ("5", "$35.00", "$3,500.00"),
        ("0.05", "$0.35", "$35.00"),
        ("0.1", "$0.70", "$70.00"),
    ],
)
def test_create_basis(gwei, cost, threshold):
    model = CostModel()
    assert format_usd(op_cost_usd(model, _env(gwei), "create")) == cost
    assert format_usd(break_even(model, _env(gwei), R_CUSTODY)) == threshold


@pytest.mark.parametrize(
    "gwei,cost,exact,threshold",
    [("30", "$26.78", Fraction(26_775, 1_000), "$2,677.50"), ("50", "$44.63", Fraction(44_625, 1_000), "$4,462.50")],
)
def test_aggregated_basis(gwei, cost, exact, threshold):
    model = CostModel()
    assert op_cost_usd(model, _env(gwei), "aggregated") == exact
    assert format_usd(op_cost_usd(model, _env(gwei), "aggregated")) == cost
    assert format_usd(break_even(model, _env(gwei), R_CUSTODY, basis="aggregated")) == threshold


def test_enforce_gas_grows_with_leaves():
    model = CostModel()
    assert model.enforce_gas(5) == 175_000
    assert gas_cost_for_leaves(1) == 2_500
    assert model.enforce_gas(6) - model.enforce_gas(5) == 3_000
    assert model.gas("enforce", tree_leaves=10) == model.enforce_base_gas + 29_500


def test_reference_table():
    table = economics_table(CostModel(), DEFAULT_ENVIRONMENTS)
    assert table.basis == "create"
    assert table.gas == 2_800_000
    assert table.eth_price_usd == Decimal(2_500)
    assert table.r_custody == "1/100"
    assert [row.op_cost_usd for row in table.rows] == ["$700.00", "$175.00", "$35.00", "$0.35", "$0.70"]
    assert [row.break_even_usd for row in table.rows] == [
        "$70,000.00",
        "$17,500.00",
        "$3,500.00",
        "$35.00",
        "$70.00",
    ]
    aggregated = economics_table(CostModel(), DEFAULT_ENVIRONMENTS, aggregated=True)
    assert aggregated.basis == "aggregated"
    assert aggregated.gas == 357_000


def test_mixed_eth_prices_leave_the_column_blank():
    envs = [_env("5"), GasEnvironment(label="dear", gas_price_gwei=Decimal(5), eth_price_usd=Decimal(4_000))]
    assert economics_table(CostModel(), envs).eth_price_usd is None


def test_environments_from_config():
    entries = [{"label": "L2", "gas_price_gwei": "0.05"}, {"label": "L1", "gas_price_gwei": 25, "eth_price_usd": 3000}]
    envs = environments_from_config(entries, Decimal(2_500))
    assert envs[0].gas_price_gwei == Decimal("0.05")
    assert envs[0].eth_price_usd == Decimal(2_500)
    assert envs[1].eth_price_usd == Decimal(3_000)


def test_rounding_and_bad_inputs():
    assert format_usd(Fraction(1, 200)) == "$0.01"
    assert format_usd(Fraction(1, 201)) == "$0.00"
    assert format_usd(Fraction(1_234_567, 1)) == "$1,234,567.00"
    with pytest.raises(ContractViolation):
        format_usd(Fraction(-1))
    with pytest.raises(ContractViolation):
        break_even(CostModel(), _env("5"), Fraction(0))
    with pytest.raises(ContractViolation):
        CostModel().gas("withdraw")
    with pytest.raises(ValueError):
        GasEnvironment(label="free", gas_price_gwei=Decimal(0))


def test_manipulation_incentives(intent):
    assert force_profit_bound(intent) == 10_050
    assert force_profit_bound(intent, keeper=False) == 10_000
    assert force_profit_bound(intent, external=500) == 10_550
    with pytest.raises(ContractViolation):
        force_profit_bound(intent, external=-1)
    assert manipulation_unprofitable(10_051, 10_050, 0)
    assert not manipulation_unprofitable(10_050, 10_050, 0)
    assert not manipulation_unprofitable(10_051, 0, 20_000)
