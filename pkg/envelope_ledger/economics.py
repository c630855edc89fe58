"""Gas-cost model and break-even position sizes.

All arithmetic is exact: prices enter as decimals, are lifted to
``fractions.Fraction`` and only rounded when rendered.
"""
import logging
from decimal import Decimal
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

from pydantic import condecimal, conint, validator

from envelope_ledger.conditions import gas_cost_for_leaves
from envelope_ledger.data import Record
from envelope_ledger.errors import ContractViolation
from envelope_ledger.intents import RedistributionIntent

GWEI = Fraction(1, 10**9)
SMALL_TREE_LEAVES = 5
SMALL_TREE_ENFORCE_GAS = 175_000
ENFORCE_BASE_GAS = SMALL_TREE_ENFORCE_GAS - gas_cost_for_leaves(SMALL_TREE_LEAVES)
assert ENFORCE_BASE_GAS == 160_500

OPERATIONS = ("create", "settle", "enforce", "aggregated")
DEFAULT_ETH_PRICE_USD = Decimal(2_500)
DEFAULT_R_CUSTODY = Fraction(1, 100)


class CostModel(Record):
    create_gas: conint(gt=0) = 2_800_000
    settle_gas: conint(gt=0) = 2_700_000
    enforce_base_gas: conint(gt=0) = ENFORCE_BASE_GAS
    aggregated_amortized_gas: conint(gt=0) = 357_000

    def enforce_gas(self, leaves: int) -> int:
        return self.enforce_base_gas + gas_cost_for_leaves(leaves)

    def gas(self, op: str, tree_leaves: int = SMALL_TREE_LEAVES) -> int:
        if op == "create":
            return self.create_gas
        if op == "settle":
            return self.settle_gas
        if op == "enforce":
            return self.enforce_gas(tree_leaves)
        if op == "aggregated":
            return self.aggregated_amortized_gas
        raise ContractViolation(f"unknown operation {op!r}; expected one of {', '.join(OPERATIONS)}")


class GasEnvironment(Record):
    label: str
    gas_price_gwei: condecimal(gt=0)
    eth_price_usd: condecimal(gt=0) = DEFAULT_ETH_PRICE_USD

    @property
    def usd_per_gas(self) -> Fraction:
        return Fraction(self.gas_price_gwei) * GWEI * Fraction(self.eth_price_usd)


DEFAULT_ENVIRONMENTS = (
    GasEnvironment(label="L1, congestion", gas_price_gwei=Decimal("100")),
    GasEnvironment(label="L1, normal", gas_price_gwei=Decimal("25")),
    GasEnvironment(label="L1, calm", gas_price_gwei=Decimal("5")),
    GasEnvironment(label="L2 (Base, Optimism)", gas_price_gwei=Decimal("0.05")),
    GasEnvironment(label="L2 (Arbitrum, congested)", gas_price_gwei=Decimal("0.1")),
)


def op_cost_usd(model: CostModel, env: GasEnvironment, op: str, tree_leaves: int = SMALL_TREE_LEAVES) -> Fraction:
    return model.gas(op, tree_leaves) * env.usd_per_gas


def break_even(model: CostModel, env: GasEnvironment, r_custody: Fraction, *, basis: str = "create") -> Fraction:
    """Position size at which the avoided custody risk pays for the one-off proof cost."""
    r_custody = Fraction(r_custody)
    if r_custody <= 0:
        raise ContractViolation(f"custody rate must be positive, got {r_custody}")
    return op_cost_usd(model, env, basis) / r_custody


def format_usd(amount: Fraction) -> str:
    """Dollars and cents, halves rounded up."""
    amount = Fraction(amount)
    if amount < 0:
        raise ContractViolation("amounts in the economics table are non-negative")
    cents = (amount * 200 + 1) // 2
    return f"${cents // 100:,}.{cents % 100:02d}"


class EconomicsRow(Record):
    environment: str
    gas_price_gwei: Decimal
    op_cost_usd: str
    break_even_usd: str


class EconomicsTable(Record):
    basis: str
    gas: int
    eth_price_usd: Optional[Decimal] = None
    r_custody: str
    rows: List[EconomicsRow]

    @validator("basis")
    def known_basis(cls, value):
        if value not in ("create", "aggregated"):
            raise ValueError("break-even basis is create or aggregated")
        return value


def economics_table(
    model: CostModel,
    envs: Sequence[GasEnvironment],
    r_custody: Fraction = DEFAULT_R_CUSTODY,
    *,
    aggregated: bool = False,
) -> EconomicsTable:
    basis = "aggregated" if aggregated else "create"
    rows = [
        EconomicsRow(
            environment=env.label,
            gas_price_gwei=env.gas_price_gwei,
            op_cost_usd=format_usd(op_cost_usd(model, env, basis)),
            break_even_usd=format_usd(break_even(model, env, r_custody, basis=basis)),
        )
        for env in envs
    ]
    logging.debug(f"economics table on {basis} basis: {len(rows)} row(s)")
    prices = {env.eth_price_usd for env in envs}
    return EconomicsTable(
        basis=basis,
        gas=model.gas(basis),
        eth_price_usd=prices.pop() if len(prices) == 1 else None,
        r_custody=str(Fraction(r_custody)),
        rows=rows,
    )


def environments_from_config(entries: Sequence[Dict[str, object]], eth_price_usd: Decimal) -> List[GasEnvironment]:
    return [
        GasEnvironment(
            label=str(entry["label"]),
            gas_price_gwei=Decimal(str(entry["gas_price_gwei"])),
            eth_price_usd=Decimal(str(entry.get("eth_price_usd", eth_price_usd))),
        )
        for entry in entries
    ]


# Attacker rationality for oracle manipulation


def force_profit_bound(intent: RedistributionIntent, *, keeper: bool = True, external: int = 0) -> int:
    """Upper bound on what forcing an enforcement can earn the attacker."""
    if external < 0:
        raise ContractViolation("external exposure cannot be negative")
    return intent.max_amount + (intent.keeper_fee if keeper else 0) + external


def manipulation_unprofitable(c_manip: int, pi_force: int, pi_prevent: int) -> bool:
    """A manipulation is deterred only if it costs more than either objective pays."""
    return c_manip > max(pi_force, pi_prevent)
