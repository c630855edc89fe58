"""Debt accrual, health factor, and the interest-rate models an envelope commits to."""
import math
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Literal, Union

from pydantic import conint

from envelope_ledger.data import PPM, SECONDS_PER_YEAR, Record
from envelope_ledger.errors import ContractViolation, DivisionByZero, TimeReversal

# significant digits for the fractional-year power
DEBT_PRECISION = 60


def debt_accrued(principal: int, rate_ppm: int, t_register: int, t_now: int) -> int:
    """principal * (1 + rate)^(elapsed / year), rounded up to the next unit.

    Whole years compound exactly as rationals. The fractional year is a
    ``DEBT_PRECISION``-digit decimal power, so the only rounding that reaches
    the caller is the final ceiling.
    """
    if t_now < t_register:
        raise TimeReversal(f"debt queried at {t_now}, before registration at {t_register}")
    if principal < 0 or rate_ppm < 0:
        raise ContractViolation("principal and rate must be non-negative")
    whole_years, remainder = divmod(t_now - t_register, SECONDS_PER_YEAR)
    debt = Fraction(principal) * Fraction(PPM + rate_ppm, PPM) ** whole_years
    if remainder and rate_ppm:
        with localcontext() as ctx:
            ctx.prec = DEBT_PRECISION
            growth = (Decimal(PPM + rate_ppm) / Decimal(PPM)) ** (Decimal(remainder) / Decimal(SECONDS_PER_YEAR))
        debt *= Fraction(growth)
    return math.ceil(debt)


def health_factor(col_nominal: int, oracle_price: int, ltv_ppm: int, debt: int) -> int:
    """(collateral * price * LTV) / debt in ppm, rounded down."""
    if debt == 0:
        raise DivisionByZero("position has no debt; health is undefined")
    if debt < 0:
        raise ContractViolation("debt must be non-negative")
    return col_nominal * oracle_price * ltv_ppm // debt


class ConstantRateModel(Record):
    kind: Literal["constant"] = "constant"
    annual_rate_ppm: conint(ge=0, le=10 * PPM)

    def rate_ppm(self, timestamp: int) -> int:
        return self.annual_rate_ppm


class PiecewiseLinearModel(Record):
    """Two-slope utilization curve with a kink at the optimal utilization.

    Utilization starts at ``utilization_ppm`` at ``reference_time`` and drifts
    upward at a committed non-negative speed, so the rate never decreases over
    an envelope's life.
    """

    kind: Literal["piecewise-linear"] = "piecewise-linear"
    base_rate_ppm: conint(ge=0)
    slope1_ppm: conint(ge=0)
    slope2_ppm: conint(ge=0)
    optimal_utilization_ppm: conint(gt=0, lt=PPM)
    utilization_ppm: conint(ge=0, le=PPM)
    utilization_drift_ppm_per_year: conint(ge=0) = 0
    reference_time: conint(ge=0) = 0

    def utilization(self, timestamp: int) -> int:
        elapsed = max(0, timestamp - self.reference_time)
        return min(PPM, self.utilization_ppm + self.utilization_drift_ppm_per_year * elapsed // SECONDS_PER_YEAR)

    def rate_ppm(self, timestamp: int) -> int:
        u = self.utilization(timestamp)
        optimal = self.optimal_utilization_ppm
        if u <= optimal:
            return self.base_rate_ppm + self.slope1_ppm * u // optimal
        return self.base_rate_ppm + self.slope1_ppm + self.slope2_ppm * (u - optimal) // (PPM - optimal)


InterestRateModel = Union[ConstantRateModel, PiecewiseLinearModel]
