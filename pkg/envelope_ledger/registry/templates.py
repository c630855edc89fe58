"""Deployment templates: how much governance a registry deployment admits.

None of them can reach the marker sets. The timelock template only swaps the
parameter set that future envelopes snapshot, and break-glass only closes the
door on new envelopes.
"""
from typing import Dict, Iterable, List, Literal, Union

from pydantic import conint, root_validator, validator

from envelope_ledger.crypto_core import derive_address, normalize_address
from envelope_ledger.data import DAY, Record
from envelope_ledger.errors import ImmutableRegistry, ParameterChangeRejected, Unauthorized
from envelope_ledger.registry.debt import ConstantRateModel, InterestRateModel, PiecewiseLinearModel

MIN_TIMELOCK_SECONDS = 7 * DAY
MIN_QUORUM = 5
MIN_SIGNERS = 9

REFERENCE_IRM_ADDR = derive_address("irm/constant/5pct")
PIECEWISE_IRM_ADDR = derive_address("irm/piecewise-linear/reference")


class ParameterSet(Record):
    """Operational parameters a new envelope snapshots at registration."""

    irm_models: Dict[str, InterestRateModel]

    @validator("irm_models")
    def normalized_addresses(cls, models):
        return {normalize_address(addr): model for addr, model in models.items()}

    def irm(self, address: str) -> InterestRateModel:
        return self.irm_models[normalize_address(address)]

    def knows(self, address: str) -> bool:
        return normalize_address(address) in self.irm_models


def default_parameters() -> ParameterSet:
    return ParameterSet(
        irm_models={
            REFERENCE_IRM_ADDR: ConstantRateModel(annual_rate_ppm=50_000),
            PIECEWISE_IRM_ADDR: PiecewiseLinearModel(
                base_rate_ppm=10_000,
                slope1_ppm=40_000,
                slope2_ppm=600_000,
                optimal_utilization_ppm=800_000,
                utilization_ppm=500_000,
                utilization_drift_ppm_per_year=50_000,
            ),
        }
    )


class PendingChange(Record):
    proposal_id: int
    parameters: ParameterSet
    proposed_at: int
    effective_at: int


def _quorum(signers: List[str], approvals: Iterable[str]) -> int:
    approved = {normalize_address(a) for a in approvals}
    return len(approved & set(signers))


class _Multisig(Record):
    signers: List[str]
    threshold: conint(ge=1)

    @validator("signers", each_item=True)
    def normalized_signer(cls, value):
        return normalize_address(value)

    @root_validator(skip_on_failure=True)
    def threshold_reachable(cls, values):
        if len(set(values["signers"])) < values["threshold"]:
            raise ValueError("threshold exceeds the number of distinct signers")
        return values

    def approved(self, approvals: Iterable[str]) -> bool:
        return _quorum(self.signers, approvals) >= self.threshold


class StrictTemplate(Record):
    """No admin, no parameter registry, no pause."""

    kind: Literal["strict"] = "strict"

    def change_effective_at(self, approvals: Iterable[str], now: int) -> int:
        raise ImmutableRegistry("strict deployment has no parameter path")

    def authorize_freeze(self, approvals: Iterable[str]) -> None:
        raise ImmutableRegistry("strict deployment has no break-glass path")


class TimelockTemplate(_Multisig):
    """Multisig-governed parameter set behind a timelock; state machine untouched."""

    kind: Literal["timelock"] = "timelock"
    timelock_seconds: conint(ge=MIN_TIMELOCK_SECONDS) = MIN_TIMELOCK_SECONDS
    threshold: conint(ge=MIN_QUORUM) = MIN_QUORUM

    @validator("signers")
    def enough_signers(cls, signers):
        if len(set(signers)) < MIN_SIGNERS:
            raise ValueError(f"timelock governance needs at least {MIN_SIGNERS} distinct signers")
        return signers

    def change_effective_at(self, approvals: Iterable[str], now: int) -> int:
        if not self.approved(approvals):
            raise ParameterChangeRejected(f"parameter change lacks a {self.threshold}-of-{len(self.signers)} quorum")
        return now + self.timelock_seconds

    def authorize_freeze(self, approvals: Iterable[str]) -> None:
        raise ImmutableRegistry("timelock deployment has no break-glass path")


class BreakGlassTemplate(_Multisig):
    """A quorum may freeze ``create``; with ``drain_frozen`` owners then get a drain exit."""

    kind: Literal["break-glass"] = "break-glass"
    drain_frozen: bool = True

    def change_effective_at(self, approvals: Iterable[str], now: int) -> int:
        raise ImmutableRegistry("break-glass deployment has no parameter path")

    def authorize_freeze(self, approvals: Iterable[str]) -> None:
        if not self.approved(approvals):
            raise Unauthorized(f"freeze lacks a {self.threshold}-of-{len(self.signers)} quorum")


DeploymentTemplate = Union[StrictTemplate, TimelockTemplate, BreakGlassTemplate]


def signer_set(n: int, label: str = "governance") -> List[str]:
    return [derive_address(f"{label}/signer/{i}") for i in range(n)]
