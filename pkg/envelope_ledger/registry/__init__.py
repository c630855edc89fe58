from envelope_ledger.intents import ActionType, RedistributionIntent, intent_hash
from envelope_ledger.registry.core import (
    ANONYMOUS,
    DEFAULT_LTV_PPM,
    REGISTRY_CHECKS,
    Envelope,
    EnvelopeRegistry,
    EnvelopeStatus,
    EnvelopeTerms,
    Hook,
    Receipt,
    ReentryAttempt,
    RegistrySnapshot,
)
from envelope_ledger.registry.debt import (
    ConstantRateModel,
    InterestRateModel,
    PiecewiseLinearModel,
    debt_accrued,
    health_factor,
)
from envelope_ledger.registry.templates import (
    PIECEWISE_IRM_ADDR,
    REFERENCE_IRM_ADDR,
    BreakGlassTemplate,
    DeploymentTemplate,
    ParameterSet,
    PendingChange,
    StrictTemplate,
    TimelockTemplate,
    default_parameters,
    signer_set,
)
from envelope_ledger.registry.unsafe import AdminRegistry, ManagedRegistry, PausableRegistry
