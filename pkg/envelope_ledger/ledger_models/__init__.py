from envelope_ledger.ledger_models.ablm import (
    AccountClass,
    AblmState,
    ProgramPolicy,
    Restriction,
    SignedTransaction,
    apply,
    key_address,
    write_domain,
)
from envelope_ledger.ledger_models.audit import (
    AblmAdapter,
    Action,
    MechanismAdapter,
    NceeVerdict,
    PropertyVerdict,
    ncee_audit,
)
from envelope_ledger.ledger_models.escape import (
    EscapeTrace,
    KsSetup,
    build_setup,
    ks_escape,
    random_state,
    replay_trace,
)
from envelope_ledger.ledger_models.pslm import PslmAdapter
