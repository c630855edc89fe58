from typing import Iterable, List, Optional


class EnvelopeError(Exception):
    """Root of every error raised by the ledger simulator."""


class ContractViolation(EnvelopeError, ValueError):
    """A caller broke an operation's precondition."""


class InputError(EnvelopeError):
    """A scenario, tree or snapshot document failed to parse or validate."""

    def __init__(self, message: str, *, location: Optional[str] = None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class InvariantViolation(EnvelopeError):
    """A state-machine post-condition broke. Always a bug, never a revert."""


# Value-level errors


class DegenerateKey(ContractViolation):
    pass


class ZeroValue(ContractViolation):
    pass


class ZeroBlinding(ContractViolation):
    pass


class CapacityExceeded(ContractViolation):
    pass


class NoSuchLeaf(ContractViolation):
    pass


class MalformedTree(InputError):
    pass


class OracleUnavailable(EnvelopeError):
    pass


class InsufficientHistory(EnvelopeError):
    pass


class TimeReversal(ContractViolation):
    pass


class DivisionByZero(EnvelopeError, ArithmeticError):
    """Health is undefined for a position without debt."""


class NoAccount(ContractViolation):
    pass


class IncompleteAdapter(ContractViolation):
    pass


class RegistryImmutabilityViolation(EnvelopeError):
    """Refusal to build a registry that hands a third party power over envelopes."""


# Protocol rejections: what a contract revert looks like in the simulator


class ProtocolRejection(EnvelopeError):
    pass


class AttestationInvalid(ProtocolRejection):
    pass


class AlreadyEncumbered(ProtocolRejection):
    pass


class NoteAlreadySpent(ProtocolRejection):
    pass


class NoteSpentMarker(ProtocolRejection):
    """Spend refused because the note's encumbrance marker is active."""


class CreateFrozen(ProtocolRejection):
    pass


class NotActive(ProtocolRejection):
    pass


class EnvelopeMismatch(ProtocolRejection):
    pass


class StaleRoot(ProtocolRejection):
    pass


class TermsMismatch(ProtocolRejection):
    pass


class UnknownIrm(ProtocolRejection):
    pass


class InsufficientRepayment(ProtocolRejection):
    pass


class CondHashMismatch(ProtocolRejection):
    pass


class IntentHashMismatch(ProtocolRejection):
    pass


class ConditionFalse(ProtocolRejection):
    pass


class NotYetExpired(ProtocolRejection):
    pass


class EnforcementPaused(ProtocolRejection):
    pass


class ImmutableRegistry(ProtocolRejection):
    pass


class ParameterChangeRejected(ProtocolRejection):
    pass


class Unauthorized(ProtocolRejection):
    pass


class AblmRejection(ProtocolRejection):
    """An account-ledger transaction reverted or failed authorization."""


# Relation checker errors


class RelationViolation(ProtocolRejection):
    constraint: str = "?"

    def __init__(self, message: str = "", *, violations: Iterable[str] = ()):
        self.violations: List[str] = list(violations) or [self.constraint]
        super().__init__(message or f"constraint {self.constraint} violated")


class Constraint1Violation(RelationViolation):
    constraint = "1"


class Constraint2Violation(RelationViolation):
    constraint = "2"


class Constraint3Violation(RelationViolation):
    constraint = "3"


class Constraint4Violation(RelationViolation):
    constraint = "4"


class Constraint6Violation(RelationViolation):
    constraint = "6"


class Constraint7Violation(RelationViolation):
    constraint = "7"


class Constraint8Violation(RelationViolation):
    constraint = "8"


class Constraint9Violation(RelationViolation):
    constraint = "9"


class Constraint10Violation(RelationViolation):
    constraint = "10"


class Constraint11Violation(RelationViolation):
    constraint = "11"


class Constraint12Violation(RelationViolation):
    constraint = "12"


class Constraint13Violation(RelationViolation):
    constraint = "13"


class PubkeyViolation(RelationViolation):
    constraint = "pubkey"


class SpendNullifierViolation(RelationViolation):
    constraint = "nullifier"


class MembershipViolation(RelationViolation):
    constraint = "membership"


class NullifierBindingViolation(RelationViolation):
    constraint = "binding"


class OwnershipViolation(RelationViolation):
    constraint = "ownership"


class RangeViolation(RelationViolation):
    constraint = "range"
