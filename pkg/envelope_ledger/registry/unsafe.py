"""Registry variants that break registry immutability or self-custody.

An admin release or a pause switch is exactly the mechanism an immutable
deployment must not have, and a manager who co-signs every owner operation
takes the note out of its owner's sole control. These classes exist so the
audit can show what goes wrong with them, and refuse construction unless the
caller says so explicitly.
"""
import logging
from typing import Any, FrozenSet, Optional

from envelope_ledger.crypto_core import normalize_address
from envelope_ledger.errors import EnforcementPaused, RegistryImmutabilityViolation, Unauthorized
from envelope_ledger.registry.core import EnvelopeRegistry, EnvelopeStatus, Receipt


def _refuse_unless(policy_disabled: bool, variant: str) -> None:
    if not policy_disabled:
        raise RegistryImmutabilityViolation(
            f"{variant} gives a third party power over envelopes; pass policy_disabled=True to build it for an audit"
        )


class AdminRegistry(EnvelopeRegistry):
    def __init__(self, *, admin: str, policy_disabled: bool = False, **kwargs: Any):
        _refuse_unless(policy_disabled, "AdminRegistry")
        super().__init__(**kwargs)
        self.admin = normalize_address(admin)

    def required_approvals(self, operation: str) -> FrozenSet[str]:
        if operation == "admin_release":
            return frozenset({self.admin})
        return super().required_approvals(operation)

    def admin_release(self, eid: int, *, caller: str) -> Receipt:
        """Move an active envelope's marker to the tomb with no proof and no repayment."""
        with self._transaction("admin_release", eid):
            caller = normalize_address(caller)
            if caller != self.admin:
                raise Unauthorized("only the admin may release envelopes")
            env = self.envelope(eid)
            if not self.is_live(eid):
                raise Unauthorized(f"envelope {eid} is not active")
            self._retire(env, EnvelopeStatus.SETTLED)
            logging.info(f"envelope {eid} released by admin")
            return Receipt(
                operation="admin_release",
                eid=eid,
                caller=caller,
                status=EnvelopeStatus.SETTLED,
                markers_read=[env.nf_encumber],
            )


class PausableRegistry(EnvelopeRegistry):
    _STATE = EnvelopeRegistry._STATE + ("paused",)

    def __init__(self, *, pauser: str, policy_disabled: bool = False, **kwargs: Any):
        _refuse_unless(policy_disabled, "PausableRegistry")
        super().__init__(**kwargs)
        self.pauser = normalize_address(pauser)
        self.paused = False

    def required_approvals(self, operation: str) -> FrozenSet[str]:
        if operation == "pause":
            return frozenset({self.pauser})
        return super().required_approvals(operation)

    def set_paused(self, paused: bool, *, caller: str) -> None:
        if normalize_address(caller) != self.pauser:
            raise Unauthorized("only the pauser may toggle enforcement")
        self.paused = paused
        logging.info(f"enforcement {'paused' if paused else 'resumed'}")

    def enforce(self, eid, snapshot, revealed_tree, revealed_intent, **kwargs):
        if self.paused:
            raise EnforcementPaused("enforcement is paused")
        return super().enforce(eid, snapshot, revealed_tree, revealed_intent, **kwargs)


class ManagedRegistry(EnvelopeRegistry):
    """Spend, create and settle go through only with the manager's co-signature."""

    MANAGED = frozenset({"spend", "create", "settle"})

    def __init__(self, *, manager: str, policy_disabled: bool = False, **kwargs: Any):
        _refuse_unless(policy_disabled, "ManagedRegistry")
        super().__init__(**kwargs)
        self.manager = normalize_address(manager)

    def required_approvals(self, operation: str) -> FrozenSet[str]:
        if operation in self.MANAGED:
            return frozenset({self.manager})
        return super().required_approvals(operation)

    def _countersigned(self, operation: str, cosigner: Optional[str]) -> None:
        if cosigner is None or normalize_address(cosigner) != self.manager:
            raise Unauthorized(f"{operation} needs the manager's co-signature")

    def spend(self, st, att, *, cosigner: Optional[str] = None, **kwargs):
        self._countersigned("spend", cosigner)
        return super().spend(st, att, **kwargs)

    def create(self, st, att, terms, *, cosigner: Optional[str] = None, **kwargs):
        self._countersigned("create", cosigner)
        return super().create(st, att, terms, **kwargs)

    def settle(self, eid, st, att, *, cosigner: Optional[str] = None, **kwargs):
        self._countersigned("settle", cosigner)
        return super().settle(eid, st, att, **kwargs)
