from enum import IntEnum

from pydantic import conint, validator

from envelope_ledger.crypto_core import FieldElement, address_to_field, hash_5, normalize_address
from envelope_ledger.data import Record


class ActionType(IntEnum):
    LIQUIDATE = 1
    TRANSFER = 2
    SWAP = 3


class RedistributionIntent(Record):
    """What enforcement does with the collateral.

    ``keeper_fee < max_amount <= v`` is a relation constraint, not a model
    rule, so out-of-bounds intents can still be built and rejected in-relation.
    """

    action_type: ActionType
    target_addr: str
    params_hash: FieldElement = FieldElement(0)
    keeper_fee: conint(ge=0, lt=2**128)
    max_amount: conint(ge=0, lt=2**128)

    _target = validator("target_addr", allow_reuse=True)(normalize_address)


def intent_hash(intent: RedistributionIntent) -> FieldElement:
    return hash_5(
        int(intent.action_type),
        address_to_field(intent.target_addr),
        intent.params_hash,
        intent.keeper_fee,
        intent.max_amount,
    )
