"""Client-side prover for a note owner.

The wallet keeps the owner's notes and their openings, derives Merkle paths
from the registry's tree, and asks the registry's relation checker for
attestations. Scenarios, games and the audit adapters all drive the registry
through it.
"""
import random
from typing import Dict, Optional, Tuple

from envelope_ledger.conditions import ConditionTree, cond_hash
from envelope_ledger.crypto_core import FieldElement, FieldLike, KeyPair, derive_address
from envelope_ledger.errors import ContractViolation
from envelope_ledger.intents import RedistributionIntent
from envelope_ledger.merkle import MerklePath
from envelope_ledger.notes import Note, PositionOpening, commit, spend_nullifier
from envelope_ledger.registry import EnvelopeRegistry, EnvelopeTerms, Receipt
from envelope_ledger.relations import (
    Attestation,
    EncumberStatement,
    EncumberWitness,
    SettleStatement,
    SettleWitness,
    SpendStatement,
    SpendWitness,
    encumber_statement,
    settle_statement,
    spend_statement,
)


class OwnerWallet:
    def __init__(self, *, keypair: KeyPair, registry: EnvelopeRegistry, rng: random.Random, label: str = "owner"):
        self.keypair = keypair
        self.registry = registry
        self.rng = rng
        self.label = label
        self.notes: Dict[FieldElement, Note] = {}
        self.openings: Dict[FieldElement, PositionOpening] = {}

    def mint(self, value: int, aid: FieldLike = 1) -> Note:
        """Create a fresh note for this owner and shield it."""
        note = Note.new(self.rng, value, self.keypair, aid)
        self.registry.shield(commit(note))
        self.notes[commit(note)] = note
        return note

    def path(self, note: Note) -> MerklePath:
        tree = self.registry.tree
        return tree.prove_membership(tree.index_of(commit(note)))

    def nf_spend(self, note: Note) -> FieldElement:
        return spend_nullifier(self.keypair.sk, commit(note))

    # Encumbrance

    def prove_encumber(
        self,
        note: Note,
        tree: ConditionTree,
        intent: RedistributionIntent,
        *,
        debt_principal: int,
        irm_addr: str,
        blinded: bool = False,
    ) -> Tuple[EncumberStatement, Attestation]:
        opening = PositionOpening.for_note(note, debt_principal, rng=self.rng if blinded else None)
        witness = EncumberWitness.for_note(note, self.keypair.sk, self.path(note), opening)
        st = encumber_statement(
            witness, intent, cond_hash=cond_hash(tree), irm_addr=irm_addr, tree_root=self.registry.root
        )
        att = self.registry.checker.check_encumber(st, witness, intent)
        self.openings[commit(note)] = opening
        return st, att

    def encumber(
        self,
        note: Note,
        tree: ConditionTree,
        intent: RedistributionIntent,
        terms: EnvelopeTerms,
        *,
        now: int,
        blinded: bool = False,
        **kwargs,
    ) -> Receipt:
        st, att = self.prove_encumber(
            note, tree, intent, debt_principal=terms.debt_principal, irm_addr=terms.irm_addr, blinded=blinded
        )
        return self.registry.create(
            st, att, terms, now=now, caller=self.address, nf_spend=self.nf_spend(note), **kwargs
        )

    # Spend

    def prove_spend(
        self, note: Note, *, nf_encumber_public_input: Optional[FieldElement] = None
    ) -> Tuple[SpendStatement, Attestation]:
        witness = SpendWitness.for_note(note, self.keypair.sk, self.path(note))
        st = spend_statement(witness, self.registry.root, nf_encumber_public_input)
        return st, self.registry.checker.check_spend(st, witness)

    def spend(self, note: Note, **kwargs) -> Receipt:
        st, att = self.prove_spend(note)
        return self.registry.spend(st, att, caller=self.address, **kwargs)

    # Settle

    def prove_settle(self, note: Note, eid: int, repayment: int) -> Tuple[SettleStatement, Attestation]:
        witness = SettleWitness.for_note(note, self.keypair.sk, self.path(note))
        st = settle_statement(witness, eid=eid, tree_root=self.registry.root, repayment_amount=repayment)
        return st, self.registry.checker.check_settle(st, witness)

    def settle(self, note: Note, eid: int, repayment: int, *, now: int, **kwargs) -> Receipt:
        st, att = self.prove_settle(note, eid, repayment)
        return self.registry.settle(eid, st, att, now=now, caller=self.address, **kwargs)

    @property
    def address(self) -> str:
        return derive_address(f"{self.label}/{self.keypair.pk_x.hex()}")

    def note(self, cm: FieldLike) -> Note:
        try:
            return self.notes[FieldElement(cm)]
        except KeyError:
            raise ContractViolation(f"wallet holds no note {FieldElement(cm).hex()}") from None
