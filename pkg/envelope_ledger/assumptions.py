"""The assumptions the security results rest on, and where the simulator stands in for each."""
from enum import Enum
from typing import List, Tuple

from envelope_ledger.data import Record
from envelope_ledger.errors import ContractViolation


class AssumptionKind(str, Enum):
    CRYPTOGRAPHIC = "cryptographic"
    IMPLEMENTATION = "implementation"
    DEPLOYMENT = "deployment"
    ECONOMIC = "economic"


class Assumption(Record):
    key: str
    kind: AssumptionKind
    statement: str
    modeled_by: str
    modules: List[str]
    games: List[str] = []
    post_quantum: bool = True


LEDGER: Tuple[Assumption, ...] = (
    Assumption(
        key="snark-knowledge-soundness",
        kind=AssumptionKind.CRYPTOGRAPHIC,
        statement="Every accepted proof has an extractable witness satisfying the relation.",
        modeled_by="Attestations are HMAC-sealed by the relation checker only after every constraint holds.",
        modules=["relations", "registry"],
        games=["encumber", "settle"],
    ),
    Assumption(
        key="hash-collision-resistance",
        kind=AssumptionKind.CRYPTOGRAPHIC,
        statement="No efficient adversary finds two inputs with the same hash at any width in use.",
        modeled_by="The substitute permutation is treated as injective; no game searches for collisions.",
        modules=["crypto_core", "notes", "merkle", "relations"],
        games=["encumber", "settle", "eig"],
    ),
    Assumption(
        key="discrete-log",
        kind=AssumptionKind.CRYPTOGRAPHIC,
        statement="Recovering a secret key from its Grumpkin public key is infeasible.",
        modeled_by="Settle and agent adversaries are never handed the owner key.",
        modules=["crypto_core", "relations"],
        games=["settle", "agent"],
        post_quantum=False,
    ),
    Assumption(
        key="oracle-integrity",
        kind=AssumptionKind.DEPLOYMENT,
        statement="All oracle values read within one transaction come from the same block.",
        modeled_by="Enforcement evaluates a whole condition tree against a single OracleSnapshot.",
        modules=["conditions", "registry"],
    ),
    Assumption(
        key="proof-zero-knowledge",
        kind=AssumptionKind.IMPLEMENTATION,
        statement="Proofs reveal nothing beyond their public inputs.",
        modeled_by="Attestations carry only the statement digest and the seal.",
        modules=["relations"],
        games=["eig"],
    ),
    Assumption(
        key="hash-indifferentiability",
        kind=AssumptionKind.CRYPTOGRAPHIC,
        statement="The hash is indifferentiable from a random oracle at each width in use (heuristic).",
        modeled_by="Distinguishing games compare empirical win rates with a coin flip.",
        modules=["crypto_core", "notes"],
        games=["fwdback", "eig"],
    ),
    Assumption(
        key="registry-immutability",
        kind=AssumptionKind.DEPLOYMENT,
        statement="No admin key, proxy or other path can write the marker sets outside the lifecycle functions.",
        modeled_by=(
            "Marker sets are private to EnvelopeRegistry; admin and pausable variants refuse to build "
            "unless the policy is disabled for an audit."
        ),
        modules=["registry", "ledger_models"],
        games=["settle"],
    ),
    Assumption(
        key="irm-correctness",
        kind=AssumptionKind.ECONOMIC,
        statement=(
            "The interest-rate model is deterministic in block time and committed parameters, and non-decreasing."
        ),
        modeled_by="Envelopes snapshot their rate model at create; models are pure functions of the timestamp.",
        modules=["registry"],
        games=["settle"],
    ),
)


def assumption(key: str) -> Assumption:
    for entry in LEDGER:
        if entry.key == key:
            return entry
    raise ContractViolation(f"no assumption {key!r}")


def depends_on(module: str) -> List[Assumption]:
    return [entry for entry in LEDGER if module in entry.modules]
