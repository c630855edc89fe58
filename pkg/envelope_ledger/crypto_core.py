"""Field arithmetic, the domain-tagged hash convention and owner keys.

The ambient field is the scalar field of BN254. Owner keys live on Grumpkin,
the curve y^2 = x^3 - 17 defined over that same field, whose group order is the
BN254 base-field prime. Both moduli come from ``py_ecc.bn128``.

The hash is a width-4 Poseidon2-shaped permutation (x^5 S-box, 8 full and 56
partial rounds, the Poseidon2 4x4 external matrix and a diagonal internal
matrix). Round constants are derived from the suite identifier, so any digest
is only comparable with digests produced under the same identifier.
"""
import hashlib
import random
import re
from enum import IntEnum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from py_ecc import bn128
from py_ecc.fields.field_elements import FQ
from pydantic import BaseModel

from envelope_ledger.errors import ContractViolation, DegenerateKey

FIELD_MODULUS = bn128.curve_order
GRUMPKIN_ORDER = bn128.field_modulus

WIDTH = 4
HASH_WIDTHS = (2, 3, 4, 5)
FULL_ROUNDS = 8
PARTIAL_ROUNDS = 56
SBOX_POWER = 5
DEFAULT_SUITE_ID = "poseidon2-substitute/bn254/t4/rf8-rp56/v1"

EXTERNAL_MATRIX = (
    (5, 7, 1, 3),
    (4, 6, 1, 1),
    (1, 3, 5, 7),
    (1, 1, 4, 6),
)
INTERNAL_DIAGONAL = (2, 3, 5, 9)

ADDRESS_PATTERN = re.compile(r"^0x[0-9a-fA-F]{1,40}$")


class FieldElement(FQ):
    """An element of the BN254 scalar field.

    Accepts ints (reduced modulo p), other field elements, and decimal or
    0x-prefixed hex strings. Usable directly as a pydantic v1 field type.
    """

    field_modulus = FIELD_MODULUS

    def __init__(self, val: Union["FieldElement", int, str]) -> None:
        if isinstance(val, str):
            val = int(val, 16) if val.lower().startswith("0x") else int(val)
        super().__init__(val)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, FQ):
            return self.n == other.n
        if isinstance(other, int):
            return self.n == other % FIELD_MODULUS
        return NotImplemented

    def __ne__(self, other: object) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __hash__(self) -> int:
        return hash(self.n)

    def __truediv__(self, other: Union["FieldElement", int]) -> "FieldElement":
        on = other.n if isinstance(other, FQ) else int(other)
        return type(self)(self.n * _inverse(on))

    def __rtruediv__(self, other: Union["FieldElement", int]) -> "FieldElement":
        on = other.n if isinstance(other, FQ) else int(other)
        return type(self)(on * _inverse(self.n))

    def inverse(self) -> "FieldElement":
        return type(self)(_inverse(self.n))

    def hex(self) -> str:
        return f"0x{self.n:064x}"

    @classmethod
    def __get_validators__(cls):
        yield cls.validate

    @classmethod
    def validate(cls, value: object) -> "FieldElement":
        if isinstance(value, cls):
            return value
        if isinstance(value, bool) or not isinstance(value, (int, str, FQ)):
            raise TypeError("field element must be an int or a hex string")
        if isinstance(value, int) and not 0 <= value < FIELD_MODULUS:
            raise ValueError("integer lies outside the field")
        return cls(value)


FieldLike = Union[FieldElement, int]
Point = Tuple[FieldElement, FieldElement]


def _inverse(value: int) -> int:
    value %= FIELD_MODULUS
    if value == 0:
        raise ContractViolation("zero has no inverse")
    return pow(value, -1, FIELD_MODULUS)


def _reduce(value: FieldLike) -> int:
    if isinstance(value, FQ):
        return value.n
    return int(value) % FIELD_MODULUS


def random_field_element(rng: random.Random, *, nonzero: bool = True) -> FieldElement:
    return FieldElement(rng.randrange(1 if nonzero else 0, FIELD_MODULUS))


class DomainTag(IntEnum):
    # ASCII of the tag name, read as a big-endian integer
    CM_TAG = 0x636D
    SPEND_TAG = 0x7370656E64
    ENCUMBER_TAG = 0x656E63756D626572
    REPAY_TAG = 0x7265706179
    PARAMS_TAG = 0x706172616D73

    @property
    def element(self) -> FieldElement:
        return FieldElement(int(self))


def _round_constants(identifier: str, rounds: int) -> Tuple[Tuple[int, ...], ...]:
    rows = []
    for rnd in range(rounds):
        row = []
        for lane in range(WIDTH):
            digest = hashlib.sha256(f"{identifier}:{rnd}:{lane}".encode()).digest()
            row.append(int.from_bytes(digest, "big") % FIELD_MODULUS)
        rows.append(tuple(row))
    return tuple(rows)


def _external_layer(state: List[int]) -> List[int]:
    return [
        sum(coefficient * value for coefficient, value in zip(row, state)) % FIELD_MODULUS
        for row in EXTERNAL_MATRIX
    ]


def _internal_layer(state: List[int]) -> List[int]:
    total = sum(state)
    return [(value * d + total) % FIELD_MODULUS for value, d in zip(state, INTERNAL_DIAGONAL)]


class HashSuite:
    """A versioned width-4 permutation plus the sponge convention around it.

    ``hash(inputs, k)`` starts from a width-specific initial state (the
    permutation of ``[0, 0, 0, k]``), adds the first four inputs lane-wise,
    zero-padding shorter inputs, and permutes. A fifth input is added to lane
    0 before a second permutation. The digest is lane 0.
    """

    def __init__(
        self,
        *,
        identifier: str = DEFAULT_SUITE_ID,
        full_rounds: int = FULL_ROUNDS,
        partial_rounds: int = PARTIAL_ROUNDS,
    ):
        if full_rounds % 2:
            raise ContractViolation("full rounds must split evenly around the partial rounds")
        self.identifier = identifier
        self.full_rounds = full_rounds
        self.partial_rounds = partial_rounds
        self._constants = _round_constants(identifier, full_rounds + partial_rounds)
        self._initial_states: Dict[int, Tuple[int, ...]] = {
            k: tuple(self.permute([0, 0, 0, k])) for k in HASH_WIDTHS
        }

    def permute(self, state: Sequence[int]) -> List[int]:
        if len(state) != WIDTH:
            raise ContractViolation(f"permutation state must have {WIDTH} lanes")
        p = FIELD_MODULUS
        half = self.full_rounds // 2
        constants = iter(self._constants)
        lanes = _external_layer([value % p for value in state])
        for _ in range(half):
            rc = next(constants)
            lanes = _external_layer([pow((v + c) % p, SBOX_POWER, p) for v, c in zip(lanes, rc)])
        for _ in range(self.partial_rounds):
            rc = next(constants)
            lanes[0] = pow((lanes[0] + rc[0]) % p, SBOX_POWER, p)
            lanes = _internal_layer(lanes)
        for _ in range(half):
            rc = next(constants)
            lanes = _external_layer([pow((v + c) % p, SBOX_POWER, p) for v, c in zip(lanes, rc)])
        return lanes

    def hash(self, inputs: Sequence[FieldLike], k: int) -> FieldElement:
        if k not in HASH_WIDTHS:
            raise ContractViolation(f"hash width must be one of {HASH_WIDTHS}, got {k}")
        if len(inputs) != k:
            raise ContractViolation(f"hash_{k} takes {k} inputs, got {len(inputs)}")
        values = [_reduce(value) for value in inputs]
        head = values[:WIDTH] + [0] * (WIDTH - min(k, WIDTH))
        lanes = [(s + x) % FIELD_MODULUS for s, x in zip(self._initial_states[k], head)]
        lanes = self.permute(lanes)
        for extra in values[WIDTH:]:
            lanes[0] = (lanes[0] + extra) % FIELD_MODULUS
            lanes = self.permute(lanes)
        return FieldElement(lanes[0])

    def __repr__(self) -> str:
        return f"HashSuite({self.identifier!r})"


DEFAULT_SUITE = HashSuite()


def hash_k(inputs: Sequence[FieldLike], k: int, suite: Optional[HashSuite] = None) -> FieldElement:
    return (suite or DEFAULT_SUITE).hash(inputs, k)


def hash_2(a: FieldLike, b: FieldLike) -> FieldElement:
    return DEFAULT_SUITE.hash((a, b), 2)


def hash_3(a: FieldLike, b: FieldLike, c: FieldLike) -> FieldElement:
    return DEFAULT_SUITE.hash((a, b, c), 3)


def hash_4(a: FieldLike, b: FieldLike, c: FieldLike, d: FieldLike) -> FieldElement:
    return DEFAULT_SUITE.hash((a, b, c, d), 4)


def hash_5(a: FieldLike, b: FieldLike, c: FieldLike, d: FieldLike, e: FieldLike) -> FieldElement:
    return DEFAULT_SUITE.hash((a, b, c, d, e), 5)


def fold_hash(values: Iterable[FieldLike], start: FieldLike = DomainTag.PARAMS_TAG) -> FieldElement:
    """Pairwise hash_2 fold of ``values`` seeded with ``start``, closed by the count."""
    acc: FieldLike = start
    count = 0
    for value in values:
        acc = hash_2(acc, value)
        count += 1
    return hash_2(acc, count)


def encode_text(data: Union[str, bytes]) -> FieldElement:
    raw = data.encode() if isinstance(data, str) else bytes(data)
    chunks = [int.from_bytes(raw[i : i + 31], "big") for i in range(0, len(raw), 31)]
    return fold_hash([len(raw), *chunks], DomainTag.PARAMS_TAG)


def normalize_address(address: str) -> str:
    if not isinstance(address, str) or not ADDRESS_PATTERN.match(address):
        raise ContractViolation(f"not a 0x-prefixed address of at most 20 bytes: {address!r}")
    return f"0x{int(address, 16):040x}"


def address_to_field(address: str) -> FieldElement:
    return FieldElement(int(normalize_address(address), 16))


def field_to_address(value: FieldLike) -> str:
    return f"0x{_reduce(value):040x}"


def derive_address(label: str) -> str:
    """Deterministic 20-byte address for a human label or key id."""
    return "0x" + hashlib.sha256(label.encode()).hexdigest()[:40]


# Grumpkin


GRUMPKIN_B = FieldElement(-17)


def _sqrt(value: int) -> Optional[int]:
    """Tonelli-Shanks square root in the ambient field, or None for non-residues."""
    p = FIELD_MODULUS
    value %= p
    if value == 0:
        return 0
    if pow(value, (p - 1) // 2, p) != 1:
        return None
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, root = s, pow(z, q, p), pow(value, q, p), pow(value, (q + 1) // 2, p)
    while t != 1:
        i, square = 0, t
        while square != 1:
            square = square * square % p
            i += 1
        b = pow(c, 1 << (m - i - 1), p)
        m, c, t, root = i, b * b % p, t * b * b % p, root * b % p
    return root


def _find_generator() -> Point:
    x = 0
    while True:
        y = _sqrt(x**3 - 17)
        if y is not None:
            return FieldElement(x), FieldElement(min(y, FIELD_MODULUS - y))
        x += 1


GENERATOR: Point = _find_generator()


def is_on_curve(point: Optional[Point]) -> bool:
    if point is None:
        return False
    return bool(bn128.is_on_curve(point, GRUMPKIN_B))


def point_add(p1: Point, p2: Point) -> Optional[Point]:
    return bn128.add(p1, p2)


def point_double(point: Point) -> Point:
    return bn128.double(point)


@lru_cache(maxsize=4096)
def _scalar_multiple(scalar: int) -> Point:
    return bn128.multiply(GENERATOR, scalar)


def derive_pubkey(sk: FieldLike) -> Point:
    scalar = int(sk)
    if scalar == 0:
        raise DegenerateKey("owner key must be nonzero")
    if not 0 < scalar < GRUMPKIN_ORDER:
        raise ContractViolation("owner key must lie in [1, group order)")
    return _scalar_multiple(scalar)


class KeyPair(BaseModel):
    sk: int
    pk_x: FieldElement
    pk_y: FieldElement

    class Config:
        allow_mutation = False
        json_encoders = {FieldElement: FieldElement.hex}

    @classmethod
    def from_secret(cls, sk: int) -> "KeyPair":
        pk_x, pk_y = derive_pubkey(sk)
        return cls(sk=sk, pk_x=pk_x, pk_y=pk_y)

    @classmethod
    def generate(cls, rng: random.Random) -> "KeyPair":
        return cls.from_secret(rng.randrange(1, GRUMPKIN_ORDER))
