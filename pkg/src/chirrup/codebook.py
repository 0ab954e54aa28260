"""Binary chirp codewords and the bit <-> (P, b, slot) bijection.

Index convention, used by every module in the package: entry ``a`` of a
length-``2**m`` vector corresponds to the binary m-tuple ``v`` with
``v[j] = (a >> j) & 1`` (little-endian).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# i**k for k = 0..3
I_POWERS = np.array([1, 1j, -1, -1j], dtype=np.complex128)

CHECK_DIGIT = (0, 1)


class Mode(str, enum.Enum):
    COMPLEX = "complex"
    REAL = "real"


@lru_cache(maxsize=None)
def index_bits(m: int) -> np.ndarray:
    """(2**m, m) int64 matrix whose row ``a`` is the binary expansion of ``a``."""
    a = np.arange(1 << m, dtype=np.int64)
    out = (a[:, None] >> np.arange(m, dtype=np.int64)[None, :]) & 1
    out.setflags(write=False)
    return out


def vec_to_index(v) -> int:
    return int(sum(int(bit) << j for j, bit in enumerate(v)))


def index_to_vec(a: int, m: int) -> np.ndarray:
    return ((int(a) >> np.arange(m)) & 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ChirpParams:
    """One codeword label: symmetric binary ``P`` (m x m) and binary ``b`` (m)."""

    P: np.ndarray
    b: np.ndarray
    _key: bytes = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.uint8)
        b = np.asarray(self.b, dtype=np.uint8).reshape(-1)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got shape {P.shape}")
        if P.shape[0] != b.shape[0]:
            raise ValueError(f"P is {P.shape[0]}x{P.shape[0]} but b has {b.shape[0]} entries")
        if np.any(P > 1) or np.any(b > 1):
            raise ValueError("P and b must be binary")
        if not np.array_equal(P, P.T):
            raise ValueError("P must be symmetric")
        P.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_key", P.tobytes() + b"|" + b.tobytes())

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def check_digit(self) -> int:
        return int(self.P[CHECK_DIGIT])

    def is_real(self) -> bool:
        return not np.any(np.diag(self.P))

    def with_check_digit(self, value: int) -> "ChirpParams":
        P = self.P.copy()
        P[CHECK_DIGIT] = P[CHECK_DIGIT[::-1]] = value
        return ChirpParams(P, self.b)

    def key(self) -> bytes:
        return self._key

    def __eq__(self, other):
        if not isinstance(other, ChirpParams):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    @classmethod
    def zeros(cls, m: int) -> "ChirpParams":
        return cls(np.zeros((m, m), np.uint8), np.zeros(m, np.uint8))

    @classmethod
    def random(cls, m: int, rng: np.random.Generator, mode: Mode = Mode.COMPLEX) -> "ChirpParams":
        upper = np.triu(rng.integers(0, 2, size=(m, m), dtype=np.uint8))
        if mode is Mode.REAL:
            np.fill_diagonal(upper, 0)
        P = upper | upper.T
        return cls(P, rng.integers(0, 2, size=m, dtype=np.uint8))


def chirp_exponent(v, params: ChirpParams) -> int:
    """Exponent ``2 b.v + v'Pv`` of ``i`` at entry ``v``, reduced mod 4."""
    v = np.asarray(v, dtype=np.int64).reshape(-1)
    if v.shape[0] != params.m:
        raise ValueError(f"vector has {v.shape[0]} entries, expected {params.m}")
    P = params.P.astype(np.int64)
    b = params.b.astype(np.int64)
    return int((2 * (b @ v) + v @ P @ v) % 4)


def chirp_exponents(params: ChirpParams) -> np.ndarray:
    """Exponents mod 4 for every index ``a`` in ``[0, 2**m)``."""
    A = index_bits(params.m)
    P = params.P.astype(np.int64)
    quad = np.einsum("ai,ij,aj->a", A, P, A)
    return (2 * (A @ params.b.astype(np.int64)) + quad) % 4


def encode_chirp(params: ChirpParams, Q: float = 1.0, mode: Mode = Mode.COMPLEX) -> np.ndarray:
    """Codeword ``sqrt(Q) * i**(2 b.v + v'Pv)`` of length ``2**m``.

    In real mode the diagonal of ``P`` must be zero and a float64 vector of
    ``+-sqrt(Q)`` is returned.
    """
    mode = Mode(mode)
    if mode is Mode.REAL and not params.is_real():
        raise ValueError("real-mode codewords need a zero diagonal in P")
    phi = np.sqrt(Q) * I_POWERS[chirp_exponents(params)]
    if mode is Mode.REAL:
        return phi.real.copy()
    return phi


def payload_capacity(m: int, p: int, mode: Mode = Mode.COMPLEX) -> int:
    """Bits carried by one patch: (P, b) bits minus the check digit, plus ``p`` slot bits."""
    mode = Mode(mode)
    if m < 2:
        raise ValueError("m must be at least 2 to host the check digit")
    if p < 0:
        raise ValueError("p must be non-negative")
    pb_bits = m * (m + 3) // 2 if mode is Mode.COMPLEX else m * (m + 1) // 2
    if p > pb_bits - 1:
        raise ValueError(f"p={p} exceeds the {pb_bits - 1} payload bits available for the translate")
    return pb_bits + p - 1


class BitLayout:
    """Positions of (P, b), slot and translate bits inside one patch bit string.

    The patch string is ``[b_1..b_m, P upper triangle (row-major, check digit
    skipped), primary slot (p bits, little-endian)]``.  Complex mode includes
    the diagonal of P, real mode only the strict upper triangle.
    """

    def __init__(self, m: int, p: int, mode: Mode = Mode.COMPLEX):
        self.m = m
        self.p = p
        self.mode = Mode(mode)
        self.length = payload_capacity(m, p, self.mode)

        k = 0 if self.mode is Mode.COMPLEX else 1
        entries = [(i, j) for i in range(m) for j in range(i + k, m) if (i, j) != CHECK_DIGIT]
        self.p_rows = np.array([e[0] for e in entries], dtype=np.int64)
        self.p_cols = np.array([e[1] for e in entries], dtype=np.int64)
        self.n_pb = m + len(entries)
        self.slot_positions = np.arange(self.n_pb, self.n_pb + p, dtype=np.int64)

        strict = [m + t for t, (i, j) in enumerate(entries) if i < j]
        diag = [m + t for t, (i, j) in enumerate(entries) if i == j]
        source = (list(range(m)) + strict + diag)[:p]
        self.translate_source = np.array(source, dtype=np.int64)
        self._weights = (1 << np.arange(p, dtype=np.int64)) if p else np.zeros(0, np.int64)

    def __repr__(self):
        return f"BitLayout(m={self.m}, p={self.p}, mode={self.mode.value}, length={self.length})"

    def _pb_bits(self, params: ChirpParams) -> np.ndarray:
        return np.concatenate([params.b, params.P[self.p_rows, self.p_cols]])

    def translate(self, params: ChirpParams) -> int:
        """Translate carried by ``params`` (independent of its check digit)."""
        bits = self._pb_bits(params)[self.translate_source].astype(np.int64)
        return int(bits @ self._weights)

    def bits_to_params(self, bits) -> tuple[ChirpParams, int, int]:
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        if bits.shape[0] != self.length:
            raise ValueError(f"patch bit string has {bits.shape[0]} bits, expected {self.length}")
        m = self.m
        P = np.zeros((m, m), dtype=np.uint8)
        P[self.p_rows, self.p_cols] = bits[m:self.n_pb]
        P |= P.T
        params = ChirpParams(P, bits[:m])
        slot = int(bits[self.slot_positions].astype(np.int64) @ self._weights)
        translate = int(bits[self.translate_source].astype(np.int64) @ self._weights)
        return params, slot, translate

    def params_to_bits(self, params: ChirpParams, primary_slot: int) -> np.ndarray:
        if params.m != self.m:
            raise ValueError(f"params have m={params.m}, layout expects m={self.m}")
        if params.check_digit:
            raise ValueError("check digit must be 0 (primary copy) to map back to bits")
        if self.mode is Mode.REAL and not params.is_real():
            raise ValueError("real-mode layout needs a zero diagonal in P")
        if not 0 <= primary_slot < (1 << self.p):
            raise ValueError(f"slot {primary_slot} out of range for p={self.p}")
        slot_bits = ((primary_slot >> np.arange(self.p)) & 1).astype(np.uint8)
        return np.concatenate([self._pb_bits(params), slot_bits])


def bits_to_params(patch_bits, layout: BitLayout) -> tuple[ChirpParams, int, int]:
    return layout.bits_to_params(patch_bits)


def params_to_bits(params: ChirpParams, primary_slot: int, layout: BitLayout) -> np.ndarray:
    return layout.params_to_bits(params, primary_slot)
