"""Chirp reconstruction: greedy recovery of superposed binary chirps.

Each iteration identifies one active ``(P, b)`` from a handful of
Walsh-Hadamard transforms of shift-and-multiply products of the residual,
then refits all components found so far by least squares (incremental
thin QR).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .codebook import I_POWERS, ChirpParams, Mode, encode_chirp, index_bits
from .wht import fwht


class DegenerateResidual(ValueError):
    """Residual is identically zero; there is nothing left to identify."""


class DependentColumn(ValueError):
    """Codeword is numerically inside the span of the current fit."""


@dataclass(frozen=True)
class DecoderParams:
    S: int = 10
    residual_tol: Optional[float] = None
    c: int = 3
    alpha: float = 3.0
    mode: Mode = Mode.COMPLEX

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def noise_var(self) -> float:
        # unit variance per real dimension
        return 2.0 if self.mode is Mode.COMPLEX else 1.0

    def tolerance(self, n: int) -> float:
        if self.residual_tol is not None:
            return self.residual_tol
        return 1.05 * np.sqrt(n * self.noise_var)


@dataclass(frozen=True)
class DecodedComponent:
    params: ChirpParams
    coeff: complex
    fallback: bool = False


def _check_length(y: np.ndarray) -> int:
    n = y.shape[-1]
    if n < 4 or n & (n - 1):
        raise ValueError(f"signal length must be a power of two >= 4, got {n}")
    return n.bit_length() - 1


def shift_multiply(y: np.ndarray, e) -> np.ndarray:
    """``f[a] = conj(y[a]) * y[a XOR e]``; ``e`` is an index or a binary vector."""
    y = np.asarray(y)
    m = _check_length(y)
    if not np.isscalar(e):
        e = np.asarray(e).reshape(-1)
        if e.shape[0] != m:
            raise ValueError(f"shift vector has {e.shape[0]} entries, expected {m}")
        e = int(e.astype(np.int64) @ (1 << np.arange(m)))
    idx = np.arange(1 << m) ^ int(e)
    return np.conj(y) * y[idx]


def dechirp(y: np.ndarray, P) -> np.ndarray:
    """Strip the quadratic phase: ``y[a] * i**(-(a'Pa mod 4))``."""
    y = np.asarray(y)
    m = _check_length(y)
    P = np.asarray(P, dtype=np.int64)
    if P.shape != (m, m):
        raise ValueError(f"P has shape {P.shape}, expected {(m, m)}")
    A = index_bits(m)
    quad = np.einsum("ai,ij,aj->a", A, P, A) % 4
    return y * I_POWERS[(-quad) % 4]


class _RowScores:
    """Magnitude spectra of the 2m-1 shift products needed to score rows of P."""

    def __init__(self, y: np.ndarray):
        m = _check_length(y)
        if not np.any(y):
            raise DegenerateResidual("residual is identically zero")
        n = 1 << m
        self.m = m
        self.idx = np.arange(n)
        shifts = [1 << r for r in range(m)] + [(1 << r) | (1 << (r - 1)) for r in range(1, m)]
        conj = np.conj(y)
        prods = np.stack([conj * y[self.idx ^ e] for e in shifts])
        spec = np.abs(fwht(prods))
        self.single = spec[:m]
        self.paired = np.vstack([np.zeros((1, n)), spec[m:]])

    def __call__(self, r: int, prev: int, cands: np.ndarray) -> np.ndarray:
        """Row-r scores of ``cands``, given the previously chosen row ``prev``."""
        # the e_r + e_{r-1} peak sits at p_r XOR p_{r-1}; realign it onto p_r
        if r == 0:
            return self.single[0][cands]
        return self.single[r][cands] + self.paired[r][cands ^ prev]


def _row_candidates(r: int, cols: list[int], m: int, mode: Mode) -> np.ndarray:
    """Column-r values consistent with the entries fixed by columns 0..r-1.

    Symmetry pins bits 0..r-1 of column r; real mode also pins bit r to 0.
    """
    fixed = 0
    for i in range(r):
        fixed |= ((cols[i] >> r) & 1) << i
    free = np.arange(1 << (m - r), dtype=np.int64)
    if mode is Mode.REAL:
        free = free[free & 1 == 0]
    return fixed | (free << r)


def _top(values: np.ndarray, cands: np.ndarray, c: int) -> np.ndarray:
    """Best ``c`` candidates by score, best first; ties go to the lower index."""
    if c == 1:
        return cands[[int(np.argmax(values))]]
    order = np.lexsort((cands, -values))
    return cands[order[:c]]


def _assemble(cols: list[int], m: int) -> np.ndarray:
    P = np.zeros((m, m), dtype=np.uint8)
    for j, col in enumerate(cols):
        bits = (col >> np.arange(j + 1)) & 1
        P[: j + 1, j] = bits
        P[j, : j + 1] = bits
    return P


def find_pb(y: np.ndarray, params: DecoderParams = DecoderParams()) -> ChirpParams:
    """Identify one dominant chirp: P row by row, then b from the dechirped spectrum.

    Each row of P is the best-scoring candidate among those consistent with
    the rows already chosen, so the assembled P is symmetric by construction.
    """
    y = np.asarray(y)
    scores = _RowScores(y)
    m = scores.m
    cols: list[int] = []
    prev = 0
    for r in range(m):
        cands = _row_candidates(r, cols, m, params.mode)
        prev = int(_top(scores(r, prev, cands), cands, 1)[0])
        cols.append(prev)
    P = _assemble(cols, m)
    w = np.abs(fwht(dechirp(y, P)))
    b = (int(np.argmax(w)) >> np.arange(m)) & 1
    return ChirpParams(P, b)


def _peak_test(w: np.ndarray, alpha: float) -> tuple[int, bool]:
    k = int(np.argmax(w))
    peak = w[k]
    rest = max(float(np.sum(w * w) - peak * peak), 0.0)
    rms = np.sqrt(rest / (w.shape[0] - 1))
    return k, bool(peak >= alpha * rms)


def find_pb_tree(
    y: np.ndarray,
    params: DecoderParams = DecoderParams(),
    rng: Optional[np.random.Generator] = None,
) -> tuple[ChirpParams, bool]:
    """Depth-first search over the top-``c`` candidates for each row of P.

    A leaf is accepted when its dechirped spectral peak is at least
    ``alpha`` times the RMS of the remaining coefficients.  Returns
    ``(params, fallback)``; ``fallback`` is True when no leaf passed and a
    uniformly random codeword label was drawn from ``rng`` instead.
    With ``c == 1`` this is exactly :func:`find_pb`.
    """
    y = np.asarray(y)
    if params.c == 1:
        return find_pb(y, params), False
    scores = _RowScores(y)
    m, mode, c, alpha = scores.m, params.mode, params.c, params.alpha
    A = index_bits(m)
    cols = [0] * m

    def increment(r: int, cands: np.ndarray) -> np.ndarray:
        # contribution of column r to a'Pa (mod 4), one row per candidate
        bits = (cands[:, None] >> np.arange(r + 1)[None, :]) & 1
        lin = A[:, :r] @ bits[:, :r].T if r else 0
        return (A[:, r : r + 1] * (bits[:, r][None, :] + 2 * lin)).T

    def descend(r: int, prev: int, exp: np.ndarray):
        allowed = _row_candidates(r, cols, m, mode)
        cands = _top(scores(r, prev, allowed), allowed, c)
        inc = increment(r, cands)
        if r == m - 1:
            leaf_exp = (exp[None, :] + inc) % 4
            W = np.abs(fwht(y[None, :] * I_POWERS[(-leaf_exp) % 4]))
            for k, cand in enumerate(cands):
                b_idx, ok = _peak_test(W[k], alpha)
                if ok:
                    cols[r] = int(cand)
                    return b_idx
            return None
        for k, cand in enumerate(cands):
            cols[r] = int(cand)
            found = descend(r + 1, int(cand), (exp + inc[k]) % 4)
            if found is not None:
                return found
        return None

    b_idx = descend(0, 0, np.zeros(A.shape[0], dtype=np.int64))
    if b_idx is None:
        rng = rng if rng is not None else np.random.default_rng()
        return ChirpParams.random(m, rng, mode), True
    return ChirpParams(_assemble(cols, m), (b_idx >> np.arange(m)) & 1), False


class LsqState:
    """Thin QR of the selected codeword matrix plus the current residual."""

    def __init__(self, y: np.ndarray):
        self.y = np.asarray(y)
        self.dtype = np.result_type(self.y.dtype, np.float64)
        n = self.y.shape[0]
        self._Q = np.zeros((n, 8), dtype=self.dtype)
        self._R = np.zeros((8, 8), dtype=self.dtype)
        self._qy = np.zeros(8, dtype=self.dtype)
        self.k = 0
        self.residual = self.y.astype(self.dtype, copy=True)

    @property
    def Q(self) -> np.ndarray:
        return self._Q[:, : self.k]

    @property
    def R(self) -> np.ndarray:
        return self._R[: self.k, : self.k]

    def _grow(self):
        cap = self._Q.shape[1] * 2
        Q = np.zeros((self._Q.shape[0], cap), dtype=self.dtype)
        Q[:, : self.k] = self.Q
        R = np.zeros((cap, cap), dtype=self.dtype)
        R[: self.k, : self.k] = self.R
        qy = np.zeros(cap, dtype=self.dtype)
        qy[: self.k] = self._qy[: self.k]
        self._Q, self._R, self._qy = Q, R, qy

    def coefficients(self) -> np.ndarray:
        if self.k == 0:
            return np.zeros(0, dtype=self.dtype)
        return solve_triangular(self.R, self._qy[: self.k])


def lsq_add_column(state: LsqState, codeword: np.ndarray) -> tuple[LsqState, np.ndarray]:
    """Append one column to the fit in O(n k); returns the state and new coefficients."""
    v = np.asarray(codeword, dtype=state.dtype)
    if v.shape != state.y.shape:
        raise ValueError(f"codeword has shape {v.shape}, expected {state.y.shape}")
    norm = np.linalg.norm(v)
    Qk = state.Q
    coeffs = np.zeros(state.k + 1, dtype=state.dtype)
    w = v.copy()
    # classical Gram-Schmidt, applied twice
    for _ in range(2):
        proj = Qk.conj().T @ w
        w -= Qk @ proj
        coeffs[: state.k] += proj
    rnorm = np.linalg.norm(w)
    if rnorm < 1e-8 * norm:
        raise DependentColumn("codeword lies in the span of the current fit")
    if state.k == state._Q.shape[1]:
        state._grow()
    k = state.k
    q = w / rnorm
    state._Q[:, k] = q
    state._R[:k, k] = coeffs[:k]
    state._R[k, k] = rnorm
    proj = np.vdot(q, state.residual)
    state._qy[k] = np.vdot(q, state.y)
    state.residual -= q * proj
    state.k = k + 1
    return state, state.coefficients()


def chirp_reconstruct(
    y: np.ndarray,
    params: DecoderParams = DecoderParams(),
    *,
    Q: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    known: Iterable[ChirpParams] = (),
) -> list[DecodedComponent]:
    """Greedy chirp recovery with a least-squares refit after every pick.

    ``known`` components are fitted before the search starts and count as
    already selected.  Returns every fitted component (known ones first)
    with its final coefficient.  Stops when the residual norm drops to the
    tolerance, after ``params.S`` new picks, or when a pick repeats.
    """
    y = np.asarray(y)
    _check_length(y)
    state = LsqState(y)
    selected: list[ChirpParams] = []
    fallback: list[bool] = []
    seen: set[ChirpParams] = set()

    def add(cand: ChirpParams, is_fallback: bool) -> bool:
        try:
            lsq_add_column(state, encode_chirp(cand, Q, params.mode))
        except DependentColumn:
            return False
        selected.append(cand)
        fallback.append(is_fallback)
        seen.add(cand)
        return True

    for kp in known:
        if kp not in seen:
            add(kp, False)

    tol = params.tolerance(y.shape[0])
    for _ in range(params.S):
        if np.linalg.norm(state.residual) <= tol:
            break
        try:
            cand, is_fallback = find_pb_tree(state.residual, params, rng)
        except DegenerateResidual:
            break
        if cand in seen or not add(cand, is_fallback):
            break

    coeffs = state.coefficients()
    return [DecodedComponent(p, complex(c), f) for p, c, f in zip(selected, coeffs, fallback)]
