"""One-Step Thresholding baseline and its Gaussian phase-transition predictor.

Normalised correlations ``G_i = g_i / (nQ)`` of a Gaussian codebook tend to
``N(1, var)`` for transmitted columns and ``N(0, var)`` otherwise, with
``var`` governed by the effective load ``rho = (K + 1/Q) / n``.  Two readings
of how ``rho`` enters the tail formulas are supported, see :class:`Convention`.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, special, stats

XTOL = 1e-12


class Convention(str, enum.Enum):
    """``PAPER_LITERAL`` uses ``rho`` as the standard deviation in the tail
    formulas; ``STD_DEV`` treats ``rho`` as the variance (scale ``sqrt(rho)``)."""

    PAPER_LITERAL = "paper_literal"
    STD_DEV = "std_dev"


# Selected by the Monte-Carlo referee (KS fit of the normalised correlations).
DEFAULT_CONVENTION = Convention.STD_DEV


def _scale(rho: float, convention: Convention) -> float:
    return rho if Convention(convention) is Convention.PAPER_LITERAL else math.sqrt(rho)


@dataclass(frozen=True)
class OstAsymptotics:
    delta: float
    rho: float
    epsilon: float = 0.05
    lam: float = 0.5
    convention: Convention = DEFAULT_CONVENTION

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def scale(self) -> float:
        return _scale(self.rho, self.convention)


def ost_decode(y: np.ndarray, X: np.ndarray, K: int) -> np.ndarray:
    """Indices of the K largest correlations ``Re(X^H y)``, sorted ascending.

    No absolute value is taken: transmitted coefficients are known to be
    positive.  Ties go to the lower index.
    """
    X = np.asarray(X)
    C = X.shape[1]
    if not 0 <= K <= C:
        raise ValueError(f"K={K} outside [0, {C}]")
    g = X.conj().T @ np.asarray(y)
    if np.iscomplexobj(g):
        g = g.real
    order = np.lexsort((np.arange(C), -g))
    return np.sort(order[:K])


def ost_rates(lam: float, asym: OstAsymptotics) -> tuple[float, float]:
    """Limits of the expected true and false detection fractions at threshold ``lam``."""
    s = asym.scale
    ep = asym.delta * stats.norm.sf((lam - 1) / s)
    eq = (1 - asym.delta) * stats.norm.sf(lam / s)
    return float(ep), float(eq)


def _expanding_bisect(f, lo: float, hi: float, xtol: float, grow_lo=None, grow_hi=None, tries: int = 200) -> float:
    flo, fhi = f(lo), f(hi)
    for _ in range(tries):
        if flo * fhi <= 0:
            break
        if grow_hi is not None:
            hi = grow_hi(hi)
            fhi = f(hi)
        if flo * fhi <= 0:
            break
        if grow_lo is not None:
            lo = grow_lo(lo)
            flo = f(lo)
    else:
        raise ArithmeticError("no sign change found while expanding the bracket")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return optimize.bisect(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=2000)


def _threshold_for(scale: float, delta: float) -> float:
    """Threshold with ``EP + EQ = delta`` at the given tail scale."""
    ratio = (1 - delta) / delta

    # EP + EQ = delta rewritten as ratio * sf(lam / s) = cdf((lam - 1) / s),
    # which keeps precision when both sides are tiny
    def g(lam):
        return ratio * special.ndtr(-lam / scale) - special.ndtr((lam - 1) / scale)

    # g decreases from ratio > 0 to -1 as lam grows
    return _expanding_bisect(g, 0.0, 1.0, XTOL, grow_lo=lambda x: 2 * x - 1, grow_hi=lambda x: 2 * x + 1)


def ost_phase_transition(delta: float, epsilon: float, convention: Convention = DEFAULT_CONVENTION) -> float:
    """Critical effective load ``rho = c(delta, epsilon)``.

    Nested bisection: the inner solve fixes the threshold from
    ``EP + EQ = delta``, the outer one moves ``rho`` until
    ``EP = (1 - epsilon) delta``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if epsilon * delta >= 1 - delta:
        raise ArithmeticError("no phase transition: false alarms cannot be kept below delta")
    convention = Convention(convention)

    def miss_gap(rho):
        s = _scale(rho, convention)
        lam = _threshold_for(s, delta)
        return epsilon - special.ndtr((lam - 1) / s)

    # miss rate grows with the load
    return _expanding_bisect(miss_gap, 1e-6, 1e-2, 1e-10, grow_lo=lambda x: x / 8, grow_hi=lambda x: x * 8)


def ost_predict_k(
    n: int,
    B: float,
    Q: float,
    epsilon: float = 0.05,
    convention: Convention = DEFAULT_CONVENTION,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> float:
    """Largest K with ``K + 1/Q = rho(K / 2**B, epsilon) * n`` (0 if none).

    Fixed-point iteration; ``rho`` depends on K only through ``delta``.
    """
    if n <= 0 or B <= 0 or Q <= 0:
        raise ValueError("n, B and Q must be positive")
    C = 2.0 ** B
    k = float(n)
    for _ in range(max_iter):
        delta = min(max(k, 1.0), C / 2) / C
        new = ost_phase_transition(delta, epsilon, convention) * n - 1 / Q
        if new <= 0:
            return 0.0
        if abs(new - k) <= tol * max(1.0, new):
            return new
        k = new
    raise ArithmeticError(f"fixed point did not converge in {max_iter} iterations")


def ost_q_for_k(n: int, B: float, K: float, epsilon: float = 0.05, convention: Convention = DEFAULT_CONVENTION) -> float:
    """Power at which the predictor's limit equals K; ``inf`` if K alone exceeds it."""
    slack = ost_phase_transition(K / 2.0**B, epsilon, convention) * n - K
    return 1 / slack if slack > 0 else math.inf


def predictor_curve(
    n: int,
    B: float,
    ebn0_db: Iterable[float],
    epsilon: float = 0.05,
    convention: Convention = DEFAULT_CONVENTION,
) -> list[dict]:
    """(Eb/N0, K) rows of the OST prediction, with ``Q = 2B * 10**(dB/10) / n``."""
    rows = []
    for db in ebn0_db:
        Q = 2 * B * 10 ** (db / 10) / n
        rows.append({
            "B": B, "n": n, "Q": Q, "ebn0_db": float(db), "epsilon": epsilon,
            "K": ost_predict_k(n, B, Q, epsilon, convention),
            "convention": Convention(convention).value,
        })
    return rows


# Monte-Carlo with explicit Gaussian codebooks


def ost_trial_errors(
    n: int,
    C: int,
    Ks: Sequence[int],
    Q: float,
    rng: np.random.Generator,
    times: Optional[list] = None,
) -> np.ndarray:
    """Per-user error of OST for each K in ``Ks`` on one codebook draw.

    Real codebook with i.i.d. ``N(0, Q)`` entries and unit-variance noise.
    The K active columns are the first K of one random permutation, so
    the K values share codebook, support order and noise.  Decode times
    are appended to ``times`` when given.
    """
    X = rng.standard_normal((n, C)) * math.sqrt(Q)
    z = rng.standard_normal(n)
    perm = rng.permutation(C)
    out = np.empty(len(Ks))
    for j, K in enumerate(Ks):
        support = perm[:K]
        y = X[:, support].sum(axis=1) + z
        t0 = time.perf_counter()
        got = ost_decode(y, X, K)
        if times is not None:
            times.append(time.perf_counter() - t0)
        out[j] = 1 - np.isin(support, got).sum() / K
    return out


def ost_mc_errors(
    n: int,
    C: int,
    Ks: Sequence[int],
    Q: float,
    trials: int,
    seed: int = 0,
) -> np.ndarray:
    total = np.zeros(len(Ks))
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(t)]))
        total += ost_trial_errors(n, C, Ks, Q, rng)
    return total / trials


def empirical_max_k(Ks: Sequence[int], errors: Sequence[float], epsilon: float = 0.05) -> int:
    """Largest K whose estimated per-user error is at most ``epsilon`` (0 if none)."""
    ok = [K for K, e in zip(Ks, errors) if e <= epsilon]
    return max(ok) if ok else 0


def normalised_correlations(
    n: int,
    C: int,
    K: int,
    Q: float,
    trials: int,
    seed: int = 0,
    inactive_per_trial: Optional[int] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Samples of ``G_i = g_i / (nQ)`` for active and inactive columns."""
    active, inactive = [], []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(t)]))
        X = rng.standard_normal((n, C)) * math.sqrt(Q)
        perm = rng.permutation(C)
        y = X[:, perm[:K]].sum(axis=1) + rng.standard_normal(n)
        G = (X.T @ y) / (n * Q)
        active.append(G[perm[:K]])
        rest = perm[K:] if inactive_per_trial is None else perm[K : K + inactive_per_trial]
        inactive.append(G[rest])
    return np.concatenate(active), np.concatenate(inactive)


def ks_referee(
    active: np.ndarray,
    inactive: np.ndarray,
    rho: float,
) -> dict[Convention, tuple[float, float]]:
    """KS p-values (active, inactive) of the samples against each convention's limits."""
    out = {}
    for conv in Convention:
        s = _scale(rho, conv)
        p_act = stats.kstest(active, stats.norm(loc=1.0, scale=s).cdf).pvalue
        p_inact = stats.kstest(inactive, stats.norm(loc=0.0, scale=s).cdf).pvalue
        out[conv] = (float(p_act), float(p_inact))
    return out


def select_convention(referee: dict[Convention, tuple[float, float]]) -> Convention:
    """Convention whose worse KS p-value is largest."""
    return max(referee, key=lambda c: (min(referee[c]), c.value))
