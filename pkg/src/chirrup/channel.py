"""AWGN channel, random message sets and the evaluation metrics."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .codebook import Mode
from .scheme import CodeConfig, bits_key, chirrup_decode, chirrup_encode

EBN0_WINDOW = (-5.0, 25.0)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, a pure function of (seed, trial)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


def draw_messages(K: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """K distinct uniformly random B-bit messages, shape (K, B)."""
    if K > 2**B:
        raise ValueError(f"cannot draw {K} distinct {B}-bit messages")
    out = np.zeros((K, B), dtype=np.uint8)
    seen = set()
    i = 0
    while i < K:
        msg = rng.integers(0, 2, size=B, dtype=np.uint8)
        key = msg.tobytes()
        if key in seen:
            continue
        seen.add(key)
        out[i] = msg
        i += 1
    return out


def noise(config: CodeConfig, rng: np.random.Generator) -> np.ndarray:
    """Unit variance per real dimension; complex entries have total variance 2."""
    if config.mode is Mode.COMPLEX:
        return rng.standard_normal(config.n) + 1j * rng.standard_normal(config.n)
    return rng.standard_normal(config.n)


def transmit(
    messages: Iterable[np.ndarray],
    config: CodeConfig,
    rng: Optional[np.random.Generator] = None,
    add_noise: bool = True,
) -> np.ndarray:
    dtype = np.complex128 if config.mode is Mode.COMPLEX else np.float64
    y = np.zeros(config.n, dtype=dtype)
    for msg in messages:
        y += chirrup_encode(msg, config)
    if add_noise:
        if rng is None:
            raise ValueError("a generator is required to draw noise")
        y += noise(config, rng)
    return y


def per_user_error(sent: Iterable[np.ndarray], recovered: Iterable[np.ndarray]) -> float:
    """Fraction of transmitted messages missing from the recovered list."""
    sent_keys = {bits_key(s) for s in sent}
    if not sent_keys:
        raise ValueError("per-user error is undefined for K = 0")
    got = {bits_key(r) for r in recovered}
    return len(sent_keys - got) / len(sent_keys)


def ebn0_db(Q: float, config: CodeConfig) -> float:
    return 10 * math.log10(config.n * Q / (2 * config.B))


def q_for_ebn0(db: float, config: CodeConfig) -> float:
    return 10 ** (db / 10) * 2 * config.B / config.n


@dataclass
class ExperimentResult:
    mode: str
    m: int
    p: int
    r: int
    B: int
    K: int
    Q: float
    ebn0_db: float
    trials: int
    per_user_error: float
    time_decode_mean_s: float
    time_decode_median_s: float
    seed: int
    n: int = 0
    n_real_equiv: int = 0
    decode_times: list[float] = field(default_factory=list, repr=False)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


CSV_COLUMNS = (
    "mode", "m", "p", "r", "B", "K", "Q", "ebn0_db", "trials",
    "per_user_error", "time_decode_mean_s", "time_decode_median_s", "seed",
)


def run_trial(config: CodeConfig, K: int, seed: int, trial: int) -> tuple[int, float]:
    """One encode / channel / decode round; returns (missed messages, decode seconds).

    Message draw and noise come from the trial stream, so for a fixed
    (seed, trial) only the signal scale changes with ``config.Q``.
    """
    rng = trial_rng(seed, trial)
    msgs = draw_messages(K, config.B, rng)
    y = transmit(msgs, config, rng)
    dec_rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), 1]))
    t0 = time.perf_counter()
    out = chirrup_decode(y, config, dec_rng)
    elapsed = time.perf_counter() - t0
    if K == 0:
        return 0, elapsed
    missed = round(per_user_error(msgs, out) * K)
    return missed, elapsed


def _run_trial_args(args) -> tuple[int, float]:
    return run_trial(*args)


def estimate_error(
    config: CodeConfig,
    K: int,
    trials: int,
    seed: int = 0,
    trial_ids: Optional[Sequence[int]] = None,
    mapper: Callable = map,
) -> ExperimentResult:
    """Per-user error over ``trials`` independent rounds.

    ``mapper`` must preserve order (builtin ``map`` or an executor's
    ``map``); the estimate is then independent of how trials are spread.
    """
    cfg = config if config.K_expected is not None else config.with_(K_expected=K)
    ids = list(range(trials)) if trial_ids is None else list(trial_ids)
    missed, times = 0, []
    for miss, dt in mapper(_run_trial_args, [(cfg, K, seed, t) for t in ids]):
        missed += miss
        times.append(dt)
    err = missed / (K * len(ids)) if K else 0.0
    return make_result(cfg, K, len(ids), err, times, seed)


def make_result(config: CodeConfig, K: int, trials: int, err: float, times: list[float], seed: int) -> ExperimentResult:
    return ExperimentResult(
        mode=config.mode.value,
        m=config.m,
        p=config.p,
        r=config.r,
        B=config.B,
        K=K,
        Q=config.Q,
        ebn0_db=ebn0_db(config.Q, config),
        trials=trials,
        per_user_error=err,
        time_decode_mean_s=statistics.fmean(times) if times else 0.0,
        time_decode_median_s=statistics.median(times) if times else 0.0,
        seed=seed,
        n=config.n,
        n_real_equiv=config.n * (2 if config.mode is Mode.COMPLEX else 1),
        decode_times=times,
    )


def find_min_ebn0(
    config: CodeConfig,
    K: int,
    target_error: float = 0.05,
    trials: int = 20,
    seed: int = 0,
    window: tuple[float, float] = EBN0_WINDOW,
    resolution: float = 0.25,
    log: Optional[list] = None,
    mapper: Callable = map,
) -> float:
    """Smallest Eb/N0 (dB) on a bisection grid whose per-user error is <= target.

    Bisects between ``window`` ends until the bracket is narrower than
    ``resolution`` and returns the succeeding end.  Every tested point
    reuses the same trial streams.  Returns ``math.inf`` when even the top
    of the window fails.  ``log``, if given, receives each tested
    :class:`ExperimentResult`.
    """
    if trials < 20:
        raise ValueError("find_min_ebn0 needs at least 20 trials")
    if K < 1:
        raise ValueError("K must be >= 1")

    def ok(db: float) -> bool:
        res = estimate_error(config.with_(Q=q_for_ebn0(db, config)), K, trials, seed, mapper=mapper)
        if log is not None:
            log.append(res)
        return res.per_user_error <= target_error

    lo, hi = window
    if not ok(hi):
        return math.inf
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
