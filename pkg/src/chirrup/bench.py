"""Seeded experiment runner: sweeps, OST predictions and resumable CSV output."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Union

import numpy as np

from . import __version__
from .channel import CSV_COLUMNS, ebn0_db, estimate_error, find_min_ebn0, q_for_ebn0
from .codebook import Mode
from .ost import DEFAULT_CONVENTION, Convention, predictor_curve, ost_trial_errors
from .reconstruct import DecoderParams
from .scheme import CodeConfig, Energy

RUN_KINDS = ("chirrup", "ost-predict", "ost-mc")
AUTO = "auto-bisect"


@dataclass
class ExperimentSpec:
    """Declarative sweep description; config files use these field names.

    ``m``, ``p``, ``r``, ``mode`` span the CHIRRUP grid.  ``l`` lists parity
    allocations; each is applied to the ``r`` whose patch count matches its
    length, other ``r`` use the default allocation.  ``K`` is a list or a
    ``{start, stop, step}`` range (stop exclusive).  ``ebn0_db`` is a list of
    points or ``"auto-bisect"``.  ``B``, ``n``, ``epsilon`` and ``Q`` drive the
    OST modes (``n`` and ``C = 2**B`` for the Monte-Carlo).
    """

    m: list[int] = field(default_factory=lambda: [6])
    p: list[int] = field(default_factory=lambda: [4])
    r: list[int] = field(default_factory=lambda: [0])
    mode: list[str] = field(default_factory=lambda: ["complex"])
    l: Optional[list[list[int]]] = None
    K: Any = field(default_factory=list)
    ebn0_db: Any = AUTO
    trials: int = 20
    seed: int = 0
    out: str = "results.csv"
    threads: int = 1
    target_error: float = 0.05
    min_bits: Optional[int] = None
    energy: str = Energy.PER_MESSAGE.value
    d: int = 5
    decoder: Optional[dict] = None
    B: list[float] = field(default_factory=lambda: [50, 75, 100])
    n: int = 2**15
    epsilon: float = 0.05
    convention: str = DEFAULT_CONVENTION.value
    Q: list[float] = field(default_factory=lambda: [1.0])

    def __post_init__(self):
        self.K = _expand_k(self.K)
        if isinstance(self.ebn0_db, str):
            if self.ebn0_db != AUTO:
                raise ValueError(f"ebn0_db must be a list or {AUTO!r}")
        else:
            self.ebn0_db = [float(x) for x in self.ebn0_db]
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.ebn0_db == AUTO and self.trials < 20:
            raise ValueError("auto-bisect needs at least 20 trials per point")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if any(k < 0 for k in self.K):
            raise ValueError("K values must be non-negative")
        Energy(self.energy)
        Convention(self.convention)
        for mode in self.mode:
            Mode(mode)
        self.grid()  # every point must form a valid CodeConfig

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentSpec":
        import yaml  # JSON files parse as YAML too

        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data)

    def decoder_params(self) -> Optional[DecoderParams]:
        return DecoderParams(**self.decoder) if self.decoder else None

    def grid(self) -> list[CodeConfig]:
        allocs = {len(x): tuple(x) for x in (self.l or [])}
        out = []
        for mode in self.mode:
            for m in self.m:
                for p in self.p:
                    for r in self.r:
                        cfg = CodeConfig(
                            m=m, p=p, r=r, mode=Mode(mode), l=allocs.get(1 << r),
                            d=self.d, decoder=self.decoder_params(), energy=Energy(self.energy),
                        )
                        if self.min_bits is None or cfg.B > self.min_bits:
                            out.append(cfg)
        return out


def _expand_k(K) -> list[int]:
    if isinstance(K, dict):
        return list(range(int(K["start"]), int(K["stop"]), int(K.get("step", 1))))
    if isinstance(K, int):
        return [K]
    return [int(k) for k in K]


def fingerprint(task: dict) -> str:
    blob = json.dumps(task, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:20]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _row(**kw) -> dict:
    return {k: kw.get(k) for k in CSV_COLUMNS}


# task builders: each yields (task description, callable producing rows)


def _chirrup_tasks(spec: ExperimentSpec, mapper: Callable):
    for cfg in spec.grid():
        for K in spec.K:
            points = [AUTO] if spec.ebn0_db == AUTO else spec.ebn0_db
            for point in points:
                desc = {
                    "kind": "chirrup", "m": cfg.m, "p": cfg.p, "r": cfg.r, "mode": cfg.mode.value,
                    "l": list(cfg.l), "energy": cfg.energy.value, "d": cfg.d, "decoder": spec.decoder,
                    "K": K, "ebn0_db": point, "trials": spec.trials, "seed": spec.seed,
                    "target_error": spec.target_error,
                }
                yield desc, lambda cfg=cfg, K=K, point=point: [_chirrup_row(spec, cfg, K, point, mapper)]


def _chirrup_row(spec: ExperimentSpec, cfg: CodeConfig, K: int, point, mapper: Callable) -> dict:
    if K == 0:
        Q = cfg.Q if point == AUTO else q_for_ebn0(point, cfg)
        return _row(mode=cfg.mode.value, m=cfg.m, p=cfg.p, r=cfg.r, B=cfg.B, K=0, Q=Q,
                    ebn0_db=ebn0_db(Q, cfg), trials=spec.trials, per_user_error=0.0,
                    time_decode_mean_s=0.0, time_decode_median_s=0.0, seed=spec.seed)
    if point == AUTO:
        log = []
        db = find_min_ebn0(cfg, K, spec.target_error, spec.trials, spec.seed, log=log, mapper=mapper)
        # the logged value is recomputed from Q, so match the nearest point
        res = min(log, key=lambda x: abs(x.ebn0_db - db)) if math.isfinite(db) else log[0]
        row = res.row()
        if not math.isfinite(db):
            row.update(Q=math.inf, ebn0_db=math.inf)
        return row
    res = estimate_error(cfg.with_(Q=q_for_ebn0(point, cfg)), K, spec.trials, spec.seed, mapper=mapper)
    return res.row()


def _log2_exact(n: int) -> Optional[int]:
    return n.bit_length() - 1 if n > 0 and n & (n - 1) == 0 else None


def _predict_tasks(spec: ExperimentSpec, mapper: Callable):
    points = spec.ebn0_db if spec.ebn0_db != AUTO else [x / 2 for x in range(0, 21)]
    for B in spec.B:
        desc = {"kind": "ost-predict", "B": B, "n": spec.n, "epsilon": spec.epsilon,
                "convention": spec.convention, "ebn0_db": points, "seed": spec.seed}
        yield desc, lambda B=B: predict_rows(spec.n, B, points, spec.epsilon, Convention(spec.convention), spec.seed)


def predict_rows(n: int, B: float, points, epsilon: float, convention: Convention, seed: int = 0) -> list[dict]:
    return [
        _row(mode="ost-predict", m=_log2_exact(n), p=0, r=0, B=B, K=pt["K"], Q=pt["Q"],
             ebn0_db=10 * math.log10(n * pt["Q"] / (2 * B)), trials=0, per_user_error=epsilon,
             time_decode_mean_s=0.0, time_decode_median_s=0.0, seed=seed)
        for pt in predictor_curve(n, B, points, epsilon, convention)
    ]


def predict(spec: ExperimentSpec) -> list[dict]:
    """OST predictor rows for every B in the spec."""
    rows = []
    for _, make in _predict_tasks(spec, map):
        rows.extend(make())
    return rows


def _ost_trial(args) -> tuple[np.ndarray, list[float]]:
    n, C, Ks, Q, seed, t = args
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(t)]))
    times: list[float] = []
    return ost_trial_errors(n, C, Ks, Q, rng, times), times


def _mc_tasks(spec: ExperimentSpec, mapper: Callable):
    Ks = [k for k in spec.K if k > 0]
    for B in spec.B:
        C = 2 ** int(B)
        for Q in spec.Q:
            desc = {"kind": "ost-mc", "n": spec.n, "B": B, "Q": Q, "K": Ks, "trials": spec.trials, "seed": spec.seed}

            def make(B=B, C=C, Q=Q):
                total = np.zeros(len(Ks))
                times = [[] for _ in Ks]
                args = [(spec.n, C, Ks, Q, spec.seed, t) for t in range(spec.trials)]
                for errs, ts in mapper(_ost_trial, args):
                    total += errs
                    for j, dt in enumerate(ts):
                        times[j].append(dt)
                return [
                    _row(mode="ost-mc", m=_log2_exact(spec.n), p=0, r=0, B=B, K=K, Q=Q,
                         ebn0_db=10 * math.log10(spec.n * Q / (2 * B)), trials=spec.trials,
                         per_user_error=float(total[j] / spec.trials),
                         time_decode_mean_s=statistics.fmean(times[j]),
                         time_decode_median_s=statistics.median(times[j]), seed=spec.seed)
                    for j, K in enumerate(Ks)
                ]

            yield desc, make


TASKS = {"chirrup": _chirrup_tasks, "ost-predict": _predict_tasks, "ost-mc": _mc_tasks}


@contextmanager
def worker_map(threads: int) -> Iterator[Callable]:
    """Order-preserving map over ``threads`` worker processes."""
    if threads <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield pool.map


def _done_path(out: Path) -> Path:
    return out.with_name(out.name + ".done")


def _sidecar_path(out: Path) -> Path:
    return out.with_suffix(".json")


def _prepare(out: Path, resume: bool) -> set[str]:
    """Open state for a run; on resume trims rows written after the last checkpoint."""
    done_file = _done_path(out)
    if not resume or not out.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_COLUMNS)
        done_file.write_text("")
        return set()
    entries = [line.split() for line in done_file.read_text().splitlines() if line.strip()] if done_file.exists() else []
    keep = sum(int(n) for _, n in entries)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{out} does not carry the expected header; refusing to resume")
    with open(out, "w", newline="") as fh:
        csv.writer(fh).writerows(rows[: 1 + keep])
    return {fp for fp, _ in entries}


def run(spec: ExperimentSpec, kind: str = "chirrup", out: Optional[Union[str, Path]] = None,
        resume: bool = False) -> list[dict]:
    """Execute a sweep, appending rows as each task finishes.

    A task's rows are flushed before its fingerprint is checkpointed, so an
    interrupted run resumes by skipping checkpointed tasks and dropping any
    half-written tail.  Returns the rows produced by this invocation.
    """
    if kind not in TASKS:
        raise ValueError(f"unknown run kind {kind!r}; expected one of {RUN_KINDS}")
    out = Path(out or spec.out)
    done = _prepare(out, resume)
    write_sidecar(spec, kind, out)
    produced = []
    with worker_map(spec.threads) as mapper:
        for desc, make in TASKS[kind](spec, mapper):
            fp = fingerprint(desc)
            if fp in done:
                continue
            rows = make()
            with open(out, "a", newline="") as fh:
                w = csv.writer(fh)
                for row in rows:
                    w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
                fh.flush()
                os.fsync(fh.fileno())
            with open(_done_path(out), "a") as fh:
                fh.write(f"{fp} {len(rows)}\n")
            produced.extend(rows)
    return produced


def write_sidecar(spec: ExperimentSpec, kind: str, out: Path) -> None:
    meta = {
        "kind": kind,
        "spec": dataclasses.asdict(spec),
        "seed": spec.seed,
        "version": __version__,
        "ost_convention": spec.convention,
        "energy_convention": spec.energy,
        "noise": "unit variance per real dimension",
        "ebn0_definition": "n*Q/(2*B), n = 2**(m+p+r)",
        "columns": list(CSV_COLUMNS),
    }
    _sidecar_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")


def read_rows(path: Union[str, Path]) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
