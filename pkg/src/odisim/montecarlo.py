"""Deterministic ensemble execution.

Seed splitting uses the SplitMix64 finalizer on base + index * GOLDEN
(mod 2^64). The multiplier is odd and the finalizer is a bijection on
64-bit words, so consecutive indices under a fixed base can never collide.
Derived seeds key counter-based Philox streams, which makes every task a
pure function of (base seed, index) regardless of scheduling.

Reductions run in task-index order over a preallocated slot array, so the
report is bit-identical for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "EnsembleSpec",
    "EnsembleReport",
    "TaskFailure",
    "derive_seed",
    "ensemble_rng",
    "run_ensemble",
]

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x &= _MASK
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK
    return x ^ (x >> 31)


def derive_seed(base: int, index: int) -> int:
    """64-bit stream seed for task `index` under `base`.

    splitmix64(base + index * golden_gamma mod 2^64): injective in index
    for a fixed base, well mixed across bases.
    """
    return _splitmix64((base + index * _GOLDEN) & _MASK)


def ensemble_rng(base: int, index: int) -> np.random.Generator:
    """Counter-based generator for one task stream."""
    return np.random.Generator(np.random.Philox(key=derive_seed(base, index)))


@dataclass(frozen=True)
class EnsembleSpec:
    """What to run: task count, base seed, worker hint, statistics."""

    n_paths: int
    seed: int
    workers: int = 1
    statistics: tuple[str, ...] = ("mean", "variance")
    quantiles: tuple[float, ...] = (0.1, 0.5, 0.9)

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass
class EnsembleReport:
    """Estimates with standard errors plus convergence diagnostics."""

    n_observations: int
    estimates: dict = field(default_factory=dict)
    standard_errors: dict = field(default_factory=dict)
    se_defined: bool = True
    batch_mean_ratio: float | None = None  # batch-means SE over naive SE, ~1 when mixing
    wall_clock_s: float = 0.0

    def as_dict(self) -> dict:
        return {
            "n_observations": self.n_observations,
            "estimates": self.estimates,
            "standard_errors": self.standard_errors,
            "se_defined": self.se_defined,
            "batch_mean_ratio": self.batch_mean_ratio,
            "wall_clock_s": self.wall_clock_s,
        }


class TaskFailure(RuntimeError):
    """A trajectory task raised; carries the failing path index."""

    def __init__(self, index: int, cause: BaseException):
        self.index = index
        super().__init__(f"task {index} failed: {cause}")


def _gather(spec: EnsembleSpec, task: Callable[[int, int], object]) -> list:
    """Run task(stream_seed, index) for every index; slots keep index order."""
    slots: list = [None] * spec.n_paths

    def run_one(i: int):
        try:
            slots[i] = task(derive_seed(spec.seed, i), i)
        except Exception as exc:
            raise TaskFailure(i, exc) from exc

    if spec.workers == 1:
        for i in range(spec.n_paths):
            run_one(i)
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            list(pool.map(run_one, range(spec.n_paths)))
    return slots


def run_ensemble(spec: EnsembleSpec, task: Callable[[int, int], object]) -> EnsembleReport:
    """Execute the ensemble and reduce in fixed order.

    Each task may return a scalar (one observation) or a 1-D/2-D array of
    observations (rows); rows are concatenated in task order before any
    statistic is computed, so the report does not depend on worker count.
    Task failures propagate with the failing index attached.
    """
    start = time.perf_counter()
    slots = _gather(spec, task)

    rows = []
    for i, value in enumerate(slots):
        if value is None:
            raise RuntimeError(f"task {i} produced no value")
        arr = np.atleast_1d(np.asarray(value, float))
        rows.append(arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr.reshape(-1))
    values = np.concatenate(rows, axis=0)
    n = values.shape[0]

    report = EnsembleReport(n_observations=n)
    se_defined = n >= 2
    mean = values.mean(axis=0)
    var = values.var(axis=0, ddof=1) if se_defined else np.full_like(np.atleast_1d(mean), np.nan)
    if not np.all(np.isfinite(mean)):
        raise ValueError("ensemble produced non-finite estimates")

    def emit(name, stat, se):
        report.estimates[name] = stat.tolist() if np.ndim(stat) else float(stat)
        report.standard_errors[name] = se.tolist() if np.ndim(se) else float(se)

    if "mean" in spec.statistics:
        emit("mean", mean, np.sqrt(var / n) if se_defined else np.nan * mean)
    if "variance" in spec.statistics:
        # SE of the sample variance under approximate normality
        emit("variance", var, var * np.sqrt(2.0 / max(n - 1, 1)) if se_defined else np.nan * mean)
    if "quantiles" in spec.statistics:
        for q in spec.quantiles:
            est = np.quantile(values, q, axis=0)
            emit(f"q{q:g}", est, np.nan * np.atleast_1d(est) if not se_defined else _quantile_se(values, q))
    report.se_defined = se_defined

    if n >= 64:
        n_batches = 32
        cut = (n // n_batches) * n_batches
        batches = values[:cut].reshape(n_batches, -1, *values.shape[1:]).mean(axis=1)
        bm_se = batches.std(axis=0, ddof=1) / np.sqrt(n_batches)
        naive_se = np.sqrt(var / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(naive_se > 0, bm_se / naive_se, 1.0)
        report.batch_mean_ratio = float(np.max(ratio))

    report.wall_clock_s = time.perf_counter() - start
    return report


def _quantile_se(values: np.ndarray, q: float) -> np.ndarray:
    """Distribution-free quantile SE from the order-statistic band."""
    n = values.shape[0]
    half = 1.959964 * np.sqrt(q * (1 - q) * n)
    lo = int(np.clip(np.floor(q * n - half), 0, n - 1))
    hi = int(np.clip(np.ceil(q * n + half), 0, n - 1))
    svals = np.sort(values, axis=0)
    return np.atleast_1d((svals[hi] - svals[lo]) / (2 * 1.959964))
