"""Unit-level nonparametric bootstrap with Wald intervals.

Resampling is stratified by treatment arm by default, preserving both arm
sizes in every replicate.  Replicate index streams are counter-split from
the plan seed, so replicates may run on any number of threads and still
reproduce bit for bit; the estimator pipeline itself always receives the
plan seed, keeping its internal Monte Carlo noise common across replicates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .errors import SemicompError, TooManyFailures

__all__ = ["BootstrapPlan", "BootstrapResult", "bootstrap"]


@dataclass(frozen=True)
class BootstrapPlan:
    repetitions: int = 100
    seed: int = 0
    level: float = 0.95
    stratify_by_arm: bool = True
    max_failure_fraction: float = 0.10

    def __post_init__(self):
        if self.repetitions < 2:
            raise ValueError("at least two bootstrap repetitions are required")
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must lie in (0, 1)")


@dataclass(frozen=True)
class BootstrapResult:
    names: tuple[str, ...]
    estimate: np.ndarray
    se: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    replicates: np.ndarray
    n_failed: int
    plan: BootstrapPlan
    failures: tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            name: {
                "estimate": float(self.estimate[i]),
                "se": float(self.se[i]),
                "ci_lower": float(self.ci_lower[i]),
                "ci_upper": float(self.ci_upper[i]),
            }
            for i, name in enumerate(self.names)
        }


def _normalize_output(out) -> tuple[tuple[str, ...], np.ndarray]:
    if isinstance(out, dict):
        names = tuple(out.keys())
        return names, np.array([float(out[k]) for k in names])
    arr = np.atleast_1d(np.asarray(out, dtype=float))
    return tuple(f"out{i}" for i in range(arr.size)), arr


def _resample_indices(dataset: Dataset, rng: np.random.Generator, stratify: bool) -> np.ndarray:
    n = len(dataset)
    if not stratify:
        return rng.integers(0, n, size=n)
    arms = np.array([r.a for r in dataset.records])
    idx = np.arange(n)
    out = []
    for a in (0, 1):
        pool = idx[arms == a]
        if pool.size:
            out.append(pool[rng.integers(0, pool.size, size=pool.size)])
    return np.concatenate(out)


def bootstrap(dataset: Dataset, pipeline, plan: BootstrapPlan,
              threads: int = 1) -> BootstrapResult:
    """Bootstrap a deterministic ``pipeline(dataset, seed)`` over resamples.

    Replicates raising package errors (non-convergence and kin) are dropped
    and counted; more than ``max_failure_fraction`` failures aborts.
    """
    names, estimate = _normalize_output(pipeline(dataset, plan.seed))
    reps = plan.repetitions
    children = np.random.SeedSequence(plan.seed).spawn(reps)

    def one(r: int):
        rng = np.random.Generator(np.random.PCG64(children[r]))
        idx = _resample_indices(dataset, rng, plan.stratify_by_arm)
        resampled = dataset.subset(idx)
        try:
            _, values = _normalize_output(pipeline(resampled, plan.seed))
        except SemicompError as exc:
            return r, None, f"replicate {r}: {exc}"
        if values.shape != estimate.shape:
            return r, None, f"replicate {r}: output shape changed"
        return r, values, None

    results: list = [None] * reps
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for r, values, err in pool.map(one, range(reps)):
                results[r] = (values, err)
    else:
        for r in range(reps):
            _, values, err = one(r)
            results[r] = (values, err)

    rows, failures = [], []
    for values, err in results:
        if err is None:
            rows.append(values)
        else:
            failures.append(err)
    if len(failures) > plan.max_failure_fraction * reps:
        raise TooManyFailures(len(failures), reps)

    replicates = np.vstack(rows) if rows else np.empty((0, estimate.size))
    se = np.std(replicates, axis=0, ddof=1) if replicates.shape[0] > 1 else np.zeros(estimate.size)
    z = float(special.ndtri(0.5 + plan.level / 2.0))
    return BootstrapResult(
        names=names,
        estimate=estimate,
        se=se,
        ci_lower=estimate - z * se,
        ci_upper=estimate + z * se,
        replicates=replicates,
        n_failed=len(failures),
        plan=plan,
        failures=tuple(failures),
    )
