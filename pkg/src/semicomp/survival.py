"""Product-limit and kernel-smoothed conditional product-limit estimators.

``km_survival`` estimates the terminal-event survival curve per arm.
``smoothed_km_conditional`` estimates the first-gap-time survival curve given
a death at each requested time, by weighting death events with a kernel in
the death time and taking the weighted product limit over the first gap
times.  Both honor delayed entry through the risk-set definition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import ArmView, Dataset
from .errors import BeyondSupportWarning, DegenerateWeights, EmptyArm
from .stepfun import StepFunction

__all__ = [
    "KernelSpec",
    "SmoothedConditionalKM",
    "km_survival",
    "smoothed_km_conditional",
    "rmst",
    "quantile",
    "product_limit",
]

_KERNEL_IDS = {
    "epanechnikov": _kernels.KERNEL_EPANECHNIKOV,
    "uniform": _kernels.KERNEL_UNIFORM,
    "gaussian": _kernels.KERNEL_GAUSSIAN,
}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "epanechnikov"
    bandwidth: float | str = "auto"

    def __post_init__(self):
        if self.family not in _KERNEL_IDS:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.bandwidth != "auto":
            if not (float(self.bandwidth) > 0):
                raise ValueError("explicit bandwidth must be positive")
            object.__setattr__(self, "bandwidth", float(self.bandwidth))

    def resolve_bandwidth(self, death_times: np.ndarray) -> float:
        """Rule-of-thumb bandwidth 1.06 * sd * n^(-1/5) over event times."""
        if self.bandwidth != "auto":
            return float(self.bandwidth)
        n = death_times.size
        if n == 0:
            return 1.0
        sd = float(np.std(death_times))
        if sd == 0.0 or n < 2:
            span = float(np.max(death_times)) if n else 1.0
            return max(1e-6, 0.05 * max(span, 1e-6))
        return 1.06 * sd * n ** (-0.2)


def product_limit(time, event, entry=None, weights=None) -> StepFunction:
    """Weighted product-limit survival estimate.

    Risk set at an event time ``u`` is ``{entry <= u <= time}`` (events and
    same-time censorings both still at risk, the standard tie convention).
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    n = time.size
    entry = np.zeros(n) if entry is None else np.asarray(entry, dtype=float)
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

    ev_mask = event.astype(bool) & (weights > 0)
    if not np.any(ev_mask):
        return StepFunction.constant(1.0)
    knots = np.unique(time[ev_mask])

    d_w = np.zeros(knots.size)
    np.add.at(d_w, np.searchsorted(knots, time[ev_mask]), weights[ev_mask])

    entry_sorted = np.sort(entry)
    order_t = np.argsort(time, kind="stable")
    time_sorted = time[order_t]
    w_by_time = np.concatenate(([0.0], np.cumsum(weights[order_t])))
    w_by_entry = np.concatenate(([0.0], np.cumsum(weights[np.argsort(entry, kind="stable")])))

    entered = w_by_entry[np.searchsorted(entry_sorted, knots, side="right")]
    exited = w_by_time[np.searchsorted(time_sorted, knots, side="left")]
    n_w = entered - exited

    surv = np.cumprod(1.0 - d_w / n_w)
    return StepFunction(knots, surv, 1.0)


def km_survival(dataset: Dataset, a: int, weights=None) -> StepFunction:
    """Kaplan-Meier estimate of terminal-event survival within arm ``a``."""
    arm = dataset.arm(a)
    if arm.n == 0:
        raise EmptyArm(a)
    return product_limit(arm.t2, arm.d2, arm.entry, weights)


@dataclass(frozen=True)
class SmoothedConditionalKM:
    """Conditional first-gap-time survival curves on a grid of death times."""

    target_times: np.ndarray
    curves: tuple[StepFunction, ...]
    arm: int
    kernel: KernelSpec
    bandwidth: float = field(default=0.0)

    def curve_at(self, t: float) -> StepFunction:
        idx = int(np.argmin(np.abs(self.target_times - t)))
        if not math.isclose(float(self.target_times[idx]), t, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(f"no conditioning time {t} in the grid")
        return self.curves[idx]


def _beran_matrix(arm: ArmView, cond_times: np.ndarray, grid: np.ndarray,
                  kernel: KernelSpec, use_entry: bool):
    """Matrix of conditional survival values over (conditioning, evaluation) pairs."""
    carriers = arm.d2 == 1
    t2_w = arm.t2[carriers]
    order = np.argsort(t2_w, kind="stable")
    t2_w = t2_w[order]
    t1_w = arm.t1[carriers][order]
    d1_w = arm.d1[carriers][order]
    entry_w = arm.entry[carriers][order]
    h = kernel.resolve_bandwidth(t2_w)
    mat, diag, ok = _kernels.conditional_km_matrix(
        t2_w, t1_w, d1_w.astype(np.int64), entry_w, use_entry,
        np.asarray(cond_times, dtype=float), np.asarray(grid, dtype=float),
        h, _KERNEL_IDS[kernel.family],
    )
    return mat, diag, ok, h


def smoothed_km_conditional(dataset: Dataset, a: int, t_grid,
                            kernel: KernelSpec | None = None) -> SmoothedConditionalKM:
    """Conditional survival of the first gap time given death at each grid time."""
    kernel = kernel or KernelSpec()
    arm = dataset.arm(a)
    deaths = arm.t2[arm.d2 == 1]
    if deaths.size == 0:
        raise EmptyArm(a, "no terminal events")
    t_grid = np.asarray(t_grid, dtype=float)
    lo, hi = float(np.min(arm.t2)), float(np.max(arm.t2))
    if np.any(t_grid < lo) or np.any(t_grid > hi):
        raise ValueError(f"t_grid must lie within the observed support [{lo}, {hi}]")

    # Knot candidates: observed first gap times of disease events, so each
    # per-conditioning curve can be materialized exactly.
    knot_pool = np.unique(arm.t1[(arm.d1 == 1) & (arm.d2 == 1)])
    mat, diag, ok, h = _beran_matrix(arm, t_grid, knot_pool, kernel, dataset.has_truncation)
    bad = np.flatnonzero(~ok)
    if bad.size:
        raise DegenerateWeights(float(t_grid[bad[0]]))

    curves = []
    for k, s in enumerate(t_grid):
        keep = knot_pool <= s
        knots = knot_pool[keep]
        values = mat[k, keep]
        if knots.size == 0 or knots[-1] < s:
            # Pin the constant continuation at the conditioning time.
            knots = np.concatenate((knots, [s]))
            values = np.concatenate((values, [diag[k]]))
        curves.append(StepFunction(knots, values, 1.0))
    return SmoothedConditionalKM(t_grid, tuple(curves), a, kernel, h)


def rmst(curve: StepFunction, t_star: float) -> float:
    """Restricted mean ``integral of the survival curve over [0, t_star]``."""
    if not t_star > 0:
        raise ValueError("t_star must be positive")
    if curve.knots.size and t_star > curve.support_end and curve.values[-1] > 0:
        warnings.warn(
            f"t_star={t_star} exceeds the last knot {curve.support_end}; "
            "using constant extrapolation",
            BeyondSupportWarning,
            stacklevel=2,
        )
    return curve.integrate(t_star)


def quantile(curve: StepFunction, q: float) -> float:
    """Smallest ``t`` with ``1 - S(t) >= q``; ``inf`` when never crossed."""
    if not 0 < q < 1:
        raise ValueError("q must lie strictly between 0 and 1")
    if 1.0 - curve.value_at_zero >= q:
        return 0.0
    hits = np.flatnonzero(1.0 - curve.values >= q)
    if hits.size == 0:
        return math.inf
    return float(curve.knots[hits[0]])
