"""Identified nonparametric components feeding the partial-identification bounds.

For one arm the estimator combines the Kaplan-Meier curve of the death time
with kernel-smoothed conditional curves of the first gap time given death at
each KM jump point.  All integrals against the death distribution are finite
sums over the KM jump points; the undistributed KM tail mass (when the last
observation is censored) is assigned to the last death time so the implied
death distribution has total mass one.  Plateau-completing keeps the derived
curves proper and the disease-probability estimate calibrated under censoring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DegenerateEta, EmptyArm
from .stepfun import StepFunction
from .survival import KernelSpec, _beran_matrix, km_survival

__all__ = ["ComponentSet", "estimate_components", "estimate_eta"]


@dataclass(frozen=True)
class ComponentSet:
    """Per-arm identified components evaluated on a shared time grid."""

    arm: int
    eta: float
    eta_by_t: StepFunction
    s1: StepFunction
    s2: StepFunction
    f1: StepFunction
    support_end: float
    n: int
    n_deaths: int
    bandwidth: float
    tail_mass: float
    _s1_given_disease: StepFunction | None = None
    _s2_given_disease: StepFunction | None = None
    _s2_given_no_disease: StepFunction | None = None

    @property
    def s1_given_disease(self) -> StepFunction:
        if self._s1_given_disease is None:
            raise DegenerateEta(
                f"arm {self.arm}: survival of the first gap time given disease is "
                f"undefined (estimated disease probability {self.eta})"
            )
        return self._s1_given_disease

    @property
    def s2_given_disease(self) -> StepFunction:
        if self._s2_given_disease is None:
            raise DegenerateEta(
                f"arm {self.arm}: death distribution within the diseased is undefined "
                f"(estimated disease probability {self.eta})"
            )
        return self._s2_given_disease

    @property
    def s2_given_no_disease(self) -> StepFunction:
        if self._s2_given_no_disease is None:
            raise DegenerateEta(
                f"arm {self.arm}: death distribution within the never-diseased is "
                f"undefined (estimated disease probability {self.eta})"
            )
        return self._s2_given_no_disease


def _km_completed_masses(s2: StepFunction):
    """Death-time knots, raw KM jumps and the tail-completed point masses."""
    knots = s2.knots
    surv = s2.values
    prev = np.concatenate(([1.0], surv[:-1]))
    jumps = prev - surv
    completed = jumps.copy()
    tail = float(surv[-1]) if surv.size else 1.0
    if completed.size:
        completed[-1] += tail
    return knots, jumps, completed, tail


def estimate_eta(dataset: Dataset, a: int, kernel: KernelSpec | None = None):
    """Disease-precedes-death probability for one arm (fast scalar path).

    Returns ``(eta, eta_by_t, s2, bandwidth)`` without building the full set
    of conditional curves.
    """
    kernel = kernel or KernelSpec()
    arm = dataset.arm(a)
    s2 = km_survival(dataset, a)
    if s2.knots.size == 0:
        raise EmptyArm(a, "no terminal events")
    knots, jumps, completed, tail = _km_completed_masses(s2)
    _, diag, ok, h = _beran_matrix(arm, knots, np.empty(0), kernel, dataset.has_truncation)
    # Conditioning times are the death events themselves, so every one of
    # them carries its own kernel weight.
    assert bool(np.all(ok))
    f1_at_death = 1.0 - diag
    eta = float(np.sum(completed * f1_at_death))
    eta_by_t = _eta_by_t_curve(knots, jumps, f1_at_death, eta, s2)
    return eta, eta_by_t, s2, h


def _eta_by_t_curve(knots, jumps, f1_at_death, eta, s2):
    """Disease probability among deaths up to t; zero below the first death."""
    num = np.cumsum(jumps * f1_at_death)
    f2 = 1.0 - s2.values
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(f2 > 0, num / np.where(f2 > 0, f2, 1.0), 0.0)
    if vals.size:
        vals[-1] = eta  # completed measure: all mass accounted for at the end
    return StepFunction(knots, vals, 0.0)


def estimate_components(dataset: Dataset, a: int, kernel: KernelSpec | None = None,
                        t_grid=None) -> ComponentSet:
    """All identified components for arm ``a`` evaluated on ``t_grid``."""
    kernel = kernel or KernelSpec()
    arm = dataset.arm(a)
    s2 = km_survival(dataset, a)
    if s2.knots.size == 0:
        raise EmptyArm(a, "no terminal events")
    knots, jumps, completed, tail = _km_completed_masses(s2)
    if t_grid is None:
        t_grid = knots
    t_grid = np.unique(np.asarray(t_grid, dtype=float))

    mat, diag, ok, h = _beran_matrix(arm, knots, t_grid, kernel, dataset.has_truncation)
    assert bool(np.all(ok))

    f1_at_death = 1.0 - diag
    eta = float(np.sum(completed * f1_at_death))
    eta_by_t = _eta_by_t_curve(knots, jumps, f1_at_death, eta, s2)

    # First-event marginals: mass of the completed death distribution carried
    # through each conditional curve evaluated at min(t, death time).
    s1_vals = completed @ mat
    f1_vals = 1.0 - s1_vals
    s1 = StepFunction(t_grid, s1_vals, 1.0)
    f1 = StepFunction(t_grid, f1_vals, 0.0)

    s1_gd = s2_gd = s2_gnd = None
    if eta > 0.0:
        later = knots[:, None] > t_grid[None, :]
        resid = (mat - diag[:, None]) * later
        s1_gd_vals = (completed @ resid) / eta
        s1_gd = StepFunction(t_grid, np.clip(s1_gd_vals, 0.0, 1.0), 1.0)
        s2_gd_vals = 1.0 - np.cumsum(completed * f1_at_death) / eta
        s2_gd = StepFunction(knots, np.clip(s2_gd_vals, 0.0, 1.0), 1.0)
    if eta < 1.0:
        s2_gnd_vals = 1.0 - np.cumsum(completed * diag) / (1.0 - eta)
        s2_gnd = StepFunction(knots, np.clip(s2_gnd_vals, 0.0, 1.0), 1.0)

    return ComponentSet(
        arm=a,
        eta=eta,
        eta_by_t=eta_by_t,
        s1=s1,
        s2=s2,
        f1=f1,
        support_end=float(knots[-1]),
        n=arm.n,
        n_deaths=int(np.sum(arm.d2)),
        bandwidth=h,
        tail_mass=tail,
        _s1_given_disease=s1_gd,
        _s2_given_disease=s2_gd,
        _s2_given_no_disease=s2_gnd,
    )
