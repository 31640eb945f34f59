"""Partial-identification bounds for the stratum-specific causal effects.

Three probability-difference effects are bounded: death time within the
always-diseased stratum (``t2_ad``), death time within the never-diseased
stratum (``t2_nd``) and disease time within the always-diseased stratum
(``t1_ad``).  Restricted-mean intervals follow by integrating the envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .components import ComponentSet, estimate_components
from .data import Dataset
from .errors import BeyondSupport, DegenerateEta, EmptyArm, EmptyCell
from .stepfun import StepFunction
from .survival import KernelSpec

__all__ = [
    "EFFECTS",
    "StrataProportions",
    "BoundsResult",
    "strata_proportions",
    "bounds_unadjusted",
    "bounds_ranked_lower",
    "bounds_adjusted",
    "combine_bounds",
    "rmst_bounds",
]

EFFECTS = ("t2_ad", "t2_nd", "t1_ad")


@dataclass(frozen=True)
class StrataProportions:
    pi_ad: float
    pi_nd: float
    pi_dh: float
    order_violation: bool = False

    def as_dict(self) -> dict:
        return {
            "pi_ad": self.pi_ad,
            "pi_nd": self.pi_nd,
            "pi_dh": self.pi_dh,
            "order_violation": self.order_violation,
        }


def _eta_of(c) -> float:
    return c.eta if isinstance(c, ComponentSet) else float(c)


def strata_proportions(c0, c1) -> StrataProportions:
    """Stratum proportions implied by the two arms' disease probabilities.

    Accepts component sets or the probabilities themselves.  An empirical
    order-preservation violation (arm-1 probability below arm-0) clips the
    harmed proportion to zero and flags the result.
    """
    eta0, eta1 = _eta_of(c0), _eta_of(c1)
    if eta1 < eta0:
        ad = min(eta0, eta1)
        return StrataProportions(pi_ad=ad, pi_nd=1.0 - eta1, pi_dh=0.0, order_violation=True)
    return StrataProportions(pi_ad=eta0, pi_nd=1.0 - eta1, pi_dh=eta1 - eta0)


@dataclass(frozen=True)
class BoundsResult:
    t_grid: np.ndarray
    lower: dict[str, np.ndarray]
    upper: dict[str, np.ndarray]
    variant: str
    support_end: float
    beyond_support: np.ndarray
    clipped: dict[str, np.ndarray] = field(default_factory=dict)
    strata: StrataProportions | None = None
    ranked_lower: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def envelope(self, effect: str, side: str) -> StepFunction:
        vals = self.lower[effect] if side == "lower" else self.upper[effect]
        return StepFunction(self.t_grid, vals, 0.0)

    def to_rows(self):
        """Long-format rows (effect, t, lower, upper, variant, flags)."""
        rows = []
        for effect in EFFECTS:
            clip = self.clipped.get(effect, np.zeros(self.t_grid.size, dtype=bool))
            for i, t in enumerate(self.t_grid):
                rows.append({
                    "effect": effect,
                    "t": float(t),
                    "lower": float(self.lower[effect][i]),
                    "upper": float(self.upper[effect][i]),
                    "variant": self.variant,
                    "beyond_support": bool(self.beyond_support[i]),
                    "clipped": bool(clip[i]),
                })
        if self.ranked_lower is not None:
            for i, t in enumerate(self.t_grid):
                rows.append({
                    "effect": "t1_ad",
                    "t": float(t),
                    "lower": float(self.ranked_lower[i]),
                    "upper": float(self.upper["t1_ad"][i]),
                    "variant": "ranked",
                    "beyond_support": bool(self.beyond_support[i]),
                    "clipped": False,
                })
        return rows


def _check_eta(eta0: float, eta1: float) -> None:
    if eta0 <= 0.0:
        raise DegenerateEta(
            "always-diseased bounds are undefined: arm-0 disease probability is 0"
        )
    if eta1 >= 1.0:
        raise DegenerateEta(
            "never-diseased bounds are undefined: arm-1 disease probability is 1"
        )


def _bracket_values(c0: ComponentSet, c1: ComponentSet, t: np.ndarray):
    """The six bound expressions evaluated pointwise on ``t``."""
    eta0, eta1 = c0.eta, c1.eta
    s2_1 = c1.s2(t)
    f2_1 = 1.0 - s2_1
    eta1_le = c1.eta_by_t(t)
    f2_ad_0 = 1.0 - c0.s2_given_disease(t)

    l_t2_ad = np.maximum(0.0, 1.0 - s2_1 / eta0) - f2_ad_0
    u_t2_ad = np.minimum(1.0, f2_1 * eta1_le / eta0) - f2_ad_0

    f2_nd_1 = 1.0 - c1.s2_given_no_disease(t)
    s2_0 = c0.s2(t)
    f2_0 = 1.0 - s2_0
    eta0_le = c0.eta_by_t(t)
    l_t2_nd = f2_nd_1 - np.minimum(1.0, f2_0 * (1.0 - eta0_le) / (1.0 - eta1))
    u_t2_nd = f2_nd_1 - np.maximum(0.0, 1.0 - s2_0 / (1.0 - eta1))

    s1_1 = c1.s1(t)
    f1_1 = c1.f1(t)
    f1_ad_0 = 1.0 - c0.s1_given_disease(t)
    l_t1_ad = np.maximum(0.0, 1.0 - s1_1 / eta0) - f1_ad_0
    u_t1_ad = np.minimum(1.0, f1_1 / eta0) - f1_ad_0

    return {
        "t2_ad": (l_t2_ad, u_t2_ad),
        "t2_nd": (l_t2_nd, u_t2_nd),
        "t1_ad": (l_t1_ad, u_t1_ad),
    }


def bounds_unadjusted(c0: ComponentSet, c1: ComponentSet, t_grid) -> BoundsResult:
    """Plug-in bounds from the two arms' identified components."""
    t = np.asarray(t_grid, dtype=float)
    _check_eta(c0.eta, c1.eta)
    brackets = _bracket_values(c0, c1, t)
    support_end = min(c0.support_end, c1.support_end)
    return BoundsResult(
        t_grid=t,
        lower={k: v[0] for k, v in brackets.items()},
        upper={k: v[1] for k, v in brackets.items()},
        variant="unadj",
        support_end=support_end,
        beyond_support=t > support_end,
        strata=strata_proportions(c0, c1),
        metadata={"eta0": c0.eta, "eta1": c1.eta},
    )


def bounds_ranked_lower(c0: ComponentSet, c1: ComponentSet, t_grid) -> StepFunction:
    """Sharper lower bound for the disease-time effect within always-diseased.

    Valid only under the ranked-onset assumption; callers must treat it as an
    annotated alternative, the assumption is never tested empirically.
    """
    t = np.asarray(t_grid, dtype=float)
    f1_ad_1 = 1.0 - c1.s1_given_disease(t)
    f1_ad_0 = 1.0 - c0.s1_given_disease(t)
    return StepFunction(t, f1_ad_1 - f1_ad_0, 0.0)


def bounds_adjusted(dataset: Dataset, kernel: KernelSpec | None = None,
                    t_grid=None) -> BoundsResult:
    """Covariate-sharpened bounds: per-level brackets averaged with identified
    stratum-membership weights.

    The averaging weight for the always-diseased expressions is the level's
    share among arm-0 diseased subjects; the never-diseased expressions use
    the share among arm-1 non-diseased subjects (symmetric construction,
    marked as an extension for the ``t2_nd``/``t1_ad`` effects).
    """
    if not dataset.has_z:
        raise ValueError("adjusted bounds require a z covariate")
    kernel = kernel or KernelSpec()
    levels = dataset.z_levels()
    n_total = len(dataset)
    t = np.asarray(t_grid, dtype=float)

    per_level = []
    for z in levels:
        mask = np.array([r.z == z for r in dataset.records])
        sub = dataset.subset(mask)
        for a in (0, 1):
            try:
                arm = sub.arm(a)
            except EmptyArm:
                raise EmptyCell(a, z) from None
            if not np.any(arm.d2 == 1):
                raise EmptyCell(a, z)
        c0z = estimate_components(sub, 0, kernel, t)
        c1z = estimate_components(sub, 1, kernel, t)
        _check_eta(c0z.eta, c1z.eta)
        per_level.append((z, len(sub) / n_total, c0z, c1z))

    w_ad = np.array([pz * c0z.eta for _, pz, c0z, _ in per_level])
    w_nd = np.array([pz * (1.0 - c1z.eta) for _, pz, _, c1z in per_level])
    w_ad = w_ad / np.sum(w_ad)
    w_nd = w_nd / np.sum(w_nd)

    lower = {k: np.zeros(t.size) for k in EFFECTS}
    upper = {k: np.zeros(t.size) for k in EFFECTS}
    support_end = np.inf
    for (z, pz, c0z, c1z), wa, wn in zip(per_level, w_ad, w_nd):
        brackets = _bracket_values(c0z, c1z, t)
        for effect in ("t2_ad", "t1_ad"):
            lower[effect] += wa * brackets[effect][0]
            upper[effect] += wa * brackets[effect][1]
        lower["t2_nd"] += wn * brackets["t2_nd"][0]
        upper["t2_nd"] += wn * brackets["t2_nd"][1]
        support_end = min(support_end, c0z.support_end, c1z.support_end)

    return BoundsResult(
        t_grid=t,
        lower=lower,
        upper=upper,
        variant="adj",
        support_end=float(support_end),
        beyond_support=t > support_end,
        metadata={
            "z_levels": levels,
            "weights_ad": w_ad.tolist(),
            "weights_nd": w_nd.tolist(),
            "extension_effects": ["t2_nd", "t1_ad"],
        },
    )


def combine_bounds(unadj: BoundsResult, adj: BoundsResult) -> BoundsResult:
    """Pointwise best of two bound sets; crossings collapse to the midpoint."""
    if unadj.t_grid.shape != adj.t_grid.shape or np.any(unadj.t_grid != adj.t_grid):
        raise ValueError("bounds must share the same time grid")
    lower, upper, clipped = {}, {}, {}
    for effect in EFFECTS:
        lo = np.maximum(unadj.lower[effect], adj.lower[effect])
        hi = np.minimum(unadj.upper[effect], adj.upper[effect])
        crossed = lo > hi
        if np.any(crossed):
            mid = 0.5 * (lo + hi)
            lo = np.where(crossed, mid, lo)
            hi = np.where(crossed, mid, hi)
        lower[effect], upper[effect] = lo, hi
        clipped[effect] = crossed
    support_end = min(unadj.support_end, adj.support_end)
    return BoundsResult(
        t_grid=unadj.t_grid,
        lower=lower,
        upper=upper,
        variant="combined",
        support_end=support_end,
        beyond_support=unadj.t_grid > support_end,
        clipped=clipped,
        strata=unadj.strata,
        metadata={"sources": [unadj.variant, adj.variant]},
    )


RMST_FROM_EFFECT = {
    "rmst_t2_ad": "t2_ad",
    "rmst_t1_ad": "t1_ad",
    "rmst_t2_nd": "t2_nd",
}


def rmst_bounds(bounds: BoundsResult, t_star: float) -> dict[str, tuple[float, float]]:
    """Intervals for the restricted-mean effects implied by the bound envelopes.

    A difference of restricted means equals minus the integral of the
    distribution-difference curve, so envelope integration swaps and negates
    the endpoints.  The within-diseased residual-lifetime interval is the
    interval difference of the death-time and disease-time intervals.
    """
    if t_star > bounds.support_end:
        raise BeyondSupport(
            f"t_star={t_star} exceeds the identified range ({bounds.support_end})"
        )
    out: dict[str, tuple[float, float]] = {}
    for name, effect in RMST_FROM_EFFECT.items():
        low_int = bounds.envelope(effect, "lower").integrate(t_star)
        upp_int = bounds.envelope(effect, "upper").integrate(t_star)
        out[name] = (-upp_int, -low_int)
    l4, u4 = out["rmst_t2_ad"]
    l5, u5 = out["rmst_t1_ad"]
    out["rmst_gap_ad"] = (l4 - u5, u4 - l5)
    return out
