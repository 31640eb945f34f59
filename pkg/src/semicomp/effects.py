"""Stratum-specific causal effects from fitted illness-death models.

Effects are evaluated by Monte Carlo over cross-world frailty pairs (and,
optionally, covariate vectors resampled from the data).  For each draw the
fitted step baselines yield exact conditional functionals of one world:
the probability that disease precedes death, and the sub-distribution
functions of disease and death within the diseased and non-diseased groups.
Within-stratum contrasts are then weighted averages across draws, with the
always-diseased weight being the product of the two worlds' disease
probabilities and the never-diseased weight the product of the complements.

Time runs on the fitted baselines' jump skeleton; beyond the last fitted
jump all hazards are flat, and conditional distributions are normalized to
the mass reachable within that support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec, VanishingStratum
from .frailty import FrailtySpec, sample_frailty_pairs, substream
from .idm import IdmFit
from .stepfun import StepFunction

__all__ = [
    "EffectRequest",
    "EffectResult",
    "conditional_functionals",
    "effects_prop4",
    "rho_sweep",
]

SCALAR_EFFECTS = (
    "rmst_t2_ad", "rmst_t1_ad", "rmst_gap_ad", "rmst_t2_nd",
    "median_t2_ad", "median_t1_ad", "median_t2_nd",
)
CURVE_EFFECTS = ("t2_ad", "t2_nd", "t1_ad")
_CHUNK = 512
_EXP_GUARD = 600.0


@dataclass(frozen=True)
class EffectRequest:
    t_star: float
    frailty: FrailtySpec
    b: int = 20_000
    t_grid: np.ndarray | None = None
    effects: tuple[str, ...] = CURVE_EFFECTS + SCALAR_EFFECTS
    covariate_mode: str = "empirical"
    x_pool: np.ndarray | None = None
    fixed_x: np.ndarray | None = None
    median_grid_size: int = 2048
    batch_groups: int = 10

    def __post_init__(self):
        if not self.t_star > 0:
            raise InvalidSpec("t_star must be positive")
        if self.b < 1:
            raise InvalidSpec("Monte Carlo size must be at least 1")
        if self.covariate_mode not in ("empirical", "fixed"):
            raise InvalidSpec("covariate_mode must be 'empirical' or 'fixed'")
        if self.t_grid is not None:
            object.__setattr__(self, "t_grid", np.asarray(self.t_grid, dtype=float))

    def resolved_grid(self) -> np.ndarray:
        if self.t_grid is not None:
            return self.t_grid
        return np.linspace(0.0, self.t_star, 61)[1:]


@dataclass(frozen=True)
class EffectResult:
    rho: float
    b: int
    t_star: float
    t_grid: np.ndarray
    scalars: dict[str, float]
    scalar_se: dict[str, float]
    curves: dict[str, np.ndarray]
    curve_se: dict[str, np.ndarray]
    weight_sums: dict[str, float]
    metadata: dict = field(default_factory=dict)

    def to_rows(self):
        rows = []
        for name, val in self.scalars.items():
            rows.append({
                "effect": name, "t": self.t_star, "rho": self.rho,
                "estimate": val, "mc_se": self.scalar_se.get(name, float("nan")),
                "b": self.b,
            })
        for name, vals in self.curves.items():
            ses = self.curve_se.get(name)
            for i, t in enumerate(self.t_grid):
                rows.append({
                    "effect": name, "t": float(t), "rho": self.rho,
                    "estimate": float(vals[i]),
                    "mc_se": float(ses[i]) if ses is not None else float("nan"),
                    "b": self.b,
                })
        return rows


# ---------------------------------------------------------------------------
# Fitted-model functional engine


class _ArmEngine:
    """Exact per-draw conditional functionals of one arm's fitted model.

    Healthy-state exits are treated as competing exponential hazard atoms at
    the fitted jump times; the post-disease death distribution accumulates
    the remaining clock-forward hazard from the disease atom onward.
    """

    def __init__(self, fit: IdmFit, eval_times: np.ndarray):
        self.fit = fit
        b01, b02, b12 = (fit.baselines[k] for k in ("01", "02", "12"))
        exits = np.union1d(b01.knots, b02.knots)
        if exits.size == 0:
            raise InvalidSpec("fitted model carries no healthy-state exit events")
        self.exits = exits
        self.d01 = self._increments_on(b01, exits)
        self.d02 = self._increments_on(b02, exits)
        prev = np.concatenate(([0.0], np.cumsum(self.d01 + 0.0)[:-1]))
        self.cum01_pre = np.concatenate(([0.0], np.cumsum(self.d01)[:-1]))
        self.cum02_pre = np.concatenate(([0.0], np.cumsum(self.d02)[:-1]))
        del prev
        self.c12_at_exit = self._cum(b12, exits)

        support = float(max(exits[-1], b12.knots[-1] if b12.knots.size else 0.0))
        self.support_end = support
        grid = np.union1d(eval_times, np.union1d(exits, b12.knots))
        grid = grid[(grid >= 0.0) & (grid <= support)]
        self.grid = grid
        self.exit_idx_for_grid = np.searchsorted(exits, grid, side="right") - 1
        self.c12_at_grid = self._cum(b12, grid)
        self.grid_pos = {float(t): int(np.searchsorted(grid, t)) for t in np.atleast_1d(eval_times)}
        self.widths = np.diff(np.concatenate((grid, [support])))

    @staticmethod
    def _cum(base: StepFunction, t: np.ndarray) -> np.ndarray:
        if base.knots.size == 0:
            return np.zeros(t.size)
        return base(t)

    @staticmethod
    def _increments_on(base: StepFunction, grid: np.ndarray) -> np.ndarray:
        out = np.zeros(grid.size)
        if base.knots.size == 0:
            return out
        vals = np.concatenate(([0.0], base.values))
        pos = np.searchsorted(grid, base.knots)
        out[pos] = np.diff(vals)
        return out

    def draws(self, r01: np.ndarray, r02: np.ndarray, r12: np.ndarray) -> dict:
        """Per-draw disease probability and sub-CDFs on the engine grid."""
        a_pre = np.multiply.outer(r01, self.cum01_pre)
        a_pre += np.multiply.outer(r02, self.cum02_pre)
        np.negative(a_pre, out=a_pre)
        s0 = np.exp(a_pre, out=a_pre)
        h1 = np.multiply.outer(r01, self.d01)
        h2 = np.multiply.outer(r02, self.d02)
        h_tot = h1 + h2
        with np.errstate(invalid="ignore", divide="ignore"):
            frac1 = np.where(h_tot > 0.0, h1 / np.where(h_tot > 0, h_tot, 1.0), 0.0)
        p_exit = s0 * (-np.expm1(-h_tot))
        p01 = p_exit * frac1
        p02 = p_exit - p01

        eta = p01.sum(axis=1)
        c01 = np.cumsum(p01, axis=1)
        c02 = np.cumsum(p02, axis=1)

        # Death after disease: for each evaluation time, sum over disease atoms
        # of the probability the remaining clock-forward hazard fires by then.
        # The inner sum factorizes through a running cumulation, done in log
        # space whenever the exponent would overflow.
        expo = np.multiply.outer(r12, self.c12_at_exit)
        safe = (expo[:, -1] if expo.shape[1] else np.zeros(r12.size)) < _EXP_GUARD
        acc = np.empty_like(expo)
        if np.any(safe):
            sub = np.exp(expo[safe]) * p01[safe]
            acc[safe] = np.cumsum(sub, axis=1)
        if np.any(~safe):
            with np.errstate(divide="ignore"):
                logs = np.log(p01[~safe]) + expo[~safe]
            acc[~safe] = np.logaddexp.accumulate(logs, axis=1)

        gidx = self.exit_idx_for_grid
        c01_g = self._gather(c01, gidx)
        c02_g = self._gather(c02, gidx)
        decay = np.multiply.outer(r12, self.c12_at_grid)
        acc_g = self._gather(acc, gidx)
        dead_ad = np.empty_like(decay)
        if np.any(safe):
            dead_ad[safe] = acc_g[safe] * np.exp(-decay[safe])
        if np.any(~safe):
            dead_ad[~safe] = np.exp(acc_g[~safe] - decay[~safe])
        dead_ad = c01_g - dead_ad
        np.clip(dead_ad, 0.0, None, out=dead_ad)

        return {
            "eta": eta,
            "f1_ad_num": c01_g,          # Pr(disease <= t, disease first)
            "f2_ad_num": dead_ad,        # Pr(death <= t, disease first)
            "f2_nd_num": c02_g,          # Pr(death <= t, death first)
            "f2_ad_total": dead_ad[:, -1] if dead_ad.shape[1] else np.zeros(eta.size),
            "f2_nd_total": c02[:, -1] if c02.shape[1] else np.zeros(eta.size),
        }

    @staticmethod
    def _gather(arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
        padded = np.concatenate((np.zeros((arr.shape[0], 1)), arr), axis=1)
        return padded[:, idx + 1]

    def integrate_to(self, curves: np.ndarray, t_star: float) -> np.ndarray:
        """Exact integral of per-draw step curves over [0, t_star]."""
        edges = np.concatenate((self.grid, [self.support_end]))
        cut = np.searchsorted(self.grid, t_star, side="right")
        if cut == 0:
            return np.zeros(curves.shape[0])
        w = np.diff(np.concatenate((self.grid[:cut], [min(t_star, self.support_end)])))
        w = np.where(w > 0, w, 0.0)
        del edges
        return curves[:, :cut] @ w

    def rates_for(self, gamma: np.ndarray, x: np.ndarray):
        coefs = self.fit.coefs
        if x.shape[1]:
            r01 = gamma * np.exp(np.clip(x @ coefs["01"], -700, 700))
            r02 = gamma * np.exp(np.clip(x @ coefs["02"], -700, 700))
            r12 = gamma * np.exp(np.clip(x @ coefs["12"], -700, 700))
        else:
            r01 = r02 = r12 = gamma
        return r01, r02, r12


def _normalize(num: np.ndarray, total: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total[:, None] > 0, num / np.where(total > 0, total, 1.0)[:, None], 0.0)


def conditional_functionals(fit: IdmFit, gamma: float, x=None, t_grid=None,
                            method: str = "exact", sim_size: int = 200_000,
                            seed: int = 0):
    """Disease probability and conditional sub-distributions for one frailty.

    Returns ``(eta, f1_given_disease, f2_given_disease, f2_given_no_disease)``
    with the curves as step functions on ``t_grid``.  ``method="simulate"``
    replaces the exact jump sums by micro-simulation from the fitted hazards.
    """
    if gamma < 0:
        raise InvalidSpec("frailty value must be non-negative")
    x = np.zeros((1, fit.coefs["01"].size)) if x is None else np.asarray(x, dtype=float).reshape(1, -1)
    if t_grid is None:
        t_grid = np.linspace(0.0, fit.baselines["02"].support_end or 1.0, 51)[1:]
    t_grid = np.asarray(t_grid, dtype=float)

    engine = _ArmEngine(fit, t_grid)
    if method == "exact":
        g = np.array([float(gamma)])
        out = engine.draws(*engine.rates_for(g, x))
        eta = float(out["eta"][0])
        f1 = _normalize(out["f1_ad_num"], np.maximum(out["eta"], 0.0))[0]
        f2_ad = _normalize(out["f2_ad_num"], out["f2_ad_total"])[0]
        f2_nd = _normalize(out["f2_nd_num"], out["f2_nd_total"])[0]
        pos = np.searchsorted(engine.grid, t_grid, side="right") - 1
        def curve(vals):
            padded = np.concatenate(([0.0], vals))
            return StepFunction(t_grid, padded[pos + 1], 0.0)
        return eta, curve(f1), curve(f2_ad), curve(f2_nd)

    if method != "simulate":
        raise InvalidSpec("method must be 'exact' or 'simulate'")
    rng = substream(seed, "paths0")
    r01, r02, r12 = engine.rates_for(np.full(sim_size, float(gamma)), np.repeat(x, sim_size, 0))
    h_cum = np.cumsum(np.multiply.outer(r01[:1], engine.d01)[0] + np.multiply.outer(r02[:1], engine.d02)[0])
    draw = rng.exponential(size=sim_size)
    pos = np.searchsorted(h_cum, draw, side="left")
    exited = pos < engine.exits.size
    h1_at = r01[0] * engine.d01
    h2_at = r02[0] * engine.d02
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(h1_at + h2_at > 0, h1_at / np.where(h1_at + h2_at > 0, h1_at + h2_at, 1), 0.0)
    u = rng.random(sim_size)
    dis = exited & (u < frac[np.clip(pos, 0, engine.exits.size - 1)])
    t_exit = np.where(exited, engine.exits[np.clip(pos, 0, engine.exits.size - 1)], np.inf)
    b12 = fit.baselines["12"]
    death = np.full(sim_size, np.inf)
    death[exited & ~dis] = t_exit[exited & ~dis]
    if np.any(dis) and b12.knots.size:
        cum12 = np.concatenate(([0.0], b12.values))
        start = cum12[np.searchsorted(b12.knots, t_exit[dis], side="right")]
        need = start + rng.exponential(size=int(np.sum(dis))) / r12[0]
        dpos = np.searchsorted(cum12[1:], need, side="left")
        dead = dpos < b12.knots.size
        dtimes = np.where(dead, b12.knots[np.clip(dpos, 0, b12.knots.size - 1)], np.inf)
        death[dis] = dtimes
    eta = float(np.mean(dis))

    def ecdf_curve(values, mask):
        sel = values[mask]
        sel = sel[np.isfinite(sel)]
        denom = max(sel.size, 1)
        counts = np.searchsorted(np.sort(sel), t_grid, side="right")
        return StepFunction(t_grid, counts / denom, 0.0)

    f1 = ecdf_curve(t_exit, dis)
    f2_ad = ecdf_curve(death, dis)
    f2_nd = ecdf_curve(death, exited & ~dis)
    return eta, f1, f2_ad, f2_nd


# ---------------------------------------------------------------------------
# Monte Carlo effect evaluation


class _WeightedAccumulator:
    """Running weighted first/second moments, overall and per batch group."""

    def __init__(self, size: int, groups: int):
        self.w = 0.0
        self.w2 = 0.0
        self.wd = np.zeros(size)
        self.w2d = np.zeros(size)
        self.w2d2 = np.zeros(size)
        self.group_w = np.zeros(groups)
        self.group_wd = np.zeros((groups, size))

    def add(self, w: np.ndarray, d: np.ndarray, group: np.ndarray):
        self.w += float(np.sum(w))
        self.w2 += float(np.sum(w * w))
        self.wd += w @ d
        self.w2d += (w * w) @ d
        self.w2d2 += (w * w) @ (d * d)
        np.add.at(self.group_w, group, w)
        for g in np.unique(group):
            sel = group == g
            self.group_wd[g] += w[sel] @ d[sel]

    def mean(self) -> np.ndarray:
        return self.wd / self.w

    def se(self) -> np.ndarray:
        mu = self.mean()
        var = self.w2d2 - 2.0 * mu * self.w2d + mu * mu * self.w2
        return np.sqrt(np.maximum(var, 0.0)) / self.w

    def group_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.group_wd / np.where(self.group_w > 0, self.group_w, 1.0)[:, None]


def _median_from_curve(grid: np.ndarray, cdf: np.ndarray, t_star: float) -> float:
    hits = np.flatnonzero(cdf >= 0.5)
    if hits.size == 0:
        return t_star
    return min(float(grid[hits[0]]), t_star)


def effects_prop4(fit0: IdmFit, fit1: IdmFit, request: EffectRequest,
                  seed: int = 0) -> EffectResult:
    """Monte Carlo evaluation of the frailty identification formulas."""
    b = request.b
    t_star = request.t_star
    t_grid = request.resolved_grid()
    gamma0, gamma1 = sample_frailty_pairs(request.frailty, b, seed)

    p = fit0.coefs["01"].size
    if request.covariate_mode == "empirical":
        if p and (request.x_pool is None or request.x_pool.shape[1] != p):
            raise InvalidSpec("empirical covariate mode needs an x_pool matching the fit")
        if p:
            idx = substream(seed, "resample").integers(0, request.x_pool.shape[0], size=b)
            x_draws = np.asarray(request.x_pool, dtype=float)[idx]
        else:
            x_draws = np.zeros((b, 0))
    else:
        fx = np.zeros(p) if request.fixed_x is None else np.asarray(request.fixed_x, dtype=float)
        x_draws = np.tile(fx, (b, 1))

    eng0 = _ArmEngine(fit0, np.concatenate((t_grid, [t_star])))
    eng1 = _ArmEngine(fit1, np.concatenate((t_grid, [t_star])))
    pos0 = np.searchsorted(eng0.grid, t_grid, side="right") - 1
    pos1 = np.searchsorted(eng1.grid, t_grid, side="right") - 1
    groups = request.batch_groups

    g_size = t_grid.size
    acc_curve = {k: _WeightedAccumulator(g_size, groups) for k in CURVE_EFFECTS}
    acc_scalar = {k: _WeightedAccumulator(1, groups)
                  for k in ("rmst_t2_ad", "rmst_t1_ad", "rmst_t2_nd")}
    mix0 = {k: _WeightedAccumulator(eng0.grid.size, groups) for k in ("f2_ad", "f1_ad", "f2_nd")}
    mix1 = {k: _WeightedAccumulator(eng1.grid.size, groups) for k in ("f2_ad", "f1_ad", "f2_nd")}

    for start in range(0, b, _CHUNK):
        stop = min(start + _CHUNK, b)
        sl = slice(start, stop)
        group = (np.arange(start, stop) * groups) // b
        x_c = x_draws[sl]
        out0 = eng0.draws(*eng0.rates_for(gamma0[sl], x_c))
        out1 = eng1.draws(*eng1.rates_for(gamma1[sl], x_c))

        eta0, eta1 = out0["eta"], out1["eta"]
        w_ad = eta0 * eta1
        w_nd = (1.0 - eta0) * (1.0 - eta1)

        f1_0 = _normalize(out0["f1_ad_num"], eta0)
        f1_1 = _normalize(out1["f1_ad_num"], eta1)
        f2ad_0 = _normalize(out0["f2_ad_num"], out0["f2_ad_total"])
        f2ad_1 = _normalize(out1["f2_ad_num"], out1["f2_ad_total"])
        f2nd_0 = _normalize(out0["f2_nd_num"], out0["f2_nd_total"])
        f2nd_1 = _normalize(out1["f2_nd_num"], out1["f2_nd_total"])

        acc_curve["t2_ad"].add(w_ad, f2ad_1[:, pos1] - f2ad_0[:, pos0], group)
        acc_curve["t1_ad"].add(w_ad, f1_1[:, pos1] - f1_0[:, pos0], group)
        acc_curve["t2_nd"].add(w_nd, f2nd_1[:, pos1] - f2nd_0[:, pos0], group)

        int_f2ad_0 = eng0.integrate_to(f2ad_0, t_star)
        int_f2ad_1 = eng1.integrate_to(f2ad_1, t_star)
        int_f1_0 = eng0.integrate_to(f1_0, t_star)
        int_f1_1 = eng1.integrate_to(f1_1, t_star)
        int_f2nd_0 = eng0.integrate_to(f2nd_0, t_star)
        int_f2nd_1 = eng1.integrate_to(f2nd_1, t_star)
        acc_scalar["rmst_t2_ad"].add(w_ad, (int_f2ad_0 - int_f2ad_1)[:, None], group)
        acc_scalar["rmst_t1_ad"].add(w_ad, (int_f1_0 - int_f1_1)[:, None], group)
        acc_scalar["rmst_t2_nd"].add(w_nd, (int_f2nd_0 - int_f2nd_1)[:, None], group)

        mix0["f2_ad"].add(w_ad, f2ad_0, group)
        mix1["f2_ad"].add(w_ad, f2ad_1, group)
        mix0["f1_ad"].add(w_ad, f1_0, group)
        mix1["f1_ad"].add(w_ad, f1_1, group)
        mix0["f2_nd"].add(w_nd, f2nd_0, group)
        mix1["f2_nd"].add(w_nd, f2nd_1, group)

    for name, acc in (("ad", acc_curve["t2_ad"]), ("nd", acc_curve["t2_nd"])):
        if acc.w < 1e-8 * b:
            raise VanishingStratum(name, acc.w)

    scalars: dict[str, float] = {}
    scalar_se: dict[str, float] = {}
    for k in ("rmst_t2_ad", "rmst_t1_ad", "rmst_t2_nd"):
        scalars[k] = float(acc_scalar[k].mean()[0])
        scalar_se[k] = float(acc_scalar[k].se()[0])
    scalars["rmst_gap_ad"] = scalars["rmst_t2_ad"] - scalars["rmst_t1_ad"]
    gap_groups = acc_scalar["rmst_t2_ad"].group_means()[:, 0] - \
        acc_scalar["rmst_t1_ad"].group_means()[:, 0]
    scalar_se["rmst_gap_ad"] = float(np.std(gap_groups, ddof=1) / math.sqrt(groups))

    def median_effect(key, eng_a, eng_b, mix_a, mix_b):
        m0 = _median_from_curve(eng_a.grid, mix_a[key].mean(), t_star)
        m1 = _median_from_curve(eng_b.grid, mix_b[key].mean(), t_star)
        g0 = mix_a[key].group_means()
        g1 = mix_b[key].group_means()
        diffs = np.array([
            _median_from_curve(eng_b.grid, g1[g], t_star)
            - _median_from_curve(eng_a.grid, g0[g], t_star)
            for g in range(groups)
        ])
        return m1 - m0, float(np.std(diffs, ddof=1) / math.sqrt(groups))

    scalars["median_t2_ad"], scalar_se["median_t2_ad"] = median_effect(
        "f2_ad", eng0, eng1, mix0, mix1)
    scalars["median_t1_ad"], scalar_se["median_t1_ad"] = median_effect(
        "f1_ad", eng0, eng1, mix0, mix1)
    scalars["median_t2_nd"], scalar_se["median_t2_nd"] = median_effect(
        "f2_nd", eng0, eng1, mix0, mix1)

    curves = {k: acc_curve[k].mean() for k in CURVE_EFFECTS}
    curve_se = {k: acc_curve[k].se() for k in CURVE_EFFECTS}

    keep = set(request.effects)
    scalars = {k: v for k, v in scalars.items() if k in keep}
    scalar_se = {k: v for k, v in scalar_se.items() if k in keep}
    curves = {k: v for k, v in curves.items() if k in keep}
    curve_se = {k: v for k, v in curve_se.items() if k in keep}

    return EffectResult(
        rho=request.frailty.rho,
        b=b,
        t_star=t_star,
        t_grid=t_grid,
        scalars=scalars,
        scalar_se=scalar_se,
        curves=curves,
        curve_se=curve_se,
        weight_sums={"ad": acc_curve["t2_ad"].w, "nd": acc_curve["t2_nd"].w},
        metadata={"frailty": request.frailty.as_dict(), "seed": seed},
    )


def rho_sweep(fit0: IdmFit, fit1: IdmFit, request: EffectRequest, rho_values,
              seed: int = 0) -> list[EffectResult]:
    """Re-evaluate the effects across cross-world correlations.

    The same seed drives every run, so all non-copula randomness (frailty
    uniforms, covariate resampling) is shared and differences isolate the
    correlation's influence.
    """
    rho_values = list(rho_values)
    if not rho_values:
        raise InvalidSpec("at least one correlation value is required")
    results = []
    for rho in rho_values:
        spec = replace(request.frailty, rho=float(rho))
        results.append(effects_prop4(fit0, fit1, replace(request, frailty=spec), seed))
    return results
