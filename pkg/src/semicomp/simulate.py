"""Synthetic semi-competing risks cohorts with two-world potential outcomes.

Each subject gets a frailty pair, covariates and an illness-death path per
world, simulated by inverse transform on the frailty- and covariate-scaled
cumulative hazards (healthy-state exit as competing transitions, then the
post-disease death hazard on the same time clock).  The generator emits both
the observed right-censored dataset and the full potential-outcome panel, so
population-level truths are available for every estimator check.

``world_coupling`` controls the joint law across worlds: ``"shared"`` reuses
one set of latent exponential draws for both worlds (worlds with identical
parameters and unit frailty correlation then coincide path by path), while
``"independent"`` draws the worlds independently given the frailty pair,
which is the structure the frailty identification formulas assume.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bounds import BoundsResult, StrataProportions, _bracket_values, strata_proportions
from .components import ComponentSet
from .data import Dataset, ObservedRecord
from .errors import InvalidSpec, ResimLimitExceeded
from .frailty import FrailtySpec, sample_pairs_from, substream
from .stepfun import StepFunction

__all__ = [
    "Hazard",
    "ArmLaw",
    "ScenarioConfig",
    "TwoWorldRecord",
    "TruthPanel",
    "PopulationTruth",
    "simulate",
    "population_functionals",
    "population_component_set",
    "write_truth_csv",
]

RESIM_LIMIT = 10_000
STRATA = ("ad", "nd", "dh", "dp")


# ---------------------------------------------------------------------------
# Baseline hazards


@dataclass(frozen=True)
class Hazard:
    """Weibull or piecewise-constant cumulative baseline hazard."""

    kind: str = "weibull"
    shape: float = 1.0
    scale: float = 1.0
    breaks: tuple[float, ...] = ()
    rates: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "weibull":
            if self.shape <= 0 or self.scale <= 0:
                raise InvalidSpec("Weibull shape and scale must be positive")
        elif self.kind == "piecewise":
            if len(self.rates) != len(self.breaks) + 1:
                raise InvalidSpec("piecewise hazard needs len(rates) == len(breaks) + 1")
            if any(r < 0 for r in self.rates) or self.rates[-1] <= 0:
                raise InvalidSpec("piecewise rates must be non-negative with a positive tail")
            if list(self.breaks) != sorted(self.breaks):
                raise InvalidSpec("piecewise breaks must be increasing")
        else:
            raise InvalidSpec(f"unknown hazard kind {self.kind!r}")

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "weibull":
            return (t / self.scale) ** self.shape
        edges = np.concatenate(([0.0], self.breaks, [np.inf]))
        rates = np.asarray(self.rates)
        out = np.zeros_like(t)
        for lo, hi, r in zip(edges[:-1], edges[1:], rates):
            out += r * np.clip(t - lo, 0.0, hi - lo)
        return out

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "weibull":
            return self.scale * v ** (1.0 / self.shape)
        edges = np.concatenate(([0.0], self.breaks))
        cum_at_edges = self.cumulative(edges)
        rates = np.asarray(self.rates)
        idx = np.searchsorted(cum_at_edges, v, side="right") - 1
        idx = np.clip(idx, 0, len(rates) - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = edges[idx] + (v - cum_at_edges[idx]) / rates[idx]
        return np.where(v <= 0, 0.0, out)

    def as_dict(self) -> dict:
        if self.kind == "weibull":
            return {"kind": "weibull", "shape": self.shape, "scale": self.scale}
        return {"kind": "piecewise", "breaks": list(self.breaks), "rates": list(self.rates)}

    @classmethod
    def from_dict(cls, d: dict) -> "Hazard":
        kind = d.get("kind", "weibull")
        if kind == "weibull":
            return cls(kind="weibull", shape=float(d["shape"]), scale=float(d["scale"]))
        return cls(kind="piecewise", breaks=tuple(d.get("breaks", ())),
                   rates=tuple(d["rates"]))


@dataclass(frozen=True)
class ArmLaw:
    h01: Hazard
    h02: Hazard
    h12: Hazard
    b01: tuple[float, ...] = ()
    b02: tuple[float, ...] = ()
    b12: tuple[float, ...] = ()

    def as_dict(self) -> dict:
        return {
            "h01": self.h01.as_dict(), "h02": self.h02.as_dict(), "h12": self.h12.as_dict(),
            "b01": list(self.b01), "b02": list(self.b02), "b12": list(self.b12),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArmLaw":
        return cls(
            h01=Hazard.from_dict(d["h01"]),
            h02=Hazard.from_dict(d["h02"]),
            h12=Hazard.from_dict(d["h12"]),
            b01=tuple(float(v) for v in d.get("b01", ())),
            b02=tuple(float(v) for v in d.get("b02", ())),
            b12=tuple(float(v) for v in d.get("b12", ())),
        )


# ---------------------------------------------------------------------------
# Scenario configuration


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    arm0: ArmLaw
    arm1: ArmLaw
    frailty: FrailtySpec = FrailtySpec("gamma-corr", 1.0, 1.0, 0.5)
    covariates: tuple[dict, ...] = ()
    n: int = 2000
    seed: int = 1
    p_treat: float = 0.5
    censoring_law: str = "exponential"
    censoring_target: float = 0.0
    enforce_order_preservation: bool = False
    resim_target: str = "dp"
    world_coupling: str = "shared"
    entry_max: float = 0.0
    z_from_covariate: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.censoring_target < 1.0:
            raise InvalidSpec("censoring target must lie in [0, 1)")
        if self.censoring_law not in ("exponential", "uniform", "none"):
            raise InvalidSpec(f"unknown censoring law {self.censoring_law!r}")
        if self.world_coupling not in ("shared", "independent"):
            raise InvalidSpec("world_coupling must be 'shared' or 'independent'")
        if self.resim_target not in ("dp", "dh"):
            raise InvalidSpec("resim_target must be 'dp' or 'dh'")
        if not 0.0 < self.p_treat < 1.0:
            raise InvalidSpec("p_treat must lie in (0, 1)")
        if self.entry_max < 0:
            raise InvalidSpec("entry_max must be non-negative")
        lens = {len(self.covariates)}
        for arm in (self.arm0, self.arm1):
            lens.update({len(arm.b01), len(arm.b02), len(arm.b12)})
        if len(lens) > 1:
            raise InvalidSpec("coefficient vectors must match the covariate count")
        if self.z_from_covariate is not None and not (
            0 <= self.z_from_covariate < len(self.covariates)
        ):
            raise InvalidSpec("z_from_covariate is out of range")

    @property
    def p(self) -> int:
        return len(self.covariates)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "seed": self.seed,
            "p_treat": self.p_treat,
            "world_coupling": self.world_coupling,
            "enforce_order_preservation": self.enforce_order_preservation,
            "resim_target": self.resim_target,
            "z_from_covariate": self.z_from_covariate,
            "entry_max": self.entry_max,
            "covariates": [dict(c) for c in self.covariates],
            "frailty": self.frailty.as_dict(),
            "censoring": {"law": self.censoring_law, "target": self.censoring_target},
            "arm0": self.arm0.as_dict(),
            "arm1": self.arm1.as_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        cens = d.get("censoring") or {}
        fr = d.get("frailty") or {}
        return cls(
            name=d.get("name", "scenario"),
            arm0=ArmLaw.from_dict(d["arm0"]),
            arm1=ArmLaw.from_dict(d["arm1"]),
            frailty=FrailtySpec(
                family=fr.get("family", "gamma-corr"),
                var0=float(fr.get("var0", 1.0)),
                var1=float(fr.get("var1", 1.0)),
                rho=float(fr.get("rho", 0.0)),
            ),
            covariates=tuple(d.get("covariates", ())),
            n=int(d.get("n", 2000)),
            seed=int(d.get("seed", 1)),
            p_treat=float(d.get("p_treat", 0.5)),
            censoring_law=cens.get("law", "none"),
            censoring_target=float(cens.get("target", 0.0)),
            enforce_order_preservation=bool(d.get("enforce_order_preservation", False)),
            resim_target=d.get("resim_target", "dp"),
            world_coupling=d.get("world_coupling", "shared"),
            entry_max=float(d.get("entry_max", 0.0)),
            z_from_covariate=d.get("z_from_covariate"),
        )

    @classmethod
    def from_toml(cls, path) -> "ScenarioConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def override(self, **kwargs) -> "ScenarioConfig":
        d = self.as_dict()
        for key, value in kwargs.items():
            if value is None:
                continue
            if key in ("censoring_law", "censoring_target"):
                d["censoring"][key.split("_")[1] if key.endswith("law") else "target"] = value
            elif key == "rho":
                d["frailty"]["rho"] = value
            else:
                d[key] = value
        return ScenarioConfig.from_dict(d)


# ---------------------------------------------------------------------------
# Panel containers


@dataclass(frozen=True)
class TwoWorldRecord:
    t1_0: float
    t2_0: float
    t1_1: float
    t2_1: float
    stratum: str
    observed: ObservedRecord


class TruthPanel:
    """Potential outcomes, frailties and strata for every simulated subject."""

    def __init__(self, t1, t2, gamma0, gamma1, x, a, censor, entry):
        self.t1_0, self.t1_1 = t1
        self.t2_0, self.t2_1 = t2
        self.gamma0, self.gamma1 = gamma0, gamma1
        self.x = x
        self.a = a
        self.censor = censor
        self.entry = entry
        d0 = np.isfinite(self.t1_0)
        d1 = np.isfinite(self.t1_1)
        self.stratum = np.where(
            d0 & d1, "ad", np.where(~d0 & ~d1, "nd", np.where(~d0 & d1, "dh", "dp"))
        )
        self.n = self.t1_0.size

    def potential(self, a: int):
        return (self.t1_1, self.t2_1) if a == 1 else (self.t1_0, self.t2_0)

    def strata_counts(self) -> dict:
        return {s: int(np.sum(self.stratum == s)) for s in STRATA}

    def record(self, i: int, observed: ObservedRecord) -> TwoWorldRecord:
        return TwoWorldRecord(
            float(self.t1_0[i]), float(self.t2_0[i]),
            float(self.t1_1[i]), float(self.t2_1[i]),
            str(self.stratum[i]), observed,
        )


class _LiveStreams:
    """All generator states of one simulation run, advancing across passes."""

    def __init__(self, seed: int):
        self.covariates = substream(seed, "covariates")
        self.common = substream(seed, "common")
        self.world0 = substream(seed, "world0")
        self.world1 = substream(seed, "world1")
        self.paths0 = substream(seed, "paths0")
        self.paths1 = substream(seed, "paths1")
        self.treatment = substream(seed, "treatment")
        self.censoring = substream(seed, "censoring")
        self.entry = substream(seed, "entry")


# ---------------------------------------------------------------------------
# Path simulation


def _draw_covariates(rng: np.random.Generator, laws, n: int) -> np.ndarray:
    cols = []
    for law in laws:
        kind = law.get("type", "bernoulli")
        if kind == "bernoulli":
            cols.append((rng.random(n) < float(law.get("p", 0.5))).astype(float))
        elif kind == "normal":
            cols.append(law.get("mean", 0.0) + law.get("sd", 1.0) * rng.standard_normal(n))
        else:
            raise InvalidSpec(f"unknown covariate law {kind!r}")
    if not cols:
        return np.empty((n, 0))
    return np.column_stack(cols)


def _world_path(arm: ArmLaw, gamma, x, e01, e02, e12):
    """Potential (disease, death) times from latent unit exponentials."""
    if x.shape[1]:
        r01 = gamma * np.exp(x @ np.asarray(arm.b01))
        r02 = gamma * np.exp(x @ np.asarray(arm.b02))
        r12 = gamma * np.exp(x @ np.asarray(arm.b12))
    else:
        r01 = r02 = r12 = gamma
    t01 = arm.h01.inverse(e01 / r01)
    t02 = arm.h02.inverse(e02 / r02)
    diseased = t01 <= t02
    t1 = np.where(diseased, t01, np.inf)
    death_after = arm.h12.inverse(arm.h12.cumulative(t01) + e12 / r12)
    t2 = np.where(diseased, death_after, t02)
    return t1, t2


def _simulate_potentials(config: ScenarioConfig, n: int, streams: _LiveStreams):
    """Covariates, frailties and both worlds' potential paths for n subjects."""
    x = _draw_covariates(streams.covariates, config.covariates, n)
    gamma0, gamma1 = sample_pairs_from(
        config.frailty, n, streams.common, streams.world0, streams.world1
    )

    e0 = streams.paths0.exponential(size=(3, n))
    if config.world_coupling == "shared":
        e1 = e0
    else:
        e1 = streams.paths1.exponential(size=(3, n))

    t1_0, t2_0 = _world_path(config.arm0, gamma0, x, e0[0], e0[1], e0[2])
    t1_1, t2_1 = _world_path(config.arm1, gamma1, x, e1[0], e1[1], e1[2])

    if config.enforce_order_preservation:
        t1_0, t2_0, t1_1, t2_1 = _enforce_order(
            config, x, gamma0, gamma1, t1_0, t2_0, t1_1, t2_1, streams
        )
    return x, gamma0, gamma1, (t1_0, t1_1), (t2_0, t2_1)


def _enforce_order(config, x, gamma0, gamma1, t1_0, t2_0, t1_1, t2_1, streams):
    """Re-simulate the offending world until the target stratum is empty."""
    t1_0, t2_0, t1_1, t2_1 = (arr.copy() for arr in (t1_0, t2_0, t1_1, t2_1))
    attempts = np.zeros(t1_0.size, dtype=np.int64)
    while True:
        d0 = np.isfinite(t1_0)
        d1 = np.isfinite(t1_1)
        bad = (d0 & ~d1) if config.resim_target == "dp" else (~d0 & d1)
        idx = np.flatnonzero(bad)
        if idx.size == 0:
            return t1_0, t2_0, t1_1, t2_1
        attempts[idx] += 1
        over = attempts[idx] > RESIM_LIMIT
        if np.any(over):
            raise ResimLimitExceeded(int(idx[over][0]), RESIM_LIMIT)
        if config.resim_target == "dp":
            e = streams.paths1.exponential(size=(3, idx.size))
            nt1, nt2 = _world_path(config.arm1, gamma1[idx], x[idx], e[0], e[1], e[2])
            t1_1[idx], t2_1[idx] = nt1, nt2
        else:
            e = streams.paths0.exponential(size=(3, idx.size))
            nt1, nt2 = _world_path(config.arm0, gamma0[idx], x[idx], e[0], e[1], e[2])
            t1_0[idx], t2_0[idx] = nt1, nt2


def _calibrate_censoring(law: str, target: float, horizon: np.ndarray) -> float:
    """Scale parameter hitting the pre-death censoring fraction on follow-up
    residuals (time from entry to potential death)."""
    if target <= 0.0:
        return math.inf

    if law == "exponential":
        def frac(rate):
            return float(np.mean(-np.expm1(-rate * horizon))) - target
        hi = 1e-6
        while frac(hi) < 0 and hi < 1e12:
            hi *= 10
        return float(optimize.brentq(frac, 1e-14, hi, xtol=1e-14))

    def frac_u(u):
        return float(np.mean(np.clip(horizon / u, 0.0, 1.0))) - target
    hi = lo = float(np.max(horizon)) * 2
    while frac_u(hi) > 0 and hi < 1e12:
        hi *= 10
    while frac_u(lo) < 0 and lo > 1e-12:
        lo /= 10
    return float(optimize.brentq(frac_u, lo, hi, xtol=1e-12))


def _format_z(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return format(value, ".17g")


def simulate(config: ScenarioConfig) -> tuple[Dataset, TruthPanel]:
    """Generate the observed dataset and its potential-outcome truth panel."""
    n = config.n
    streams = _LiveStreams(config.seed)

    x, g0, g1, t1s, t2s = _simulate_potentials(config, n, streams)
    a = (streams.treatment.random(n) < config.p_treat).astype(np.int64)
    entry = np.zeros(n)
    if config.entry_max > 0:
        entry = streams.entry.random(n) * config.entry_max
        # Delayed entry: subjects are observed only when recruited before any
        # event in their assigned world.  Rejected candidates are replaced by
        # completely fresh subjects, which samples the truncated law exactly.
        while True:
            t1a = np.where(a == 1, t1s[1], t1s[0])
            t2a = np.where(a == 1, t2s[1], t2s[0])
            bad = entry > np.minimum(t1a, t2a)
            idx = np.flatnonzero(bad)
            if idx.size == 0:
                break
            xb, g0b, g1b, t1b, t2b = _simulate_potentials(config, idx.size, streams)
            x[idx] = xb
            g0[idx], g1[idx] = g0b, g1b
            for arr, new in zip(t1s + t2s, t1b + t2b):
                arr[idx] = new
            a[idx] = (streams.treatment.random(idx.size) < config.p_treat).astype(np.int64)
            entry[idx] = streams.entry.random(idx.size) * config.entry_max

    t2_pot = np.where(a == 1, t2s[1], t2s[0])
    if config.censoring_law == "none" or config.censoring_target <= 0:
        censor = np.full(n, np.inf)
    else:
        # Censoring runs on the follow-up clock from entry, so it never
        # precedes recruitment.
        residual = t2_pot - entry
        scale = _calibrate_censoring(config.censoring_law, config.censoring_target, residual)
        if config.censoring_law == "exponential":
            censor = entry + streams.censoring.exponential(1.0 / scale, size=n)
        else:
            censor = entry + streams.censoring.random(n) * scale

    return _assemble(config, x, g0, g1, t1s, t2s, a, censor, entry)


def _assemble(config, x, g0, g1, t1s, t2s, a, censor, entry):
    n = a.size
    t1_pot = np.where(a == 1, t1s[1], t1s[0])
    t2_pot = np.where(a == 1, t2s[1], t2s[0])
    t2_obs = np.minimum(t2_pot, censor)
    d2 = (t2_pot <= censor).astype(int)
    t1_obs = np.minimum(t1_pot, t2_obs)
    d1 = (t1_pot <= t2_obs).astype(int)

    records = []
    for i in range(n):
        z = None
        if config.z_from_covariate is not None:
            z = _format_z(x[i, config.z_from_covariate])
        records.append(ObservedRecord(
            id=str(i),
            a=int(a[i]),
            t1_obs=float(t1_obs[i]),
            delta1=int(d1[i]),
            t2_obs=float(t2_obs[i]),
            delta2=int(d2[i]),
            entry=float(entry[i]),
            z=z,
            x=tuple(float(v) for v in x[i]),
        ))
    dataset = Dataset(tuple(records))
    panel = TruthPanel(t1s, t2s, g0, g1, x, a, censor, entry)
    return dataset, panel


def write_truth_csv(panel: TruthPanel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        p = panel.x.shape[1]
        w.writerow(["id", "a", "t1_0", "t2_0", "t1_1", "t2_1", "gamma0", "gamma1", "stratum"]
                   + [f"x{i + 1}" for i in range(p)])
        for i in range(panel.n):
            w.writerow(
                [i, int(panel.a[i])]
                + [format(v, ".17g") for v in (
                    panel.t1_0[i], panel.t2_0[i], panel.t1_1[i], panel.t2_1[i],
                    panel.gamma0[i], panel.gamma1[i])]
                + [panel.stratum[i]]
                + [format(v, ".17g") for v in panel.x[i]]
            )


# ---------------------------------------------------------------------------
# Population-level truths


def _ecdf_on(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    finite = np.sort(values[np.isfinite(values)])
    return np.searchsorted(finite, grid, side="right") / values.size


def _surv_step(values: np.ndarray, grid: np.ndarray) -> StepFunction:
    return StepFunction(grid, 1.0 - _ecdf_on(values, grid), 1.0)


def _median(values: np.ndarray) -> float:
    """Empirical median treating missing-disease sentinels as +inf mass."""
    finite = np.sort(values[np.isfinite(values)])
    k = math.ceil(0.5 * values.size)
    if finite.size < k:
        return math.inf
    return float(finite[k - 1])


def population_component_set(panel: TruthPanel, a: int, t_grid: np.ndarray,
                             mask: np.ndarray | None = None) -> ComponentSet:
    """Exact identified components of world ``a`` from the truth panel."""
    t_grid = np.asarray(t_grid, dtype=float)
    t1, t2 = panel.potential(a)
    if mask is not None:
        t1, t2 = t1[mask], t2[mask]
    m = t1.size
    diseased = np.isfinite(t1)
    eta = float(np.mean(diseased))

    f2 = _ecdf_on(t2, t_grid)
    f1 = _ecdf_on(t1, t_grid)
    t2_dis_sorted = np.sort(t2[diseased])
    num_le = np.searchsorted(t2_dis_sorted, t_grid, side="right") / m
    with np.errstate(invalid="ignore", divide="ignore"):
        eta_by_t = np.where(f2 > 0, num_le / np.where(f2 > 0, f2, 1.0), 0.0)

    s1_gd = s2_gd = s2_gnd = None
    if eta > 0:
        s1_gd = _surv_step(t1[diseased], t_grid)
        s2_gd = _surv_step(t2[diseased], t_grid)
    if eta < 1:
        s2_gnd = _surv_step(t2[~diseased], t_grid)

    return ComponentSet(
        arm=a,
        eta=eta,
        eta_by_t=StepFunction(t_grid, eta_by_t, 0.0),
        s1=StepFunction(t_grid, 1.0 - f1, 1.0),
        s2=StepFunction(t_grid, 1.0 - f2, 1.0),
        f1=StepFunction(t_grid, f1, 0.0),
        support_end=float(np.max(t2)),
        n=m,
        n_deaths=m,
        bandwidth=0.0,
        tail_mass=0.0,
        _s1_given_disease=s1_gd,
        _s2_given_disease=s2_gd,
        _s2_given_no_disease=s2_gnd,
    )


@dataclass(frozen=True)
class PopulationTruth:
    """Ground-truth effects and components from a large uncensored panel."""

    panel: TruthPanel
    t_grid: np.ndarray
    t_star: float
    strata: StrataProportions
    strata_counts: dict
    effect_curves: dict[str, np.ndarray]
    rmst_effects: dict[str, float]
    median_effects: dict[str, float]
    mc_size: int
    config: ScenarioConfig
    mc_error: float = field(default=0.0)

    def component_set(self, a: int, z: str | None = None) -> ComponentSet:
        mask = None
        if z is not None:
            zi = self.config.z_from_covariate
            if zi is None:
                raise InvalidSpec("scenario carries no z covariate")
            mask = np.array([_format_z(v) == z for v in self.panel.x[:, zi]])
        return population_component_set(self.panel, a, self.t_grid, mask)

    def z_levels(self) -> list[str]:
        zi = self.config.z_from_covariate
        if zi is None:
            return []
        return sorted({_format_z(v) for v in self.panel.x[:, zi]})

    def bounds(self, adjusted: bool = False) -> BoundsResult:
        """Bound envelopes evaluated on the exact population functionals."""
        t = self.t_grid
        if not adjusted:
            c0 = self.component_set(0)
            c1 = self.component_set(1)
            br = _bracket_values(c0, c1, t)
            return BoundsResult(
                t_grid=t,
                lower={k: v[0] for k, v in br.items()},
                upper={k: v[1] for k, v in br.items()},
                variant="unadj",
                support_end=float("inf"),
                beyond_support=np.zeros(t.size, dtype=bool),
                strata=strata_proportions(c0.eta, c1.eta),
            )
        levels = self.z_levels()
        if not levels:
            raise InvalidSpec("adjusted population bounds require a z covariate")
        zi = self.config.z_from_covariate
        zvals = np.array([_format_z(v) for v in self.panel.x[:, zi]])
        lower = {k: np.zeros(t.size) for k in ("t2_ad", "t2_nd", "t1_ad")}
        upper = {k: np.zeros(t.size) for k in ("t2_ad", "t2_nd", "t1_ad")}
        w_ad, w_nd, brackets = [], [], []
        for z in levels:
            mask = zvals == z
            pz = float(np.mean(mask))
            c0z = population_component_set(self.panel, 0, t, mask)
            c1z = population_component_set(self.panel, 1, t, mask)
            w_ad.append(pz * c0z.eta)
            w_nd.append(pz * (1.0 - c1z.eta))
            brackets.append(_bracket_values(c0z, c1z, t))
        w_ad = np.asarray(w_ad) / np.sum(w_ad)
        w_nd = np.asarray(w_nd) / np.sum(w_nd)
        for br, wa, wn in zip(brackets, w_ad, w_nd):
            for effect in ("t2_ad", "t1_ad"):
                lower[effect] += wa * br[effect][0]
                upper[effect] += wa * br[effect][1]
            lower["t2_nd"] += wn * br["t2_nd"][0]
            upper["t2_nd"] += wn * br["t2_nd"][1]
        return BoundsResult(
            t_grid=t, lower=lower, upper=upper, variant="adj",
            support_end=float("inf"), beyond_support=np.zeros(t.size, dtype=bool),
        )


def population_functionals(config: ScenarioConfig, t_grid, t_star: float,
                           mc_size: int = 1_000_000, seed: int | None = None) -> PopulationTruth:
    """Large-sample two-world Monte Carlo truth, uncensored and untruncated."""
    t_grid = np.asarray(t_grid, dtype=float)
    if seed is None:
        # Stay decoupled from the data draw that shares config.seed.
        seed = int(np.random.SeedSequence(config.seed, spawn_key=(1000,)).generate_state(1)[0])
    streams = _LiveStreams(seed)
    x, g0, g1, t1s, t2s = _simulate_potentials(config, mc_size, streams)
    a = np.zeros(mc_size, dtype=np.int64)
    panel = TruthPanel(t1s, t2s, g0, g1, x, a, np.full(mc_size, np.inf), np.zeros(mc_size))

    ad = panel.stratum == "ad"
    nd = panel.stratum == "nd"
    counts = panel.strata_counts()

    curves = {}
    if np.any(ad):
        curves["t2_ad"] = _ecdf_on(panel.t2_1[ad], t_grid) - _ecdf_on(panel.t2_0[ad], t_grid)
        curves["t1_ad"] = _ecdf_on(panel.t1_1[ad], t_grid) - _ecdf_on(panel.t1_0[ad], t_grid)
    if np.any(nd):
        curves["t2_nd"] = _ecdf_on(panel.t2_1[nd], t_grid) - _ecdf_on(panel.t2_0[nd], t_grid)

    rmst_eff, med_eff = {}, {}
    if np.any(ad):
        m21 = np.minimum(panel.t2_1[ad], t_star)
        m20 = np.minimum(panel.t2_0[ad], t_star)
        m11 = np.minimum(panel.t1_1[ad], t_star)
        m10 = np.minimum(panel.t1_0[ad], t_star)
        rmst_eff["rmst_t2_ad"] = float(np.mean(m21 - m20))
        rmst_eff["rmst_t1_ad"] = float(np.mean(m11 - m10))
        rmst_eff["rmst_gap_ad"] = float(np.mean((m21 - m11) - (m20 - m10)))
        med_eff["median_t2_ad"] = min(_median(panel.t2_1[ad]), t_star) - min(
            _median(panel.t2_0[ad]), t_star)
        med_eff["median_t1_ad"] = min(_median(panel.t1_1[ad]), t_star) - min(
            _median(panel.t1_0[ad]), t_star)
    if np.any(nd):
        m21 = np.minimum(panel.t2_1[nd], t_star)
        m20 = np.minimum(panel.t2_0[nd], t_star)
        rmst_eff["rmst_t2_nd"] = float(np.mean(m21 - m20))
        med_eff["median_t2_nd"] = min(_median(panel.t2_1[nd]), t_star) - min(
            _median(panel.t2_0[nd]), t_star)

    eta0 = float(np.mean(np.isfinite(panel.t1_0)))
    eta1 = float(np.mean(np.isfinite(panel.t1_1)))
    return PopulationTruth(
        panel=panel,
        t_grid=t_grid,
        t_star=t_star,
        strata=strata_proportions(eta0, eta1),
        strata_counts=counts,
        effect_curves=curves,
        rmst_effects=rmst_eff,
        median_effects=med_eff,
        mc_size=mc_size,
        config=config,
        mc_error=1.0 / math.sqrt(mc_size),
    )
