"""Semi-parametric gamma-frailty illness-death model fit by EM, per arm.

Three proportional-hazards transitions (healthy to diseased, healthy to dead,
diseased to dead on the same time clock) share one gamma frailty per subject.
The E-step exploits gamma conjugacy; the M-step refits each transition by a
frailty-weighted partial likelihood with Breslow baseline increments, and the
frailty variance by a one-dimensional search of its expected complete-data
term.  The observed-data log-likelihood is tracked every iteration and is
non-decreasing up to floating-point resolution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .data import ArmView, Dataset
from .errors import DegenerateTransition, NonFiniteLikelihood, NotConverged
from .stepfun import StepFunction

__all__ = [
    "IdmModelSpec",
    "IdmFit",
    "FrailtyPosterior",
    "risk_score",
    "log_likelihood",
    "e_step",
    "em_fit",
    "combine_frailty_variances",
    "fit_to_json",
    "fit_from_json",
]

TRANSITIONS = ("01", "02", "12")
THETA_FLOOR = 1e-6
THETA_CEIL = 50.0
_THETA_ZERO = 1e-8


@dataclass(frozen=True)
class IdmModelSpec:
    p: int = 0
    frailty_family: str = "gamma"
    per_arm: bool = True

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("covariate dimension must be non-negative")
        if self.frailty_family != "gamma":
            raise ValueError("only gamma frailties are supported for fitting")


@dataclass(frozen=True)
class IdmFit:
    arm: int
    theta: float
    coefs: dict[str, np.ndarray]
    baselines: dict[str, StepFunction]
    converged: bool
    iterations: int
    final_loglik: float
    tol: float
    loglik_history: np.ndarray
    degenerate: tuple[str, ...]
    n: int
    n_events: dict[str, int]

    def cumhaz(self, transition: str, t) -> np.ndarray:
        base = self.baselines[transition]
        if base.knots.size == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return base(t)


@dataclass(frozen=True)
class FrailtyPosterior:
    shape: np.ndarray
    rate: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.shape / self.rate

    @property
    def log_mean(self) -> np.ndarray:
        return special.digamma(self.shape) - np.log(self.rate)


def e_step(n_events: np.ndarray, s: np.ndarray, theta: float) -> FrailtyPosterior:
    """Gamma-conjugate frailty posterior given event counts and risk scores."""
    inv = 1.0 / theta
    return FrailtyPosterior(shape=inv + n_events, rate=inv + s)


def risk_score(record, fit: IdmFit) -> float:
    """Total frailty-scaled cumulative-hazard exposure of one subject."""
    x = np.asarray(record.x, dtype=float)
    lin = {k: float(x @ fit.coefs[k]) if x.size else 0.0 for k in TRANSITIONS}
    s = math.exp(lin["01"]) * float(fit.cumhaz("01", record.t1_obs))
    s += math.exp(lin["02"]) * float(fit.cumhaz("02", record.t1_obs))
    if record.delta1 == 1:
        gap = float(fit.cumhaz("12", record.t2_obs)) - float(fit.cumhaz("12", record.t1_obs))
        s += math.exp(lin["12"]) * gap
    return s


def _log_frailty_factor(n_events: int, s: float, theta: float) -> float:
    """Log of the likelihood's transform factor for one subject."""
    if theta <= _THETA_ZERO:
        return -s
    out = -(1.0 / theta + n_events) * math.log1p(theta * s)
    if n_events == 2:
        out += math.log1p(theta)
    return out


# ---------------------------------------------------------------------------
# Transition-level machinery


class _Transition:
    """Sorted risk-set structures for one transition, fixed per dataset."""

    def __init__(self, name: str, time, event, entry, x):
        self.name = name
        self.time = np.asarray(time, dtype=float)
        self.event = np.asarray(event, dtype=np.int64)
        self.entry = np.asarray(entry, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.n = self.time.size
        self.p = self.x.shape[1]

        ev = self.event == 1
        self.event_mask = ev
        self.times_k = np.unique(self.time[ev]) if np.any(ev) else np.empty(0)
        self.K = self.times_k.size
        self.d = np.zeros(self.K)
        if self.K:
            np.add.at(self.d, np.searchsorted(self.times_k, self.time[ev]), 1.0)

        # At risk for the k-th event time iff entry < t_k <= time; a subject
        # whose entry equals its own event time stays in its own risk set.
        self.a_idx = np.searchsorted(self.times_k, self.entry, side="right")
        self.b_idx = np.searchsorted(self.times_k, self.time, side="right") - 1
        fix = ev & (self.a_idx > self.b_idx) & (self.b_idx >= 0)
        self.a_idx[fix] = self.b_idx[fix]
        self.in_risk = self.a_idx <= self.b_idx

        self.event_k = np.searchsorted(self.times_k, self.time[ev]) if self.K else np.empty(0, int)
        self.sum_x_events = self.x[ev].sum(axis=0) if self.p else np.zeros(0)

    def risk_sum(self, v: np.ndarray) -> np.ndarray:
        """Per-event-time sums of ``v`` over the risk sets (difference trick)."""
        ok = self.in_risk
        lo = np.bincount(self.a_idx[ok], weights=v[ok], minlength=self.K + 1)
        hi = np.bincount(self.b_idx[ok] + 1, weights=v[ok], minlength=self.K + 1)
        return np.cumsum(lo[: self.K] - hi[: self.K])

    def partial_loglik(self, beta: np.ndarray, w: np.ndarray) -> float:
        v = self._hazard_scale(beta, w)
        s0 = self.risk_sum(v)
        lin = float(self.sum_x_events @ beta) if self.p else 0.0
        return lin - float(self.d @ np.log(s0))

    def _hazard_scale(self, beta, w):
        if self.p:
            return w * np.exp(np.clip(self.x @ beta, -700, 700))
        return w

    def newton_fit(self, beta: np.ndarray, w: np.ndarray,
                   max_iter: int = 40, tol: float = 1e-10):
        """Maximize the weighted partial likelihood; return (beta, increments)."""
        if self.K == 0:
            return beta, np.empty(0)
        if self.p == 0:
            s0 = self.risk_sum(w)
            return beta, self.d / s0

        cur = self.partial_loglik(beta, w)
        for _ in range(max_iter):
            v = self._hazard_scale(beta, w)
            s0 = self.risk_sum(v)
            s1 = np.column_stack([self.risk_sum(v * self.x[:, j]) for j in range(self.p)])
            mean_x = s1 / s0[:, None]
            score = self.sum_x_events - self.d @ mean_x
            info = np.zeros((self.p, self.p))
            for j in range(self.p):
                for l in range(j, self.p):
                    s2 = self.risk_sum(v * self.x[:, j] * self.x[:, l])
                    term = float(self.d @ (s2 / s0 - mean_x[:, j] * mean_x[:, l]))
                    info[j, l] = info[l, j] = term
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                step = score
            norm = float(np.linalg.norm(step))
            if norm > 5.0:
                step *= 5.0 / norm
            scale = 1.0
            for _ in range(30):
                cand = beta + scale * step
                new = self.partial_loglik(cand, w)
                if new >= cur - 1e-13:
                    break
                scale *= 0.5
            else:
                break
            improved = new - cur
            beta, cur = cand, new
            if abs(improved) < tol and float(np.max(np.abs(score))) < 1e-8:
                break

        v = self._hazard_scale(beta, w)
        s0 = self.risk_sum(v)
        return beta, self.d / s0


def _arm_transitions(arm: ArmView):
    x = arm.x
    t01 = _Transition("01", arm.t1, arm.d1, arm.entry, x)
    t02 = _Transition("02", arm.t1, (1 - arm.d1) * arm.d2, arm.entry, x)
    dis = arm.d1 == 1
    t12 = _Transition("12", arm.t2[dis], arm.d2[dis], arm.t1[dis], x[dis]) if np.any(dis) else \
        _Transition("12", np.empty(0), np.empty(0, int), np.empty(0), np.empty((0, x.shape[1])))
    return {"01": t01, "02": t02, "12": t12}, dis


class _ArmData:
    """One arm's arrays plus per-transition cumulative-exposure gathers."""

    def __init__(self, dataset: Dataset, a: int):
        self.arm = dataset.arm(a)
        self.a = a
        self.n = self.arm.n
        self.x = self.arm.x
        self.p = self.x.shape[1]
        self.n_events = self.arm.d1 + self.arm.d2
        self.trans, self.diseased = _arm_transitions(self.arm)
        self.use_entry = bool(np.any(self.arm.entry > 0))
        tr01, tr02, tr12 = self.trans["01"], self.trans["02"], self.trans["12"]
        # cumulative baseline at each subject's relevant times: index of the
        # last event time <= t, per transition
        self.idx01_t1 = np.searchsorted(tr01.times_k, self.arm.t1, side="right") - 1
        self.idx02_t1 = np.searchsorted(tr02.times_k, self.arm.t1, side="right") - 1
        self.idx01_entry = np.searchsorted(tr01.times_k, self.arm.entry, side="right") - 1
        self.idx02_entry = np.searchsorted(tr02.times_k, self.arm.entry, side="right") - 1
        dis = self.diseased
        self.idx12_t2 = np.searchsorted(tr12.times_k, self.arm.t2[dis], side="right") - 1
        self.idx12_t1 = np.searchsorted(tr12.times_k, self.arm.t1[dis], side="right") - 1
        # each event subject's own jump index
        self.jump01 = np.searchsorted(tr01.times_k, self.arm.t1[self.arm.d1 == 1])
        self.jump02 = np.searchsorted(tr02.times_k, self.arm.t1[(self.arm.d1 == 0) & (self.arm.d2 == 1)])
        self.jump12 = np.searchsorted(tr12.times_k, self.arm.t2[dis][self.arm.d2[dis] == 1])

    def linear_predictors(self, coefs):
        out = {}
        for k in TRANSITIONS:
            if self.p:
                out[k] = np.exp(np.clip(self.x @ coefs[k], -700, 700))
            else:
                out[k] = np.ones(self.n)
        return out

    def risk_scores(self, coefs, increments) -> np.ndarray:
        """Exposure from entry to the observed times under current parameters."""
        cums = {k: np.concatenate(([0.0], np.cumsum(increments[k]))) for k in TRANSITIONS}
        e = self.linear_predictors(coefs)
        s = e["01"] * (cums["01"][self.idx01_t1 + 1] - cums["01"][self.idx01_entry + 1])
        s += e["02"] * (cums["02"][self.idx02_t1 + 1] - cums["02"][self.idx02_entry + 1])
        if np.any(self.diseased):
            gap = cums["12"][self.idx12_t2 + 1] - cums["12"][self.idx12_t1 + 1]
            s[self.diseased] += e["12"][self.diseased] * gap
        return s

    def initial_scores_from(self, fit: IdmFit, coefs) -> np.ndarray:
        """Exposure using warm-start baselines defined on foreign knots."""
        e = self.linear_predictors(coefs)
        s = e["01"] * (fit.cumhaz("01", self.arm.t1) - fit.cumhaz("01", self.arm.entry))
        s += e["02"] * (fit.cumhaz("02", self.arm.t1) - fit.cumhaz("02", self.arm.entry))
        if np.any(self.diseased):
            dis = self.diseased
            gap = fit.cumhaz("12", self.arm.t2[dis]) - fit.cumhaz("12", self.arm.t1[dis])
            s[dis] += e["12"][dis] * gap
        return s

    def observed_loglik(self, coefs, increments, s, theta) -> float:
        """Observed-data log-likelihood with Breslow jump hazards (fsum)."""
        terms = []
        if self.p:
            lin = {k: self.x @ coefs[k] for k in TRANSITIONS}
        else:
            lin = {k: np.zeros(self.n) for k in TRANSITIONS}
        d1, d2 = self.arm.d1, self.arm.d2
        log_res = np.zeros(self.n)
        mask01 = d1 == 1
        mask02 = (d1 == 0) & (d2 == 1)
        if np.any(mask01):
            log_res[mask01] += np.log(increments["01"][self.jump01]) + lin["01"][mask01]
        if np.any(mask02):
            log_res[mask02] += np.log(increments["02"][self.jump02]) + lin["02"][mask02]
        dis = self.diseased
        if np.any(dis):
            mask12 = np.zeros(self.n, dtype=bool)
            mask12[dis] = d2[dis] == 1
            vals = np.log(increments["12"][self.jump12]) + lin["12"][mask12]
            log_res[mask12] += vals
        ne = self.n_events
        for i in range(self.n):
            terms.append(log_res[i] + _log_frailty_factor(int(ne[i]), float(s[i]), theta))
        return math.fsum(terms)


def _theta_update(w: np.ndarray, elog: np.ndarray, fixed: float | None) -> float:
    """Maximize the gamma frailty term of the expected complete-data loglik."""
    if fixed is not None:
        return fixed
    n = w.size
    stat = float(np.sum(elog - w))

    def neg(theta: float) -> float:
        inv = 1.0 / theta
        return -(n * (-special.gammaln(inv) - inv * math.log(theta)) + inv * stat)

    res = optimize.minimize_scalar(
        neg, bounds=(THETA_FLOOR, THETA_CEIL), method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x)


def em_fit(dataset: Dataset, a: int, spec: IdmModelSpec | None = None,
           init: IdmFit | None = None, tol: float = 1e-6, max_iter: int = 500,
           fix_theta: float | None = None, check_monotone: bool = False) -> IdmFit:
    """Fit the frailty illness-death model for one arm.

    ``init`` warm-starts from a previous fit (its baselines are read as step
    functions on this dataset's times).  ``fix_theta`` pins the frailty
    variance, ``fix_theta=0`` reducing the model to three independent
    proportional-hazards fits.  With ``check_monotone`` every iteration
    asserts the observed log-likelihood did not decrease beyond 1e-10.
    """
    data = _ArmData(dataset, a)
    if spec is not None and spec.p != data.p:
        raise ValueError(f"model spec declares p={spec.p} but data carries p={data.p}")

    degenerate = tuple(k for k in TRANSITIONS if data.trans[k].K == 0)
    if len(degenerate) == len(TRANSITIONS):
        raise DegenerateTransition("01/02/12", "no events on any transition")

    coefs = {k: np.zeros(data.p) for k in TRANSITIONS}
    if init is not None:
        coefs = {k: np.asarray(init.coefs[k], dtype=float).copy() for k in TRANSITIONS}
        theta = init.theta if fix_theta is None else fix_theta
        s = data.initial_scores_from(init, coefs)
        increments = None
    else:
        theta = 0.5 if fix_theta is None else fix_theta
        increments = {k: data.trans[k].newton_fit(coefs[k], np.ones(data.n if k != "12" else data.trans[k].n))[1]
                      for k in TRANSITIONS}
        s = data.risk_scores(coefs, increments)

    history = []
    prev = -math.inf
    converged = False
    iterations = 0
    w_full = np.ones(data.n)

    for it in range(1, max_iter + 1):
        iterations = it
        # E-step
        if theta <= _THETA_ZERO:
            w_full = np.ones(data.n)
            elog = np.zeros(data.n)
        else:
            post = e_step(data.n_events, s, theta)
            w_full = post.mean
            elog = post.log_mean

        # M-step: transitions, then the frailty variance
        increments = {}
        for k in TRANSITIONS:
            tr = data.trans[k]
            w_k = w_full[data.diseased] if k == "12" else w_full
            coefs[k], increments[k] = tr.newton_fit(coefs[k], w_k)
        theta = _theta_update(w_full, elog, fix_theta)

        s = data.risk_scores(coefs, increments)
        ll = data.observed_loglik(coefs, increments, s, theta)
        if not math.isfinite(ll):
            raise NonFiniteLikelihood("<arm loglik>")
        history.append(ll)
        if check_monotone and len(history) > 1 and ll < prev - 1e-10:
            raise AssertionError(
                f"observed log-likelihood decreased at iteration {it}: {prev} -> {ll}"
            )
        if len(history) > 1 and abs(ll - prev) < tol:
            converged = True
            prev = ll
            break
        prev = ll

    if not converged:
        last = abs(history[-1] - history[-2]) if len(history) > 1 else math.inf
        raise NotConverged(max_iter, last)

    baselines = {}
    for k in TRANSITIONS:
        tr = data.trans[k]
        if tr.K == 0:
            baselines[k] = StepFunction(np.empty(0), np.empty(0), 0.0)
        else:
            baselines[k] = StepFunction(tr.times_k, np.cumsum(increments[k]), 0.0)

    return IdmFit(
        arm=a,
        theta=float(theta),
        coefs={k: np.asarray(v, dtype=float) for k, v in coefs.items()},
        baselines=baselines,
        converged=converged,
        iterations=iterations,
        final_loglik=float(prev),
        tol=tol,
        loglik_history=np.asarray(history),
        degenerate=degenerate,
        n=data.n,
        n_events={k: int(data.trans[k].d.sum()) for k in TRANSITIONS},
    )


def log_likelihood(dataset: Dataset, a: int, fit: IdmFit) -> float:
    """Observed-data log-likelihood of ``fit`` on an arm of ``dataset``.

    Baseline hazards are read as jump measures; an event time carrying no
    baseline jump has zero likelihood, reported via ``NonFiniteLikelihood``
    with the offending subject.
    """
    arm = dataset.arm(a)
    terms = []
    for i in range(arm.n):
        rec_terms = 0.0
        x = arm.x[i]
        lin = {k: float(x @ fit.coefs[k]) if x.size else 0.0 for k in TRANSITIONS}
        pieces = []
        if arm.d1[i] == 1:
            pieces.append(("01", arm.t1[i], lin["01"]))
        if arm.d1[i] == 0 and arm.d2[i] == 1:
            pieces.append(("02", arm.t1[i], lin["02"]))
        if arm.d1[i] == 1 and arm.d2[i] == 1:
            pieces.append(("12", arm.t2[i], lin["12"]))
        for key, t, lp in pieces:
            base = fit.baselines[key]
            pos = np.searchsorted(base.knots, t)
            jump = 0.0
            if pos < base.knots.size and base.knots[pos] == t:
                prev_val = base.values[pos - 1] if pos > 0 else 0.0
                jump = base.values[pos] - prev_val
            if jump <= 0:
                raise NonFiniteLikelihood(arm.ids[i])
            rec_terms += math.log(jump) + lp
        s_i = _risk_score_at(arm, i, fit)
        rec_terms += _log_frailty_factor(int(arm.d1[i] + arm.d2[i]), s_i, fit.theta)
        if not math.isfinite(rec_terms):
            raise NonFiniteLikelihood(arm.ids[i])
        terms.append(rec_terms)
    return math.fsum(terms)


def _risk_score_at(arm: ArmView, i: int, fit: IdmFit) -> float:
    x = arm.x[i]
    lin = {k: float(x @ fit.coefs[k]) if x.size else 0.0 for k in TRANSITIONS}
    s = math.exp(lin["01"]) * (float(fit.cumhaz("01", arm.t1[i])) - float(fit.cumhaz("01", arm.entry[i])))
    s += math.exp(lin["02"]) * (float(fit.cumhaz("02", arm.t1[i])) - float(fit.cumhaz("02", arm.entry[i])))
    if arm.d1[i] == 1:
        s += math.exp(lin["12"]) * (
            float(fit.cumhaz("12", arm.t2[i])) - float(fit.cumhaz("12", arm.t1[i]))
        )
    return s


def combine_frailty_variances(fit0: IdmFit, fit1: IdmFit, rule: str = "pooled"):
    """Event-count-weighted pooling of the two arms' frailty variances."""
    if rule == "separate":
        return fit0.theta, fit1.theta
    if rule != "pooled":
        raise ValueError("rule must be 'pooled' or 'separate'")
    w0 = sum(fit0.n_events.values())
    w1 = sum(fit1.n_events.values())
    if w0 + w1 == 0:
        return 0.5 * (fit0.theta + fit1.theta)
    return (w0 * fit0.theta + w1 * fit1.theta) / (w0 + w1)


# ---------------------------------------------------------------------------
# Serialization


def fit_to_json(fit: IdmFit) -> str:
    payload = {
        "arm": fit.arm,
        "theta": fit.theta,
        "coefs": {k: list(map(float, v)) for k, v in fit.coefs.items()},
        "baselines": {k: fit.baselines[k].to_dict() for k in TRANSITIONS},
        "converged": fit.converged,
        "iterations": fit.iterations,
        "final_loglik": fit.final_loglik,
        "tol": fit.tol,
        "loglik_history": [float(v) for v in fit.loglik_history],
        "degenerate": list(fit.degenerate),
        "n": fit.n,
        "n_events": fit.n_events,
    }
    return json.dumps(payload, indent=2)


def fit_from_json(text: str) -> IdmFit:
    d = json.loads(text)
    return IdmFit(
        arm=int(d["arm"]),
        theta=float(d["theta"]),
        coefs={k: np.asarray(v, dtype=float) for k, v in d["coefs"].items()},
        baselines={k: StepFunction.from_dict(v) for k, v in d["baselines"].items()},
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        final_loglik=float(d["final_loglik"]),
        tol=float(d["tol"]),
        loglik_history=np.asarray(d["loglik_history"], dtype=float),
        degenerate=tuple(d["degenerate"]),
        n=int(d["n"]),
        n_events={k: int(v) for k, v in d["n_events"].items()},
    )
