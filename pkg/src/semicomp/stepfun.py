"""Right-continuous step functions on a time grid.

The single carrier type for every survival curve, distribution function and
cumulative hazard produced by the estimators.  Evaluation at ``t`` returns the
value attached to the last knot ``<= t``; before the first knot the function
equals ``value_at_zero``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["StepFunction"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class StepFunction:
    knots: np.ndarray
    values: np.ndarray
    value_at_zero: float = 1.0

    _knots: np.ndarray = field(init=False, repr=False, compare=False)
    _values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or values.ndim != 1:
            raise ValueError("knots and values must be one-dimensional")
        if knots.shape != values.shape:
            raise ValueError("knots and values must have equal length")
        if knots.size and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_values", values)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    # -- evaluation ------------------------------------------------------

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self._knots, t_arr, side="right") - 1
        padded = np.concatenate(([self.value_at_zero], self._values))
        out = padded[idx + 1]
        if np.ndim(t) == 0:
            return float(out)
        return out

    @property
    def support_end(self) -> float:
        """Last knot; the function is a constant extrapolation beyond it."""
        return float(self._knots[-1]) if self._knots.size else 0.0

    # -- calculus --------------------------------------------------------

    def integrate(self, upper: float, lower: float = 0.0) -> float:
        """Exact integral over ``[lower, upper]`` (Riemann sum over steps)."""
        if upper < lower:
            raise ValueError("upper must be >= lower")
        if upper == lower:
            return 0.0
        cuts = self._knots[(self._knots > lower) & (self._knots < upper)]
        edges = np.concatenate(([lower], cuts, [upper]))
        vals = self(edges[:-1])
        return float(np.sum(np.atleast_1d(vals) * np.diff(edges)))

    def is_nonincreasing(self, tol: float = 0.0) -> bool:
        seq = np.concatenate(([self.value_at_zero], self._values))
        return bool(np.all(np.diff(seq) <= tol))

    # -- derived curves ---------------------------------------------------

    def complement(self) -> "StepFunction":
        """Pointwise ``1 - f``;  maps a survival curve to its CDF and back."""
        return StepFunction(self._knots, 1.0 - self._values, 1.0 - self.value_at_zero)

    def restricted(self, t_max: float) -> "StepFunction":
        """Drop knots beyond ``t_max`` (constant continuation afterwards)."""
        keep = self._knots <= t_max
        return StepFunction(self._knots[keep], self._values[keep], self.value_at_zero)

    # -- serialization ----------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value"])
            w.writerow([_fmt(0.0), _fmt(self.value_at_zero)])
            for t, v in zip(self._knots, self._values):
                w.writerow([_fmt(t), _fmt(v)])

    def to_dict(self) -> dict:
        return {
            "knots": [float(x) for x in self._knots],
            "values": [float(x) for x in self._values],
            "value_at_zero": float(self.value_at_zero),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(np.asarray(d["knots"], dtype=float),
                   np.asarray(d["values"], dtype=float),
                   float(d["value_at_zero"]))

    @classmethod
    def constant(cls, value: float) -> "StepFunction":
        return cls(np.empty(0), np.empty(0), value)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (
            self.value_at_zero == other.value_at_zero
            and np.array_equal(self._knots, other._knots)
            and np.array_equal(self._values, other._values)
        )

    def __hash__(self):
        return hash((self.value_at_zero, self._knots.tobytes(), self._values.tobytes()))

    def almost_equal(self, other: "StepFunction", tol: float = 1e-12) -> bool:
        grid = np.unique(np.concatenate((self._knots, other._knots, [0.0])))
        if grid.size == 0:
            return math.isclose(self.value_at_zero, other.value_at_zero, abs_tol=tol)
        return bool(np.all(np.abs(self(grid) - other(grid)) <= tol))
