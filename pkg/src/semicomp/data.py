"""Observed-data records, dataset container, validation and CSV ingestion.

A record holds one subject's treatment arm ``a``, first observed gap time
``t1_obs = min(disease, death, censoring)`` with indicator ``delta1``, the
observed terminal time ``t2_obs = min(death, censoring)`` with indicator
``delta2``, a delayed-entry age ``entry`` (0 when recruitment is at origin),
an optional discrete bound-sharpening covariate ``z`` and a fixed-length
regression covariate vector ``x``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyArm, InvariantViolation, MalformedRow

__all__ = ["ObservedRecord", "Dataset", "ArmView", "load_csv", "write_csv", "at_risk"]

TRANSITIONS = ("01", "02", "12")


@dataclass(frozen=True)
class ObservedRecord:
    id: str
    a: int
    t1_obs: float
    delta1: int
    t2_obs: float
    delta2: int
    entry: float = 0.0
    z: str | None = None
    x: tuple[float, ...] = ()

    def validate(self) -> None:
        if self.a not in (0, 1):
            raise InvariantViolation(self.id, f"treatment arm must be 0 or 1, got {self.a}")
        if self.delta1 not in (0, 1) or self.delta2 not in (0, 1):
            raise InvariantViolation(self.id, "event indicators must be 0 or 1")
        if self.t1_obs < 0 or self.t2_obs < 0 or self.entry < 0:
            raise InvariantViolation(self.id, "times must be non-negative")
        if self.t1_obs > self.t2_obs:
            raise InvariantViolation(
                self.id, f"t1_obs={self.t1_obs} exceeds t2_obs={self.t2_obs}"
            )
        if self.entry > self.t1_obs:
            raise InvariantViolation(
                self.id, f"entry={self.entry} exceeds t1_obs={self.t1_obs}"
            )
        if self.delta1 == 0 and self.t1_obs != self.t2_obs:
            raise InvariantViolation(
                self.id, "no observed disease (delta1=0) requires t1_obs == t2_obs"
            )


class ArmView:
    """Column arrays for one treatment arm, in dataset row order."""

    __slots__ = ("ids", "t1", "d1", "t2", "d2", "entry", "z", "x", "n")

    def __init__(self, records):
        self.n = len(records)
        self.ids = [r.id for r in records]
        self.t1 = np.array([r.t1_obs for r in records], dtype=float)
        self.d1 = np.array([r.delta1 for r in records], dtype=np.int64)
        self.t2 = np.array([r.t2_obs for r in records], dtype=float)
        self.d2 = np.array([r.delta2 for r in records], dtype=np.int64)
        self.entry = np.array([r.entry for r in records], dtype=float)
        self.z = [r.z for r in records]
        self.x = np.array([r.x for r in records], dtype=float).reshape(self.n, -1)


@dataclass(frozen=True)
class Dataset:
    records: tuple[ObservedRecord, ...]
    p: int = field(init=False)
    has_z: bool = field(init=False)
    has_truncation: bool = field(init=False)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise InvariantViolation("<dataset>", "dataset is empty")
        dims = {len(r.x) for r in records}
        if len(dims) > 1:
            raise InvariantViolation(
                "<dataset>", f"records carry mixed covariate dimensions {sorted(dims)}"
            )
        for r in records:
            r.validate()
        object.__setattr__(self, "p", dims.pop())
        object.__setattr__(self, "has_z", any(r.z is not None for r in records))
        object.__setattr__(self, "has_truncation", any(r.entry > 0 for r in records))

    def __len__(self) -> int:
        return len(self.records)

    def arm(self, a: int) -> ArmView:
        recs = [r for r in self.records if r.a == a]
        if not recs:
            raise EmptyArm(a)
        return ArmView(recs)

    def arm_sizes(self) -> dict[int, int]:
        out = {0: 0, 1: 0}
        for r in self.records:
            out[r.a] += 1
        return out

    def z_levels(self) -> list[str]:
        return sorted({r.z for r in self.records if r.z is not None})

    def subset(self, keep) -> "Dataset":
        """New dataset from a boolean mask or an index array (row order kept)."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            recs = [r for r, k in zip(self.records, keep) if k]
        else:
            recs = [self.records[int(i)] for i in keep]
        return Dataset(tuple(recs))


def at_risk(dataset: Dataset, process: str, a: int, t: float) -> int:
    """Number of arm-``a`` subjects at risk for a transition at time ``t``.

    Transitions ``01`` and ``02`` share the healthy-state risk set
    ``entry <= t <= t1_obs``; transition ``12`` requires an observed disease
    and ``t1_obs < t <= t2_obs``.
    """
    if process not in TRANSITIONS:
        raise ValueError(f"process must be one of {TRANSITIONS}, got {process!r}")
    if t < 0:
        raise ValueError("t must be non-negative")
    count = 0
    for r in dataset.records:
        if r.a != a:
            continue
        if process in ("01", "02"):
            if r.entry <= t <= r.t1_obs:
                count += 1
        else:
            if r.delta1 == 1 and r.t1_obs < t <= r.t2_obs and r.entry <= t:
                count += 1
    return count


# ---------------------------------------------------------------------------
# CSV ingestion / emission

DEFAULT_SCHEMA = {
    "id": "id",
    "a": "a",
    "t1": "t1",
    "d1": "d1",
    "t2": "t2",
    "d2": "d2",
    "entry": "entry",
    "z": "z",
    "x": (),
}


def _parse_float(raw: str, line: int, col: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise MalformedRow(line, f"column {col!r}: cannot parse {raw!r} as a number") from None


def _parse_indicator(raw: str, line: int, col: str) -> int:
    v = _parse_float(raw, line, col)
    if v not in (0.0, 1.0):
        raise MalformedRow(line, f"column {col!r}: indicator must be 0 or 1, got {raw!r}")
    return int(v)


def load_csv(path, schema: dict | None = None) -> Dataset:
    """Read a dataset from ``path`` using a column-name mapping.

    ``schema`` overrides entries of the default mapping
    ``{id, a, t1, d1, t2, d2, entry, z, x}`` where ``x`` is a tuple of
    covariate column names.  A missing ``entry`` column yields 0 for all
    rows; a missing ``z`` column leaves ``has_z`` unset.
    """
    spec = dict(DEFAULT_SCHEMA)
    if schema:
        spec.update(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRow(1, "missing header row")
        cols = set(reader.fieldnames)
        required = [spec["a"], spec["t1"], spec["d1"], spec["t2"], spec["d2"]]
        missing = [c for c in required if c not in cols]
        if missing:
            raise MalformedRow(1, f"missing required column(s) {missing}")
        x_cols = tuple(spec["x"])
        bad_x = [c for c in x_cols if c not in cols]
        if bad_x:
            raise MalformedRow(1, f"missing covariate column(s) {bad_x}")
        has_id = spec["id"] in cols
        has_entry = spec["entry"] in cols
        has_z = spec["z"] in cols

        records = []
        for line, row in enumerate(reader, start=2):
            if any(row.get(c) in (None, "") for c in required):
                raise MalformedRow(line, "missing value in a required column")
            rid = row[spec["id"]] if has_id else str(line - 2)
            a_val = _parse_float(row[spec["a"]], line, spec["a"])
            if a_val not in (0.0, 1.0):
                raise MalformedRow(line, f"column {spec['a']!r}: arm must be 0 or 1")
            rec = ObservedRecord(
                id=rid,
                a=int(a_val),
                t1_obs=_parse_float(row[spec["t1"]], line, spec["t1"]),
                delta1=_parse_indicator(row[spec["d1"]], line, spec["d1"]),
                t2_obs=_parse_float(row[spec["t2"]], line, spec["t2"]),
                delta2=_parse_indicator(row[spec["d2"]], line, spec["d2"]),
                entry=_parse_float(row[spec["entry"]], line, spec["entry"]) if has_entry else 0.0,
                z=(row[spec["z"]] if has_z and row[spec["z"]] != "" else None),
                x=tuple(_parse_float(row[c], line, c) for c in x_cols),
            )
            rec.validate()
            records.append(rec)

    if not records:
        raise MalformedRow(2, "file contains no data rows")
    ds = Dataset(tuple(records))
    sizes = ds.arm_sizes()
    for arm, size in sizes.items():
        if size == 0:
            raise EmptyArm(arm)
    return ds


def write_csv(dataset: Dataset, path, schema: dict | None = None) -> None:
    """Emit a dataset in the same layout ``load_csv`` reads (round-trips)."""
    spec = dict(DEFAULT_SCHEMA)
    if schema:
        spec.update(schema)
    x_cols = tuple(spec["x"]) or tuple(f"x{i + 1}" for i in range(dataset.p))
    header = [spec["id"], spec["a"], spec["t1"], spec["d1"], spec["t2"], spec["d2"], spec["entry"]]
    if dataset.has_z:
        header.append(spec["z"])
    header.extend(x_cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in dataset.records:
            row = [
                r.id,
                r.a,
                format(r.t1_obs, ".17g"),
                r.delta1,
                format(r.t2_obs, ".17g"),
                r.delta2,
                format(r.entry, ".17g"),
            ]
            if dataset.has_z:
                row.append("" if r.z is None else r.z)
            row.extend(format(v, ".17g") for v in r.x)
            w.writerow(row)
