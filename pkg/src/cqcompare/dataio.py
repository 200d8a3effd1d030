"""CSV ingestion, coefficient tables, band tables and atomic file output."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapDraws
from .teststats import nearest_rank
from .types import CoefficientProcess, DataError, IndependentData, PairedData, TauGrid, validate_sample


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles of a dataset file.

    ``group`` splits rows into two independent samples; ``pair_id`` with
    ``arm`` aligns two rows per subject into paired samples. With neither,
    the file holds one sample. ``levels`` fixes which group or arm values
    form sample 1 and sample 2 (default: the two values in sorted order).
    """

    time: str
    status: str
    covariates: tuple[str, ...] = ()
    group: str | None = None
    pair_id: str | None = None
    arm: str | None = None
    levels: tuple[str, str] | None = None
    delimiter: str = ","
    header: bool = True
    subset: tuple[str, str] | None = None  # (column, value) row filter

    def __post_init__(self):
        if not self.time or not self.status:
            raise ValueError("time and status columns are required")
        if self.group is not None and self.pair_id is not None:
            raise ValueError("use either a group column or a pair_id column, not both")
        if self.pair_id is not None and self.arm is None:
            raise ValueError("paired data need an arm column")


def _read_table(path, schema: DatasetSchema):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    if schema.header:
        names, body, first = [c.strip() for c in rows[0]], rows[1:], 2
    else:
        names = [str(i) for i in range(len(rows[0]))]
        body, first = rows, 1
    index = {name: i for i, name in enumerate(names)}
    need = [schema.time, schema.status, *schema.covariates]
    need += [c for c in (schema.group, schema.pair_id, schema.arm) if c is not None]
    if schema.subset is not None:
        need.append(schema.subset[0])
    for col in need:
        if col not in index:
            raise DataError(f"{path}: missing column {col!r}")
    return index, body, first


def _number(cell, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: cannot parse {cell!r}") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def _status(cell, row, col):
    v = cell.strip()
    if v not in ("0", "1", "0.0", "1.0"):
        raise DataError(f"row {row}, column {col!r}: status must be 0 or 1, got {cell!r}")
    return int(float(v))


def _parse_row(r, index, schema, lineno):
    t = _number(r[index[schema.time]], lineno, schema.time)
    if t <= 0:
        raise DataError(f"row {lineno}, column {schema.time!r}: time must be positive, got {t!r}")
    d = _status(r[index[schema.status]], lineno, schema.status)
    z = [_number(r[index[c]], lineno, c) for c in schema.covariates]
    return t, d, z


def _two_levels(values, given, what):
    found = sorted(set(values))
    if given is not None:
        missing = [v for v in given if v not in found]
        if missing:
            raise DataError(f"{what} value(s) {missing} not present")
        return tuple(given)
    if len(found) != 2:
        raise DataError(f"{what} column must take exactly two values, found {found}")
    return tuple(found)


def load_csv(path, schema: DatasetSchema):
    """SampleData (one sample), IndependentData (group column) or PairedData (pair_id)."""
    index, body, first = _read_table(path, schema)
    records = []
    for k, r in enumerate(body):
        lineno = first + k
        if len(r) < len(index):
            raise DataError(f"row {lineno}: expected {len(index)} cells, got {len(r)}")
        if schema.subset is not None and r[index[schema.subset[0]]].strip() != schema.subset[1]:
            continue
        records.append((lineno, r))
    if schema.group is not None:
        labels = [r[index[schema.group]].strip() for _, r in records]
        g1, g2 = _two_levels(labels, schema.levels, "group")
        parts = {g1: [], g2: []}
        for (lineno, r), g in zip(records, labels):
            if g in parts:
                parts[g].append(_parse_row(r, index, schema, lineno))
        return IndependentData(validate_sample(parts[g1]), validate_sample(parts[g2]))
    if schema.pair_id is not None:
        arms = [r[index[schema.arm]].strip() for _, r in records]
        a1, a2 = _two_levels(arms, schema.levels, "arm")
        subjects: dict[str, dict] = {}
        order = []
        for (lineno, r), arm in zip(records, arms):
            pid = r[index[schema.pair_id]].strip()
            if pid not in subjects:
                subjects[pid] = {}
                order.append(pid)
            if arm in subjects[pid]:
                raise DataError(f"row {lineno}: duplicate arm {arm!r} for pair {pid!r}")
            subjects[pid][arm] = _parse_row(r, index, schema, lineno)
        for pid in order:
            if len(subjects[pid]) != 2 or set(subjects[pid]) != {a1, a2}:
                raise DataError(f"pair {pid!r} does not have exactly one row per arm")
        s1 = validate_sample([subjects[p][a1] for p in order])
        s2 = validate_sample([subjects[p][a2] for p in order])
        return PairedData(s1, s2)
    return validate_sample([_parse_row(r, index, schema, lineno) for lineno, r in records])


def fmt(v) -> str:
    """Locale-independent shortest round-trip representation."""
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def atomic_write(path, text: str):
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def coefficients_csv(processes: dict[str, CoefficientProcess], names) -> str:
    """One row per (sample, grid level); undefined rows carry nan."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "tau", "in_A", *names])
    for label, proc in processes.items():
        inA = np.zeros(proc.grid.M, dtype=int)
        inA[proc.grid.analysis] = 1
        for k in range(proc.grid.M):
            w.writerow([label, fmt(proc.grid.levels[k]), inA[k], *(fmt(b) for b in proc.beta[k])])
    return buf.getvalue()


def read_coefficients(path) -> dict[str, CoefficientProcess]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    p1 = len(header) - 3
    grouped: dict[str, list] = {}
    for r in body:
        grouped.setdefault(r[0], []).append(r)
    out = {}
    for label, rs in grouped.items():
        levels = np.array([float(r[1]) for r in rs])
        inA = np.array([int(r[2]) for r in rs])
        beta = np.array([[float(c) for c in r[3 : 3 + p1]] for r in rs])
        idx = np.flatnonzero(inA)
        grid = TauGrid(levels, idx, interval=idx.size > 1)
        defined = int(np.sum(np.all(np.isfinite(beta), axis=1)))
        out[label] = CoefficientProcess(grid, beta, defined)
    return out


@dataclass
class BandTable:
    """Per tau in A and coefficient: point difference and bootstrap band of the centered process."""

    rows: list[tuple] = field(default_factory=list)

    COLUMNS = ("tau", "coefficient", "point", "lower", "mean", "upper")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for tau, coef, point, lo, mean, hi in self.rows:
            w.writerow([fmt(tau), coef, fmt(point), fmt(lo), fmt(mean), fmt(hi)])
        return buf.getvalue()


def emit_band_table(point, draws, levels, names=None, scale=None, lower_q=0.025, upper_q=0.975) -> BandTable:
    """Nearest-rank 2.5%/97.5% quantiles and mean of the draws next to the point difference.

    Values are multiplied by ``scale``; for :class:`BootstrapDraws` it
    defaults to 1/sqrt(n_effective), which puts the table on the coefficient
    scale (point = b1 - b2, bands of b1* - b2* - b1 + b2).
    """
    if isinstance(draws, BootstrapDraws):
        d = draws.draws
        if scale is None:
            scale = 1.0 / math.sqrt(draws.n_effective)
    else:
        d = np.asarray(draws, dtype=float)
    scale = 1.0 if scale is None else float(scale)
    if d.ndim != 3 or d.shape[0] < 1:
        raise ValueError("draws must be a nonempty (N, |A|, k) array")
    d = d * scale
    point = np.asarray(point, dtype=float) * scale
    k = point.shape[1]
    names = list(names) if names is not None else [f"beta{j}" for j in range(k)]
    lo = nearest_rank(d, lower_q)
    hi = nearest_rank(d, upper_q)
    mean = d.mean(axis=0)
    rows = []
    for a, tau in enumerate(levels):
        for j in range(k):
            rows.append((float(tau), names[j], point[a, j], lo[a, j], mean[a, j], hi[a, j]))
    return BandTable(rows)


def dumps_json(obj) -> str:
    """Deterministic JSON (sorted keys, nan as null)."""

    def clean(x):
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, (np.floating, float)):
            return None if math.isnan(x) else float(x)
        if isinstance(x, np.integer):
            return int(x)
        if isinstance(x, np.bool_):
            return bool(x)
        if isinstance(x, np.ndarray):
            return clean(x.tolist())
        return x

    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"
