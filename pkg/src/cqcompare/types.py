"""Shared data model: censored samples, quantile grids and fitted coefficient processes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Invalid input data (bad rows, inconsistent shapes, degenerate samples)."""


class BreakdownError(RuntimeError):
    """The coefficient process is not identifiable over the requested quantile levels."""

    def __init__(self, message: str, max_tau: float | None = None):
        super().__init__(message)
        self.max_tau = max_tau


@dataclass(frozen=True)
class Observation:
    log_time: float
    event: int
    covariates: tuple[float, ...]

    def __post_init__(self):
        if not math.isfinite(self.log_time):
            raise DataError("log_time must be finite")
        if self.event not in (0, 1):
            raise DataError(f"event must be 0 or 1, got {self.event!r}")
        if len(self.covariates) == 0 or self.covariates[0] != 1.0:
            raise DataError("first covariate must be the intercept 1")


@dataclass(frozen=True, eq=False)
class SampleData:
    """A right-censored regression sample stored column-wise.

    ``log_time`` holds log X = log min(T, C), ``event`` the indicator I(T <= C)
    and ``covariates`` the (n, p+1) design whose first column is the intercept.
    """

    log_time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.log_time, dtype=float)
        d = np.ascontiguousarray(self.event, dtype=np.int64)
        z = np.ascontiguousarray(self.covariates, dtype=float)
        if z.ndim != 2 or y.ndim != 1 or d.shape != y.shape or z.shape[0] != y.shape[0]:
            raise DataError("inconsistent sample shapes")
        if y.size == 0:
            raise DataError("empty sample")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(z)):
            raise DataError("non-finite values in sample")
        if not np.all((d == 0) | (d == 1)):
            raise DataError("event indicators must be 0 or 1")
        if not np.all(z[:, 0] == 1.0):
            raise DataError("first covariate column must be the intercept")
        if d.sum() == 0:
            raise DataError("no events")
        for arr in (y, d, z):
            arr.setflags(write=False)
        object.__setattr__(self, "log_time", y)
        object.__setattr__(self, "event", d)
        object.__setattr__(self, "covariates", z)

    @property
    def n(self) -> int:
        return self.log_time.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1] - 1

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(y), int(d), tuple(float(v) for v in z))
            for y, d, z in zip(self.log_time, self.event, self.covariates)
        ]

    @classmethod
    def from_observations(cls, obs: Sequence[Observation]) -> "SampleData":
        if not obs:
            raise DataError("empty sample")
        lengths = {len(o.covariates) for o in obs}
        if len(lengths) != 1:
            raise DataError("inconsistent covariate lengths")
        return cls(
            np.array([o.log_time for o in obs]),
            np.array([o.event for o in obs]),
            np.array([o.covariates for o in obs]),
        )

    def take(self, idx: np.ndarray) -> "SampleData":
        return SampleData(self.log_time[idx], self.event[idx], self.covariates[idx])

    def export_rows(self) -> list[tuple[float, int, list[float]]]:
        """Rows in the raw (time, event, covariates-without-intercept) format."""
        return [
            (float(np.exp(y)), int(d), [float(v) for v in z[1:]])
            for y, d, z in zip(self.log_time, self.event, self.covariates)
        ]

    def __eq__(self, other):
        if not isinstance(other, SampleData):
            return NotImplemented
        return (
            np.array_equal(self.log_time, other.log_time)
            and np.array_equal(self.event, other.event)
            and np.array_equal(self.covariates, other.covariates)
        )


@dataclass(frozen=True)
class PairedData:
    sample1: SampleData
    sample2: SampleData

    def __post_init__(self):
        if self.sample1.n != self.sample2.n:
            raise DataError("paired samples must have equal length")
        if self.sample1.p != self.sample2.p:
            raise DataError("paired samples must have the same covariate dimension")

    @property
    def n(self) -> int:
        return self.sample1.n

    @property
    def p(self) -> int:
        return self.sample1.p

    def take(self, idx: np.ndarray) -> "PairedData":
        return PairedData(self.sample1.take(idx), self.sample2.take(idx))


@dataclass(frozen=True)
class IndependentData:
    """Two independent samples, possibly of different sizes."""

    sample1: SampleData
    sample2: SampleData

    def __post_init__(self):
        if self.sample1.p != self.sample2.p:
            raise DataError("samples must have the same covariate dimension")

    @property
    def p(self) -> int:
        return self.sample1.p


def validate_sample(rows) -> SampleData:
    """Build a :class:`SampleData` from raw ``(time, event, covariates)`` rows.

    Times must be strictly positive; they are stored on the log scale. An
    intercept column is prepended to every covariate vector.
    """
    rows = list(rows)
    if not rows:
        raise DataError("empty sample")
    width = None
    log_t, ev, cov = [], [], []
    for k, row in enumerate(rows):
        time, event, covs = row
        time = float(time)
        if not math.isfinite(time) or time <= 0:
            raise DataError(f"row {k}: nonpositive time {time!r}")
        if event not in (0, 1, True, False):
            raise DataError(f"row {k}: event must be 0 or 1, got {event!r}")
        covs = [float(c) for c in covs]
        if width is None:
            width = len(covs)
        elif len(covs) != width:
            raise DataError(f"row {k}: inconsistent covariate length")
        log_t.append(math.log(time))
        ev.append(int(event))
        cov.append([1.0] + covs)
    if sum(ev) == 0:
        raise DataError("no events")
    return SampleData(np.array(log_t), np.array(ev), np.array(cov))


@dataclass(frozen=True, eq=False)
class TauGrid:
    """Equally spaced quantile levels tau_1 < ... < tau_M with formal origin tau_0 = 0.

    ``levels`` excludes the origin. ``analysis`` holds indices into ``levels``
    that make up the testing set A; ``interval`` tells whether A is an
    interval (integrated with the trapezoid rule) or a finite set of points.
    """

    levels: np.ndarray
    analysis: np.ndarray
    interval: bool = True
    snapped: tuple[float, float] | None = None

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        ai = np.asarray(self.analysis, dtype=np.int64)
        if lv.ndim != 1 or lv.size == 0:
            raise ValueError("grid needs at least one level")
        if lv[0] <= 0 or lv[-1] >= 1 or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be strictly increasing in (0, 1)")
        if ai.size == 0:
            raise ValueError("empty analysis set")
        if np.any(ai < 0) or np.any(ai >= lv.size) or np.any(np.diff(ai) <= 0):
            raise ValueError("analysis set must be increasing grid indices")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "analysis", ai)

    @property
    def M(self) -> int:
        return self.levels.size

    @property
    def tau_R(self) -> float:
        return float(self.levels[-1])

    @property
    def analysis_levels(self) -> np.ndarray:
        return self.levels[self.analysis]

    def with_levels(self, taus: Sequence[float]) -> "TauGrid":
        """Same estimation grid, finite analysis set made of the levels nearest to ``taus``."""
        idx = sorted({int(np.argmin(np.abs(self.levels - t))) for t in taus})
        return TauGrid(self.levels, np.array(idx), interval=False)


def make_grid(tau_R: float, step: float, analysis_lo: float, analysis_hi: float) -> TauGrid:
    """Grid {step, 2 step, ..., tau_R} with analysis endpoints snapped to the nearest level."""
    if not tau_R < 1:
        raise ValueError("tau_R must be < 1")
    if not 0 < step <= tau_R:
        raise ValueError("need 0 < step <= tau_R")
    if not 0 < analysis_lo <= analysis_hi <= tau_R + 1e-12:
        raise ValueError("need 0 < analysis_lo <= analysis_hi <= tau_R")
    m = int(round(tau_R / step))
    if abs(m * step - tau_R) > 1e-9:
        raise ValueError("tau_R must be a multiple of step")
    levels = step * np.arange(1, m + 1)
    levels[-1] = tau_R
    lo = int(np.argmin(np.abs(levels - analysis_lo)))
    hi = int(np.argmin(np.abs(levels - analysis_hi)))
    if hi < lo:
        raise ValueError("empty analysis set after snapping")
    idx = np.arange(lo, hi + 1)
    return TauGrid(
        levels,
        idx,
        interval=hi > lo,
        snapped=(float(levels[lo]), float(levels[hi])),
    )


@dataclass(frozen=True, eq=False)
class CoefficientProcess:
    """Fitted beta(tau_k), one row per grid level; rows past ``defined_upto`` are NaN.

    ``defined_upto`` counts defined rows, so rows ``0 .. defined_upto-1`` (grid
    levels tau_1 .. tau_{defined_upto}) are valid.
    """

    grid: TauGrid
    beta: np.ndarray
    defined_upto: int
    status: str = "ok"
    cum_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.ndim != 2 or b.shape[0] != self.grid.M:
            raise ValueError("beta must have one row per grid level")
        if not 0 <= self.defined_upto <= self.grid.M:
            raise ValueError("defined_upto out of range")
        if not np.all(np.isfinite(b[: self.defined_upto])):
            raise ValueError("defined rows must be finite")
        object.__setattr__(self, "beta", b)

    @property
    def max_tau(self) -> float | None:
        return float(self.grid.levels[self.defined_upto - 1]) if self.defined_upto else None

    def covers_analysis(self) -> bool:
        return self.defined_upto > int(self.grid.analysis[-1])

    def require_analysis(self) -> np.ndarray:
        """Rows restricted to the analysis set; raises if any is undefined."""
        if not self.covers_analysis():
            raise BreakdownError(
                f"coefficient process breaks down before the analysis set is covered "
                f"(largest estimable tau: {self.max_tau})",
                self.max_tau,
            )
        return self.beta[self.grid.analysis]
