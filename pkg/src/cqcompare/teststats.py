"""Comparison statistics, bootstrap critical values and decisions.

All statistics take a process over the analysis set A with shape
(..., |A|, k): leading axes index bootstrap draws. Integrals over an
interval A use the trapezoid rule on the analysis grid; a finite A is
summed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bootstrap import (
    BootstrapScheme,
    covariance_estimate,
    difference_draws,
    standardize,
    standardizers,
)
from .estimator import Estimator
from .types import TauGrid

L2 = "l2"
LINF = "linf"
BONF = "bonf"
ALL = "all"
STATISTICS = (BONF, L2, LINF)


def _check_weights(weights, size):
    w = np.ones(size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise ValueError(f"weights have length {w.size}, analysis set has {size} points")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    return w


def integrate_over_A(values, weights, levels, interval: bool = True):
    """Integral over A of values(tau) w(tau); tau is the first axis of ``values``."""
    v = np.asarray(values, dtype=float)
    lv = np.asarray(levels, dtype=float)
    if v.shape[0] != lv.size:
        raise ValueError("values and analysis levels are misaligned")
    w = _check_weights(weights, lv.size).reshape((-1,) + (1,) * (v.ndim - 1))
    if interval and lv.size > 1:
        return np.trapezoid(v * w, lv, axis=0)
    return np.sum(v * w, axis=0)


def _integrate_tau(vals, weights, levels, interval):
    # tau on the last axis
    return integrate_over_A(np.moveaxis(vals, -1, 0), weights, levels, interval)


def _finite(diff):
    d = np.asarray(diff, dtype=float)
    if not np.all(np.isfinite(d)):
        raise ValueError("process has undefined entries on A")
    return d


def stat_L2(diff, weights, levels, n: float = 1.0, interval: bool = True):
    d = _finite(diff)
    # hypot avoids under/overflow of the squared norm
    return math.sqrt(n) * _integrate_tau(np.hypot.reduce(np.abs(d), axis=-1), weights, levels, interval)


def stat_Linf(diff, weights, levels, n: float = 1.0, interval: bool = True):
    d = _finite(diff)
    return math.sqrt(n) * _integrate_tau(np.max(np.abs(d), axis=-1), weights, levels, interval)


def stat_bonf(diff, weights, levels, n: float = 1.0, interval: bool = True):
    """One statistic per component, shape (..., k)."""
    d = _finite(diff)
    a = np.moveaxis(np.abs(d), -2, -1)
    return math.sqrt(n) * _integrate_tau(a, weights, levels, interval)


def all_statistics(process, weights, levels, interval=True, n=1.0):
    return {
        BONF: stat_bonf(process, weights, levels, n, interval),
        L2: stat_L2(process, weights, levels, n, interval),
        LINF: stat_Linf(process, weights, levels, n, interval),
    }


def nearest_rank(sample, q):
    """Nearest-rank empirical quantile: the ceil(q N)-th smallest value (first for q = 0)."""
    s = np.sort(np.asarray(sample, dtype=float), axis=0)
    N = s.shape[0]
    idx = min(max(int(math.ceil(q * N - 1e-12)) - 1, 0), N - 1)
    return s[idx]


def two_sided_pvalue(t, null):
    """2 min(F(t), 1 - F(t-)) under the empirical distribution of ``null``, capped at 1."""
    null = np.asarray(null, dtype=float)
    below = np.mean(null <= t, axis=0)
    above = np.mean(null >= t, axis=0)
    return np.minimum(1.0, 2.0 * np.minimum(below, above))


def upper_pvalue(t, null):
    return np.mean(np.asarray(null, dtype=float) >= t, axis=0)


def bonferroni_reject(pvalues, alpha):
    p = np.asarray(pvalues, dtype=float)
    return bool(np.any(p < alpha / p.size))


@dataclass(frozen=True)
class TestConfig:
    statistic: str = ALL
    alpha: float = 0.05
    weights: tuple[float, ...] | None = None
    standardize: bool = True
    component_subset: tuple[int, ...] | None = None
    n_boot: int = 500
    seed: int = 0
    upper_tail: bool = False
    floor_ratio: float = 1e-10

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.statistic not in STATISTICS + (ALL,):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be nonnegative and not all zero")
        if self.n_boot < 2:
            raise ValueError("n_boot must be at least 2")

    @property
    def requested(self) -> tuple[str, ...]:
        return STATISTICS if self.statistic == ALL else (self.statistic,)

    def check_components(self, k: int):
        if self.component_subset is not None:
            cs = self.component_subset
            if len(cs) == 0 or len(set(cs)) != len(cs) or min(cs) < 0 or max(cs) >= k:
                raise ValueError(f"component_subset must hold distinct indices in 0..{k - 1}")


@dataclass
class TestResult:
    statistics: dict
    p_values: dict
    critical_intervals: dict
    reject: dict
    diagnostics: dict = field(default_factory=dict)

    __test__ = False

    def to_dict(self) -> dict:
        return asdict(self)


def decide(point_stats, null_stats, alpha, requested, upper_tail=False):
    """Intervals, p-values and decisions for point statistics against a null sample."""
    stats, pvals, intervals, reject = {}, {}, {}, {}
    for name in requested:
        t = np.asarray(point_stats[name], dtype=float)
        null = np.asarray(null_stats[name], dtype=float)
        if name == BONF:
            k = t.size
            a = alpha / k
        else:
            a = alpha
        if upper_tail:
            lo = np.full(t.shape, -np.inf)
            hi = nearest_rank(null, 1 - a)
            p = upper_pvalue(t, null)
            out = t > hi
        else:
            lo = nearest_rank(null, a / 2)
            hi = nearest_rank(null, 1 - a / 2)
            p = two_sided_pvalue(t, null)
            out = (t < lo) | (t > hi)
        if name == BONF:
            rej = bonferroni_reject(p, alpha)
        else:
            rej = bool(out)
        stats[name] = t.tolist()
        pvals[name] = np.asarray(p).tolist()
        intervals[name] = [np.asarray(lo).tolist(), np.asarray(hi).tolist()]
        reject[name] = rej
    return stats, pvals, intervals, reject


def run_test(data, estimator: Estimator, grid: TauGrid, scheme: BootstrapScheme, config: TestConfig, *, threads: int = 1):
    """Bootstrap test of equal coefficient processes over the analysis set of ``grid``."""
    point, boot = difference_draws(data, estimator, grid, scheme, config.n_boot, config.seed, threads=threads)
    k = point.shape[1]
    config.check_components(k)
    weights = None if config.weights is None else np.asarray(config.weights, dtype=float)
    levels = grid.analysis_levels
    proc, draws = point, boot.draws
    if config.component_subset is not None:
        cols = list(config.component_subset)
        proc, draws = proc[:, cols], draws[:, :, cols]
    if config.standardize:
        roots = standardizers(covariance_estimate(draws), config.floor_ratio)
        proc, draws = standardize(proc, roots), standardize(draws, roots)
    ps = all_statistics(proc, weights, levels, grid.interval)
    ns = all_statistics(draws, weights, levels, grid.interval)
    stats, pvals, intervals, reject = decide(ps, ns, config.alpha, config.requested, config.upper_tail)
    diagnostics = {
        "analysis_levels": levels.tolist(),
        "interval": bool(grid.interval),
        "n_effective": boot.n_effective,
        "n_draws": boot.N,
        "failed_replicates": boot.failed,
        "retried_replicates": boot.retried,
        "components": list(config.component_subset) if config.component_subset is not None else list(range(k)),
        "point_process": point.tolist(),
    }
    result = TestResult(stats, pvals, intervals, reject, diagnostics)
    return result, point, boot
