"""Monte Carlo estimates of rejection probabilities.

The warp-speed study computes, per simulated dataset, the point statistic
and the statistic of a single bootstrap replicate; the replicate statistics
of all datasets are pooled into one null distribution. Standardization needs
a covariance estimate per dataset, which comes from a small pilot set of
extra multiplier draws (``pilot_draws``, 20 by default).
"""
from __future__ import annotations

import csv
import functools
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bootstrap import (
    MULTIPLIER,
    BootstrapError,
    BootstrapScheme,
    covariance_estimate,
    difference_draws,
    point_fits,
    standardize,
    standardizers,
    stream,
)
from .dgp import DgpConfig, calibrated, generate
from .estimator import Estimator, PengHuang
from .teststats import BONF, STATISTICS, TestConfig, all_statistics, nearest_rank, run_test
from .types import BreakdownError, DataError, make_grid

FAILURE_LIMIT = 0.05


@dataclass(frozen=True)
class Scenario:
    label: str
    dgp: DgpConfig
    tau_lo: float = 0.5
    tau_hi: float = 0.5
    step: float = 0.01

    def grid(self):
        return make_grid(self.tau_hi, self.step, self.tau_lo, self.tau_hi)


@dataclass(frozen=True)
class ScenarioGrid:
    scenarios: tuple[Scenario, ...]
    test: TestConfig = field(default_factory=TestConfig)
    replications: int = 500
    pilot_draws: int = 20
    scheme: str = MULTIPLIER

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("no scenarios")
        if self.replications < 1:
            raise ValueError("need at least one replication")


@dataclass
class SimulationReport:
    rows: list[dict]
    meta: dict = field(default_factory=dict)
    # label -> (point statistics, replicate statistics) per used replication
    statistics: dict = field(default_factory=dict, repr=False)

    COLUMNS = (
        "label", "model", "setting", "paired", "eta", "n1", "n2", "diff", "censoring",
        "tau_lo", "tau_hi", "replications", "used", "failed", "status",
        "rej_bonf", "rej_l2", "rej_linf", "se_bonf", "se_l2", "se_linf",
    )

    def rejection(self, label: str, statistic: str) -> float:
        for row in self.rows:
            if row["label"] == label:
                return row[f"rej_{statistic}"]
        raise KeyError(label)

    def to_csv(self, timing: bool = False) -> str:
        cols = list(self.COLUMNS) + (["wall_time"] if timing else [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in cols])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


@functools.lru_cache(maxsize=64)
def _calibrated(dgp: DgpConfig) -> DgpConfig:
    return calibrated(dgp)


def _row(scn: Scenario, dgp: DgpConfig, R: int, used: int, failed: int, rates: dict, wall: float):
    status = "ok" if failed <= FAILURE_LIMIT * R and used > 0 else "failed"
    row = {
        "label": scn.label,
        "model": dgp.model,
        "setting": "paired" if dgp.paired else dgp.setting,
        "paired": dgp.paired,
        "eta": float(dgp.eta),
        "n1": dgp.n1,
        "n2": dgp.n2,
        "diff": round(dgp.diff, 12),
        "censoring": float(dgp.censor_target) if dgp.censor_target is not None else 0.0,
        "tau_lo": float(scn.tau_lo),
        "tau_hi": float(scn.tau_hi),
        "replications": R,
        "used": used,
        "failed": failed,
        "status": status,
        "wall_time": wall,
    }
    for name in STATISTICS:
        p = rates.get(name, float("nan")) if status == "ok" else float("nan")
        row[f"rej_{name}"] = p
        row[f"se_{name}"] = math.sqrt(p * (1 - p) / used) if status == "ok" else float("nan")
    return row


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def warp_replication(dgp, grid, test: TestConfig, scheme, pilot, estimator, seed, s, r):
    """(point statistics, replicate statistics) for replication r, or None on breakdown."""
    try:
        data = generate(dgp, stream(seed, s, r, 0))
        fits = point_fits(data, estimator, grid)
        bseed = int(stream(seed, s, r, 1).integers(0, 2**63 - 1))
        point, boot = difference_draws(data, estimator, grid, scheme, pilot + 1, bseed, fits=fits)
    except (BreakdownError, BootstrapError, DataError):
        return None
    if boot.N < 2 + (1 if test.standardize else 0):
        return None
    k = point.shape[1]
    test.check_components(k)
    draws = boot.draws
    if test.component_subset is not None:
        cols = list(test.component_subset)
        point, draws = point[:, cols], draws[:, :, cols]
    warp, pilot_set = draws[0], draws[1:]
    if test.standardize:
        roots = standardizers(covariance_estimate(pilot_set), test.floor_ratio)
        point, warp = standardize(point, roots), standardize(warp, roots)
    weights = None if test.weights is None else np.asarray(test.weights)
    lv = grid.analysis_levels
    return all_statistics(point, weights, lv, grid.interval), all_statistics(warp, weights, lv, grid.interval)


def pooled_rejections(point_stats: list[dict], null_stats: list[dict], alpha: float, upper_tail: bool = False):
    """Fraction of replications whose statistic falls outside the pooled replicate interval."""
    rates = {}
    for name in STATISTICS:
        t = np.array([p[name] for p in point_stats])
        null = np.array([q[name] for q in null_stats])
        a = alpha / t.shape[1] if name == BONF else alpha
        if upper_tail:
            out = t > nearest_rank(null, 1 - a)
        else:
            out = (t < nearest_rank(null, a / 2)) | (t > nearest_rank(null, 1 - a / 2))
        if name == BONF:
            out = out.any(axis=1)
        rates[name] = float(np.mean(out))
    return rates


def warp_speed_study(
    grid: ScenarioGrid,
    master_seed: int,
    *,
    estimator: Estimator | None = None,
    threads: int = 1,
    keep_statistics: bool = False,
):
    if grid.replications < 2:
        raise ValueError("warp-speed needs at least two replications")
    estimator = estimator or PengHuang()
    rows, kept = [], {}
    for s, scn in enumerate(grid.scenarios):
        t0 = time.perf_counter()
        dgp = _calibrated(scn.dgp)
        tg = scn.grid()
        scheme = BootstrapScheme(grid.scheme, paired=dgp.paired)
        R = grid.replications
        fn = functools.partial(warp_replication, dgp, tg, grid.test, scheme, grid.pilot_draws, estimator, master_seed, s)
        out = _map(fn, range(R), threads)
        ok = [o for o in out if o is not None]
        rates = pooled_rejections([o[0] for o in ok], [o[1] for o in ok], grid.test.alpha, grid.test.upper_tail) if len(ok) >= 2 else {}
        rows.append(_row(scn, dgp, R, len(ok), R - len(ok), rates, time.perf_counter() - t0))
        if keep_statistics:
            kept[scn.label] = ([o[0] for o in ok], [o[1] for o in ok])
    meta = {"mode": "warp-speed", "pilot_draws": grid.pilot_draws, "seed": master_seed, "standardize": grid.test.standardize}
    return SimulationReport(rows, meta, kept)


def full_bootstrap_study(grid: ScenarioGrid, n_boot: int, master_seed: int, *, estimator: Estimator | None = None, threads: int = 1):
    if n_boot < 50:
        raise ValueError("full bootstrap study needs n_boot >= 50")
    estimator = estimator or PengHuang()
    rows = []
    for s, scn in enumerate(grid.scenarios):
        t0 = time.perf_counter()
        dgp = _calibrated(scn.dgp)
        tg = scn.grid()
        scheme = BootstrapScheme(grid.scheme, paired=dgp.paired)
        R = grid.replications

        def one(r):
            bseed = int(stream(master_seed, s, r, 1).integers(0, 2**63 - 1))
            cfg = replace(grid.test, n_boot=n_boot, seed=bseed)
            try:
                data = generate(dgp, stream(master_seed, s, r, 0))
                res, _, _ = run_test(data, estimator, tg, scheme, cfg)
            except (BreakdownError, BootstrapError, DataError):
                return None
            return res.reject

        out = _map(one, range(R), threads)
        ok = [o for o in out if o is not None]
        rates = {name: float(np.mean([o[name] for o in ok])) for name in STATISTICS if ok and name in ok[0]}
        rows.append(_row(scn, dgp, R, len(ok), R - len(ok), rates, time.perf_counter() - t0))
    meta = {"mode": "full-bootstrap", "n_boot": n_boot, "seed": master_seed, "standardize": grid.test.standardize}
    return SimulationReport(rows, meta)


def diff_family(
    model: int = 1,
    setting: int = 2,
    *,
    paired: bool = False,
    eta: float = 0.0,
    n1: int = 200,
    n2: int = 200,
    censoring: float | None = 0.2,
    diffs=(0.0, 0.2, 0.4),
    tau_lo: float = 0.5,
    tau_hi: float = 0.5,
) -> tuple[Scenario, ...]:
    """Scenarios with b11 = -0.5 and b21 = -0.5 + diff, other coefficients as in the study design."""
    out = []
    for d in diffs:
        dgp = DgpConfig(
            model=model,
            beta1=(0.0, -0.5, 0.5),
            beta2=(0.0, -0.5 + d, 0.5),
            setting=setting,
            paired=paired,
            eta=eta,
            n1=n1,
            n2=n1 if paired else n2,
            censor_target=censoring,
        )
        design = f"paired-eta{eta:g}" if paired else f"setting{setting}"
        out.append(Scenario(f"m{model}-{design}-n{n1}x{dgp.n2}-c{censoring}-diff{d:g}", dgp, tau_lo, tau_hi))
    return tuple(out)
