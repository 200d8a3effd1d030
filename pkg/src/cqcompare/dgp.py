"""Synthetic censored samples for the simulation models.

Model 1:  log T = b0 + b1 Z1 + b2 Z2 + e
Model 2:  log T = b0 + b1 Z1 + (b2 + Z2) e
Model 3:  log T = b0 + b1 Z1 + b2 Z2 + e / 2

with Z1 uniform and Z2 Bernoulli. Independent designs draw e ~ N(0, 0.25)
separately per sample; the paired design shares covariates and censoring
times and draws (e1, e2) bivariate normal with variances 0.5 and
covariance ``eta``. Censoring times are uniform on [0, c].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .types import IndependentData, PairedData, SampleData

# (Z1 upper bound, Z2 success probability) per sample and setting
SETTINGS = {
    1: ((1.0, 0.5), (1.0, 0.5)),
    2: ((1.0, 0.5), (1.2, 0.7)),
}

INDEPENDENT_SD = 0.5
PAIRED_SD = math.sqrt(0.5)


@dataclass(frozen=True)
class DgpConfig:
    model: int = 1
    beta1: tuple[float, float, float] = (0.0, -0.5, 0.5)
    beta2: tuple[float, float, float] = (0.0, -0.5, 0.5)
    setting: int = 1
    paired: bool = False
    eta: float = 0.0
    n1: int = 200
    n2: int = 200
    censor_target: float | None = None
    censor_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if self.model not in (1, 2, 3):
            raise ValueError("model must be 1, 2 or 3")
        if len(self.beta1) != 3 or len(self.beta2) != 3:
            raise ValueError("coefficient vectors have three entries")
        if self.paired:
            if self.n1 != self.n2:
                raise ValueError("paired design needs n1 == n2")
            if abs(self.eta) > 0.5:
                raise ValueError("error covariance must satisfy |eta| <= 0.5")
        elif self.setting not in SETTINGS:
            raise ValueError(f"unknown covariate setting {self.setting!r}")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("sample sizes must be positive")
        if self.censor_target is not None and not 0 < self.censor_target < 1:
            raise ValueError("censor_target must lie in (0, 1)")
        if self.censor_bounds is not None and min(self.censor_bounds) <= 0:
            raise ValueError("censoring bounds must be positive")
        if self.model == 2:
            # scale b2 + Z2 must stay positive for Z2 in {0, 1}
            for b in (self.beta1, self.beta2):
                if b[2] <= 0 or b[2] + 1 <= 0:
                    raise ValueError("model 2 needs b2 + Z2 > 0 for every covariate value")

    @property
    def diff(self) -> float:
        return self.beta2[1] - self.beta1[1]

    def with_bounds(self, c1: float, c2: float) -> "DgpConfig":
        return replace(self, censor_bounds=(float(c1), float(c2)))


def error_sd(config: DgpConfig) -> float:
    """Standard deviation of the error term as it enters log T."""
    sd = PAIRED_SD if config.paired else INDEPENDENT_SD
    return sd / 2 if config.model == 3 else sd


def true_beta(config: DgpConfig, j: int, tau: float) -> np.ndarray:
    """Coefficients of the conditional tau-quantile of log T in sample j (1 or 2)."""
    b = np.array(config.beta1 if j == 1 else config.beta2, dtype=float)
    q = error_sd(config) * norm.ppf(tau)
    if config.model == 2:
        return np.array([b[0] + b[2] * q, b[1], q])
    return np.array([b[0] + q, b[1], b[2]])


def _covariates(n, upper, prob, rng):
    return rng.uniform(0.0, upper, n), (rng.random(n) < prob).astype(float)


def _log_time(model, b, z1, z2, e):
    if model == 1:
        return b[0] + b[1] * z1 + b[2] * z2 + e
    if model == 2:
        return b[0] + b[1] * z1 + (b[2] + z2) * e
    return b[0] + b[1] * z1 + b[2] * z2 + 0.5 * e


def _censor(n, c, rng):
    if c is None or math.isinf(c):
        return np.full(n, np.inf)
    # uniform on (0, c]; never exactly zero
    return c * (1.0 - rng.random(n))


@dataclass(frozen=True, eq=False)
class Latent:
    """Unobserved quantities behind a generated sample (tests only)."""

    log_t1: np.ndarray
    log_t2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray


def _sample(log_t, c, z1, z2):
    with np.errstate(divide="ignore"):
        log_c = np.log(c)
    x = np.minimum(log_t, log_c)
    d = (log_t <= log_c).astype(int)
    return SampleData(x, d, np.column_stack([np.ones(z1.size), z1, z2]))


def generate(config: DgpConfig, rng: np.random.Generator, debug: bool = False):
    """Draw one dataset; with ``debug`` also return the latent times and errors."""
    if config.censor_target is not None and config.censor_bounds is None:
        raise ValueError("calibrate censoring bounds before generating")
    c1, c2 = config.censor_bounds if config.censor_bounds is not None else (None, None)
    if config.paired:
        n = config.n1
        z1, z2 = _covariates(n, 1.0, 0.5, rng)
        cov = [[0.5, config.eta], [config.eta, 0.5]]
        e = rng.multivariate_normal([0.0, 0.0], cov, size=n, method="cholesky")
        e1, e2 = e[:, 0], e[:, 1]
        lt1 = _log_time(config.model, config.beta1, z1, z2, e1)
        lt2 = _log_time(config.model, config.beta2, z1, z2, e2)
        cc = _censor(n, c1, rng)
        data = PairedData(_sample(lt1, cc, z1, z2), _sample(lt2, cc, z1, z2))
        latent = Latent(lt1, lt2, cc, cc, e1, e2)
    else:
        (u1, p1), (u2, p2) = SETTINGS[config.setting]
        z11, z12 = _covariates(config.n1, u1, p1, rng)
        e1 = rng.normal(0.0, INDEPENDENT_SD, config.n1)
        z21, z22 = _covariates(config.n2, u2, p2, rng)
        e2 = rng.normal(0.0, INDEPENDENT_SD, config.n2)
        lt1 = _log_time(config.model, config.beta1, z11, z12, e1)
        lt2 = _log_time(config.model, config.beta2, z21, z22, e2)
        cc1 = _censor(config.n1, c1, rng)
        cc2 = _censor(config.n2, c2, rng)
        data = IndependentData(_sample(lt1, cc1, z11, z12), _sample(lt2, cc2, z21, z22))
        latent = Latent(lt1, lt2, cc1, cc2, e1, e2)
    return (data, latent) if debug else data


def _latent_times(config: DgpConfig, j: int, draws: int, rng) -> np.ndarray:
    """T for sample j drawn from its marginal law (covariates and errors)."""
    if config.paired:
        upper, prob, sd = 1.0, 0.5, PAIRED_SD
    else:
        upper, prob = SETTINGS[config.setting][j - 1]
        sd = INDEPENDENT_SD
    z1, z2 = _covariates(draws, upper, prob, rng)
    e = rng.normal(0.0, sd, draws)
    b = config.beta1 if j == 1 else config.beta2
    return np.exp(_log_time(config.model, b, z1, z2, e))


def censoring_fraction(times: np.ndarray, c: float) -> float:
    """P(C < T) for C ~ U[0, c], averaged over the given draws of T."""
    return float(np.mean(np.minimum(times, c)) / c)


def _bisect(times, target, precision, iters=100):
    hi = float(np.median(times))
    while censoring_fraction(times, hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError(f"censoring target {target} unreachable")
    lo = hi
    while censoring_fraction(times, lo) < target:
        lo /= 2.0
        if lo < 1e-12:
            raise ValueError(f"censoring target {target} unreachable")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if censoring_fraction(times, mid) > target:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    if abs(censoring_fraction(times, c) - target) > precision:
        raise ValueError(f"censoring target {target} not reached to within {precision}")
    return c


def calibrate_censoring(
    config: DgpConfig,
    target: float | None = None,
    precision: float = 1e-3,
    draws: int = 1_000_000,
    seed: int = 20240101,
) -> tuple[float, float]:
    """Bounds (c1, c2) so that on average a fraction ``target`` of each sample is censored.

    The fraction for a bound c is the Monte Carlo mean of min(T, c)/c over
    ``draws`` draws of T (the conditional censoring probability given T),
    which is smooth and decreasing in c; bisection then runs on fixed
    draws. The paired design uses one bound calibrated on the first sample.
    """
    target = config.censor_target if target is None else target
    if target is None or not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")
    if draws < 1_000_000:
        raise ValueError("use at least 10^6 draws")
    rng = np.random.default_rng(seed)
    c1 = _bisect(_latent_times(config, 1, draws, rng), target, precision)
    if config.paired:
        return c1, c1
    c2 = _bisect(_latent_times(config, 2, draws, rng), target, precision)
    return c1, c2


def calibrated(config: DgpConfig, **kw) -> DgpConfig:
    """Config with bounds filled in (no-op without a censoring target)."""
    if config.censor_target is None or config.censor_bounds is not None:
        return config
    return config.with_bounds(*calibrate_censoring(config, **kw))
