"""Bootstrap replicates of the two-sample difference process.

Two schemes are supported. The multiplier scheme refits each sample with
i.i.d. Exp(1) observation weights (shared across the two samples in the
paired design); the naive scheme refits on rows drawn with replacement
(whole subjects in the paired design).

Every replicate gets its own random stream derived from a master seed and
the replicate index, so results do not depend on execution order or on the
number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .estimator import Estimator, fit_covering
from .types import BreakdownError, DataError, IndependentData, PairedData, SampleData, TauGrid

MULTIPLIER = "multiplier"
NAIVE = "naive"

FAILURE_LIMIT = 0.05


class BootstrapError(RuntimeError):
    """Too many bootstrap replicates could not be fitted."""


@dataclass(frozen=True)
class BootstrapScheme:
    kind: str = MULTIPLIER
    paired: bool = False

    def __post_init__(self):
        if self.kind not in (MULTIPLIER, NAIVE):
            raise ValueError(f"unknown bootstrap scheme {self.kind!r}")


@dataclass(frozen=True, eq=False)
class BootstrapDraws:
    """Centered difference processes, shape (N, |A|, p+1), scaled by sqrt(n_effective)."""

    draws: np.ndarray
    n_effective: int
    failed: int = 0
    retried: int = 0

    def __post_init__(self):
        d = np.asarray(self.draws, dtype=float)
        if d.ndim != 3 or d.shape[0] < 1:
            raise ValueError("draws must have shape (N, |A|, p+1) with N >= 1")
        if not np.all(np.isfinite(d)):
            raise ValueError("draws must be finite")
        object.__setattr__(self, "draws", d)

    @property
    def N(self) -> int:
        return self.draws.shape[0]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    sigma: np.ndarray


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the counter ``key`` under the master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def as_seed(rng) -> int:
    """Master seed from an int or by drawing one from a Generator."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        return 0
    return int(rng)


def draw_multipliers(n1: int, n2: int, paired: bool, rng: np.random.Generator):
    if n1 < 1 or n2 < 1:
        raise ValueError("sample sizes must be positive")
    if paired:
        if n1 != n2:
            raise ValueError("paired multipliers need n1 == n2")
        eta = rng.standard_exponential(n1)
        return eta, eta.copy()
    return rng.standard_exponential(n1), rng.standard_exponential(n2)


def naive_resample(data, rng: np.random.Generator, max_tries: int = 100):
    """Rows drawn with replacement; subjects are kept together in the paired design."""
    for _ in range(max_tries):
        try:
            if isinstance(data, PairedData):
                return data.take(rng.integers(0, data.n, data.n))
            if isinstance(data, IndependentData):
                s1, s2 = data.sample1, data.sample2
                return IndependentData(
                    s1.take(rng.integers(0, s1.n, s1.n)),
                    s2.take(rng.integers(0, s2.n, s2.n)),
                )
            if isinstance(data, SampleData):
                return data.take(rng.integers(0, data.n, data.n))
        except DataError:
            continue
        raise TypeError(f"cannot resample {type(data).__name__}")
    raise DataError(f"no resample with events after {max_tries} tries")


def effective_n(data) -> int:
    if isinstance(data, PairedData):
        return data.n
    return data.sample1.n + data.sample2.n


def point_fits(data, estimator: Estimator, grid: TauGrid):
    return (
        fit_covering(estimator, data.sample1, grid),
        fit_covering(estimator, data.sample2, grid),
    )


def _replicate(data, estimator, grid, scheme, base1, base2, rng):
    """One centered replicate on A, or None when a refit breaks down."""
    try:
        if scheme.kind == MULTIPLIER:
            e1, e2 = draw_multipliers(data.sample1.n, data.sample2.n, scheme.paired, rng)
            f1 = estimator.fit(data.sample1, grid, e1)
            f2 = estimator.fit(data.sample2, grid, e2)
        else:
            res = naive_resample(data, rng)
            f1 = estimator.fit(res.sample1, grid)
            f2 = estimator.fit(res.sample2, grid)
    except DataError:
        return None
    if not (f1.covers_analysis() and f2.covers_analysis()):
        return None
    return (f1.require_analysis() - base1) - (f2.require_analysis() - base2)


def difference_draws(
    data,
    estimator: Estimator,
    grid: TauGrid,
    scheme: BootstrapScheme,
    N: int,
    rng,
    *,
    retries: int = 5,
    threads: int = 1,
    fits=None,
):
    """Point process sqrt(n)(b1 - b2) on A and N centered bootstrap replicates.

    ``rng`` is a master seed or a Generator (one seed is drawn from it).
    Replicate j uses streams (seed, j, attempt); a replicate whose refit
    breaks down is redrawn up to ``retries`` times and then dropped. If more
    than 5% of the replicates are dropped the call fails.
    """
    if N < 1:
        raise ValueError("at least one draw required")
    paired = isinstance(data, PairedData)
    if scheme.paired != paired:
        raise ValueError("scheme.paired does not match the data design")
    if scheme.kind == MULTIPLIER and not getattr(estimator, "weighted", False):
        raise ValueError("the multiplier bootstrap needs an estimator that honours observation weights")
    seed = as_seed(rng)
    f1, f2 = fits if fits is not None else point_fits(data, estimator, grid)
    base1, base2 = f1.require_analysis(), f2.require_analysis()
    n = effective_n(data)
    root = math.sqrt(n)

    def task(j):
        for attempt in range(retries + 1):
            rep = _replicate(data, estimator, grid, scheme, base1, base2, stream(seed, j, attempt))
            if rep is not None:
                return rep, attempt
        return None, retries + 1

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(N)))
    else:
        results = [task(j) for j in range(N)]
    kept = [r for r, _ in results if r is not None]
    failed = N - len(kept)
    retried = sum(a for _, a in results)
    if failed > FAILURE_LIMIT * N or not kept:
        raise BootstrapError(f"{failed} of {N} bootstrap replicates broke down before covering A")
    draws = BootstrapDraws(root * np.stack(kept), n, failed=failed, retried=retried)
    return root * (base1 - base2), draws


def covariance_estimate(draws: BootstrapDraws) -> CovarianceEstimate:
    """Per-tau covariance of the draws (divisor N), symmetrized."""
    d = draws.draws if isinstance(draws, BootstrapDraws) else np.asarray(draws, dtype=float)
    if d.shape[0] < 2:
        raise ValueError("covariance needs at least two draws")
    c = d - d.mean(axis=0)
    sigma = np.einsum("nak,nal->akl", c, c) / d.shape[0]
    return CovarianceEstimate(0.5 * (sigma + np.swapaxes(sigma, 1, 2)))


def inv_sqrt_psd(m, floor_ratio: float = 1e-10, sym_tol: float = 1e-8) -> np.ndarray:
    """U diag(lambda^-1/2) U' with eigenvalues floored at floor_ratio * max(lambda)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("need a square matrix")
    if np.max(np.abs(m - m.T), initial=0.0) > sym_tol * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    lam, U = np.linalg.eigh(0.5 * (m + m.T))
    top = lam.max()
    if top <= 0:
        top = 1.0
    lam = np.maximum(lam, floor_ratio * top)
    return (U / np.sqrt(lam)) @ U.T


def standardizers(cov: CovarianceEstimate, floor_ratio: float = 1e-10) -> np.ndarray:
    """Sigma(tau)^{-1/2} for every tau in A, shape (|A|, k, k)."""
    return np.stack([inv_sqrt_psd(s, floor_ratio) for s in cov.sigma])


def standardize(process: np.ndarray, roots: np.ndarray) -> np.ndarray:
    """Apply Sigma(tau)^{-1/2} pointwise; works on (|A|, k) or (N, |A|, k)."""
    return np.einsum("akl,...al->...ak", roots, process)
