"""Censored quantile regression by the martingale estimating equation.

For each grid level tau_k the fit solves

    sum_i eta_i Z_i [ D_i I(log X_i <= Z_i'b) - w_ik ] = 0,
    w_ik = int_0^tau_k I(log X_i >= Z_i'b(u)) dH(u),

with H(u) = -log(1 - u). By default the integral is taken exactly along
the piecewise constant path b(u), which is followed in h = H(u) between
grid levels. ``integration="grid"`` uses the left-endpoint rule

    w_ik = sum_{r<k} I(log X_i >= Z_i'b_r) (H(tau_{r+1}) - H(tau_r))

with every observation at risk on the first step. Where the exact path
starts to chatter (a censored point sliding along the fitted line), the
rest of that grid cell falls back to the left-endpoint rule.

The equation is the subgradient condition of

    sum_i eta_i D_i |log X_i - Z_i'b| + |R + b' sum_l eta_l D_l Z_l|
                                      + |R - b' sum_l 2 eta_l w_lk Z_l|

for a constant R large enough that both pseudo residuals stay positive.
Each level is warm-started from the optimal basis of the previous one.
"""
from __future__ import annotations

import math
from typing import Protocol

import numba
import numpy as np

from .solver import (
    OPTIMAL,
    UNBOUNDED,
    basis_from_solution,
    descend,
    initial_basis,
    line_search,
    lp_solve,
    residual_signs,
    vertex,
)
from .types import BreakdownError, CoefficientProcess, SampleData, TauGrid

SINGLE_LEVEL = "single-level"
UNIFORM = "uniform-over-interval"


def cumulative_hazard(u):
    """H(u) = -log(1 - u) on [0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise ValueError("cumulative_hazard needs 0 <= u < 1")
    out = -np.log1p(-arr)
    return float(out) if np.ndim(u) == 0 else out


class Estimator(Protocol):
    """Anything that maps (sample, grid, multipliers) to a coefficient process.

    ``capability`` is SINGLE_LEVEL or UNIFORM; ``weighted`` tells whether the
    fit honours per-observation multipliers (required by the multiplier
    bootstrap). With unit multipliers the fit must equal the unweighted one.
    """

    capability: str
    weighted: bool

    def fit(self, sample: SampleData, grid: TauGrid, multipliers=None) -> CoefficientProcess: ...


# status codes of the path kernels
_DONE = 0
_BREAK_RISK = 1
_BREAK_PSEUDO = 2
_NEED_LP = 3

_RISK_RTOL = 1e-10
_CERT_SLACK = 1e-6


@numba.njit(cache=True, nogil=True)
def _at_risk(Y, Z, b, rho):
    n, m = Z.shape
    for i in range(n):
        fit = 0.0
        for j in range(m):
            fit += Z[i, j] * b[j]
        rho[i] = 1.0 if Y[i] >= fit - _RISK_RTOL * (1.0 + abs(Y[i])) else 0.0


@numba.njit(cache=True, nogil=True)
def _events_at_risk(rho, ev, wev):
    tot = 0.0
    for q in range(ev.shape[0]):
        tot += wev[q] * rho[ev[q]]
    return tot


@numba.njit(cache=True, nogil=True)
def _ph_grid(A, a, wt, Y, Z, eta, ev, dH, R, basis, k0, beta, wcum, wgrid, maxit):
    """Left-endpoint rule: the risk set is frozen at the previous level's fit.

    ``A``/``a``/``wt`` hold the event terms followed by the two pseudo terms;
    the last row of ``A`` is rewritten at every level. Returns (next_k, status).
    """
    ne = A.shape[0] - 2
    n, m = Z.shape
    M = dH.shape[0]
    rho = np.ones(n)
    k = k0
    while k < M:
        if k > 0:
            _at_risk(Y, Z, beta[k - 1], rho)
            if _events_at_risk(rho, ev, wt[:ne]) <= 0.0:
                return k, _BREAK_RISK
        for i in range(n):
            wcum[i] += rho[i] * dH[k]
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += 2.0 * eta[i] * wcum[i] * Z[i, j]
            A[ne + 1, j] = s
        b, status, _ = descend(A, a, wt, basis, maxit)
        if status == UNBOUNDED:
            return k, _BREAK_PSEUDO
        if status != OPTIMAL:
            return k, _NEED_LP
        for j in range(m):
            beta[k, j] = b[j]
        for i in range(n):
            wgrid[k, i] = wcum[i]
        # pseudo residuals must stay positive, otherwise the equation has no bounded root
        for q in range(ne, ne + 2):
            res = a[q]
            for j in range(m):
                res -= A[q, j] * b[j]
            if res < 0.5 * R:
                return k, _BREAK_PSEUDO
        k += 1
    return k, _DONE


@numba.njit(cache=True, nogil=True)
def _ph_exact(A, a, wt, Y, Z, eta, ev, Hlev, basis, k0, hstate, wcum, beta, wgrid, maxzero):
    """Follow the solution continuously in h = H(tau) from ``hstate[0]``.

    Between breakpoints the fit sits at a vertex of the event terms and the
    weights grow at rate I(log X_i >= Z_i'b). The objective at level h is
    sum_e eta_e |Y_e - Z_e'b| + b'(sum_e eta_e Z_e - 2 sum_i eta_i w_i(h) Z_i),
    so the dual certificate is affine in h and the basis changes exactly when
    one of its entries reaches +-1. ``A``/``a``/``wt`` hold event terms only.
    """
    ne, m = A.shape
    n = Z.shape[0]
    M = Hlev.shape[0]
    scale = np.empty(ne)
    for q in range(ne):
        scale[q] = 1e-10 * (1.0 + abs(a[q]))
    c0 = np.zeros(m)
    for q in range(ne):
        for j in range(m):
            c0[j] += wt[q] * A[q, j]
    r = np.empty(ne)
    sgn = np.empty(ne)
    rho = np.empty(n)
    h = hstate[0]
    k = k0
    zero_run = 0
    maxpiv = 20 * (ne + m)
    while k < M:
        Hk = Hlev[k]
        last_left = -1
        last_entered = -1
        reversals = 0
        pivots = 0
        while True:
            b, Dinv, ok = vertex(A, a, basis)
            if not ok:
                hstate[0] = h
                return k, _NEED_LP
            v = residual_signs(A, a, b, basis, Dinv, scale, r, sgn)
            _at_risk(Y, Z, b, rho)
            q0 = c0.copy()
            q1 = np.zeros(m)
            for i in range(n):
                if eta[i] != 0.0:
                    for j in range(m):
                        q0[j] -= 2.0 * eta[i] * wcum[i] * Z[i, j]
                        q1[j] -= 2.0 * eta[i] * rho[i] * Z[i, j]
            for q in range(ne):
                if sgn[q] != 0.0:
                    for j in range(m):
                        q0[j] += wt[q] * sgn[q] * A[q, j]
            delta = np.inf
            leave = -1
            sig = 1.0
            bad = False
            for j in range(m):
                t0 = 0.0
                t1 = 0.0
                for kk in range(m):
                    t0 += q0[kk] * Dinv[kk, j]
                    t1 += q1[kk] * Dinv[kk, j]
                wj = wt[basis[j]]
                s0 = -t0 / wj
                s1 = -t1 / wj
                if abs(s0) > 1.0 + _CERT_SLACK:
                    bad = True
                if s1 > 0.0:
                    d = (1.0 - s0) / s1
                elif s1 < 0.0:
                    d = (-1.0 - s0) / s1
                else:
                    continue
                if d < 0.0:
                    d = 0.0
                if d < delta:
                    delta = d
                    leave = j
                    sig = 1.0 if s1 > 0.0 else -1.0
            if bad:
                hstate[0] = h
                return k, _NEED_LP
            if h + delta >= Hk:
                for i in range(n):
                    wcum[i] += rho[i] * (Hk - h)
                h = Hk
                break
            for i in range(n):
                wcum[i] += rho[i] * delta
            h += delta
            if delta <= 1e-13 * (1.0 + Hk):
                zero_run += 1
            else:
                zero_run = 0
            u = sig * Dinv[:, leave]
            enter, _t = line_search(A, wt, r, scale, sgn, v, u, 0.0, True)
            if enter < 0:
                hstate[0] = h
                return k, _BREAK_PSEUDO
            # an immediate reversal along the same edge means the path slides
            if enter == last_left and basis[leave] == last_entered:
                reversals += 1
            pivots += 1
            if zero_run > maxzero or reversals > 2 or pivots > maxpiv:
                hstate[0] = h
                return k, _NEED_LP
            last_left = basis[leave]
            last_entered = enter
            basis[leave] = enter
        for j in range(m):
            beta[k, j] = b[j]
        for i in range(n):
            wgrid[k, i] = wcum[i]
        k += 1
        if k < M:
            _at_risk(Y, Z, b, rho)
            if _events_at_risk(rho, ev, wt) <= 0.0:
                hstate[0] = h
                return k, _BREAK_RISK
    hstate[0] = h
    return k, _DONE


def big_constant(sample: SampleData, eta: np.ndarray) -> float:
    zmax = float(np.max(np.sum(np.abs(sample.covariates), axis=1)))
    return 1e6 * (1.0 + float(np.sum(eta * (1.0 + np.abs(sample.log_time)))) * zmax)


def _augmented(Zev, Yev, wev, c0, G, R):
    ne, m = Zev.shape
    A = np.empty((ne + 2, m))
    A[:ne] = Zev
    A[ne] = -c0
    A[ne + 1] = 2.0 * G
    a = np.concatenate([Yev, [R, R]])
    wt = np.concatenate([wev, [1.0, 1.0]])
    return A, a, wt


def _solve_augmented(A, a, wt, basis, maxit):
    """Optimal vertex of the augmented problem; None when it is unbounded or stuck."""
    b, st, _ = descend(A, a, wt, basis, maxit)
    if st == UNBOUNDED:
        return None
    if st != OPTIMAL:
        b = lp_solve(A, a, wt)
        nb = basis_from_solution(A, a, wt, b)
        if nb is None:
            return None
        basis[:] = nb
        b, st, _ = descend(A, a, wt, basis, maxit)
        if st != OPTIMAL:
            return None
    return b


def _check_multipliers(multipliers, n):
    if multipliers is None:
        return np.ones(n)
    eta = np.asarray(multipliers, dtype=float)
    if eta.shape != (n,) or np.any(~np.isfinite(eta)) or np.any(eta < 0) or not np.any(eta > 0):
        raise ValueError("multipliers must be finite, nonnegative and not all zero")
    return eta


def ph_fit(
    sample: SampleData,
    grid: TauGrid,
    multipliers=None,
    *,
    integration: str = "exact",
    maxit: int | None = None,
) -> CoefficientProcess:
    """Fit beta(tau_k) on every grid level until identifiability breaks down.

    ``integration="exact"`` integrates the risk indicators along the exact
    solution path in H(tau), so the weights are those of the continuous
    equation evaluated on the grid. ``integration="grid"`` uses the
    left-endpoint rule with the risk set of the previous grid level.

    Rows from the first failing level on are NaN and ``defined_upto`` counts
    the defined rows. Breakdown is declared when no event with positive
    multiplier remains at risk, or when the equation has no bounded root
    (a pseudo residual would turn negative).
    """
    if integration not in ("exact", "grid"):
        raise ValueError(f"unknown integration mode {integration!r}")
    n, m = sample.n, sample.p + 1
    eta = _check_multipliers(multipliers, n)
    Y = np.ascontiguousarray(sample.log_time)
    Z = np.ascontiguousarray(sample.covariates)
    ev = np.flatnonzero((sample.event == 1) & (eta > 0)).astype(np.int64)
    M = grid.M
    beta = np.full((M, m), np.nan)
    wgrid = np.full((M, n), np.nan)
    if ev.size < m:
        return CoefficientProcess(grid, beta, 0, status="too few events", cum_weights=wgrid)
    R = big_constant(sample, eta)
    wev = eta[ev]
    Zev = np.ascontiguousarray(Z[ev])
    Yev = np.ascontiguousarray(Y[ev])
    c0 = wev @ Zev
    Hlev = cumulative_hazard(grid.levels)
    if maxit is None:
        maxit = 50 * (ev.size + m)
    basis = initial_basis(Zev, wev)
    if basis is None:
        return CoefficientProcess(grid, beta, 0, status="degenerate design", cum_weights=wgrid)
    if integration == "grid":
        k, status = _fit_grid(Y, Z, eta, ev, Zev, Yev, wev, c0, Hlev, R, basis, beta, wgrid, maxit)
    else:
        k, status = _fit_exact(Y, Z, eta, ev, Zev, Yev, wev, c0, Hlev, R, basis, beta, wgrid, maxit)
    beta[k:] = np.nan
    wgrid[k:] = np.nan
    return CoefficientProcess(grid, beta, k, status=status, cum_weights=wgrid)


def _fit_grid(Y, Z, eta, ev, Zev, Yev, wev, c0, Hlev, R, basis, beta, wgrid, maxit):
    A, a, wt = _augmented(Zev, Yev, wev, c0, np.zeros(Z.shape[1]), R)
    dH = np.diff(np.concatenate([[0.0], Hlev]))
    wcum = np.zeros(Y.size)
    k = 0
    while k < Hlev.size:
        k, code = _ph_grid(A, a, wt, Y, Z, eta, ev, dH, R, basis, k, beta, wcum, wgrid, maxit)
        if code == _DONE:
            return k, "ok"
        if code != _NEED_LP:
            return k, "breakdown"
        # rare degenerate vertex: solve this level as an LP and resume from its basis
        b = _solve_augmented(A, a, wt, basis, maxit)
        if b is None:
            return k, "breakdown"
        if np.any(a[-2:] - A[-2:] @ b < 0.5 * R):
            return k, "breakdown"
        beta[k] = b
        wgrid[k] = wcum
        k += 1
    return k, "ok"


def _fit_exact(Y, Z, eta, ev, Zev, Yev, wev, c0, Hlev, R, basis, beta, wgrid, maxit):
    n, m = Z.shape
    ne = ev.size
    M = Hlev.size
    h = 1e-8 * Hlev[0]
    wcum = np.full(n, h)
    hstate = np.array([h])
    k = 0
    pending = False
    while True:
        # optimal vertex of the augmented problem at the current weights
        A, a, wt = _augmented(Zev, Yev, wev, c0, (eta * wcum) @ Z, R)
        aug_basis = basis.copy()
        b = _solve_augmented(A, a, wt, aug_basis, maxit)
        if b is None or np.any(aug_basis >= ne) or np.any(a[-2:] - A[-2:] @ b < 0.5 * R):
            return k, "breakdown"
        basis[:] = aug_basis
        if pending:
            beta[k] = b
            wgrid[k] = wcum
            k += 1
            pending = False
            if k == M:
                return k, "ok"
            if not np.any(Yev >= Zev @ b - _RISK_RTOL * (1.0 + np.abs(Yev))):
                return k, "breakdown"
        k, code = _ph_exact(Zev, Yev, wev, Y, Z, eta, ev, Hlev, basis, k, hstate, wcum, beta, wgrid, 20 * (m + 1))
        if code == _DONE:
            return k, "ok"
        if code != _NEED_LP:
            return k, "breakdown"
        # The path slides along an edge (a censored point switches the risk set
        # back and forth) or hit a degenerate vertex: finish this grid cell with
        # the risk set of the current vertex.
        bcur = np.linalg.lstsq(Zev[basis], Yev[basis], rcond=None)[0]
        rho = Y >= Z @ bcur - _RISK_RTOL * (1.0 + np.abs(Y))
        wcum += rho * (Hlev[k] - hstate[0])
        hstate[0] = Hlev[k]
        pending = True


def cumulative_weights(sample: SampleData, process: CoefficientProcess, upto: int | None = None) -> np.ndarray:
    """w[i, k] for k = 1 .. upto (column k-1).

    Taken from the fit when it recorded them, otherwise rebuilt from the
    fitted rows with the left-endpoint rule.
    """
    grid = process.grid
    upto = process.defined_upto if upto is None else upto
    if process.cum_weights is not None:
        return process.cum_weights[:upto].T.copy()
    H = cumulative_hazard(np.concatenate([[0.0], grid.levels]))
    dH = np.diff(H)[:upto]
    w = np.empty((sample.n, upto))
    acc = np.zeros(sample.n)
    y = sample.log_time
    for k in range(upto):
        if k == 0:
            at_risk = np.ones(sample.n, dtype=bool)
        else:
            at_risk = y >= sample.covariates @ process.beta[k - 1] - _RISK_RTOL * (1.0 + np.abs(y))
        acc = acc + at_risk * dH[k]
        w[:, k] = acc
    return w


def estimating_function(sample: SampleData, process: CoefficientProcess, k: int, multipliers=None) -> np.ndarray:
    """(1/n) sum_i eta_i Z_i [D_i I(log X_i <= Z_i'b_k) - w_ik] at grid index k (1-based)."""
    if not 1 <= k <= process.defined_upto:
        raise IndexError(f"grid index {k} outside the defined range 1..{process.defined_upto}")
    eta = np.ones(sample.n) if multipliers is None else np.asarray(multipliers, dtype=float)
    w = cumulative_weights(sample, process, upto=k)[:, k - 1]
    b = process.beta[k - 1]
    y = sample.log_time
    below = y <= sample.covariates @ b + _RISK_RTOL * (1.0 + np.abs(y))
    resid = sample.event * below - w
    return (eta * resid) @ sample.covariates / sample.n


def nelson_aalen_quantiles(log_time, event, taus) -> np.ndarray:
    """inf{t : Lambda_NA(t) >= H(tau)} on the log-time scale (NaN when never reached)."""
    y = np.asarray(log_time, dtype=float)
    d = np.asarray(event)
    times = np.unique(y[d == 1])
    at_risk = np.array([(y >= t).sum() for t in times])
    deaths = np.array([((y == t) & (d == 1)).sum() for t in times])
    cumhaz = np.cumsum(deaths / at_risk)
    out = np.full(len(taus), np.nan)
    for q, tau in enumerate(taus):
        target = -math.log1p(-tau)
        hit = np.flatnonzero(cumhaz >= target - 1e-12)
        if hit.size:
            out[q] = times[hit[0]]
    return out


class PengHuang:
    """Built-in estimator; valid uniformly over an interval of quantile levels."""

    capability = UNIFORM
    weighted = True

    def __init__(self, integration: str = "exact"):
        self.integration = integration

    def fit(self, sample: SampleData, grid: TauGrid, multipliers=None) -> CoefficientProcess:
        return ph_fit(sample, grid, multipliers, integration=self.integration)


def fit_covering(estimator: Estimator, sample: SampleData, grid: TauGrid, multipliers=None) -> CoefficientProcess:
    """Fit and insist that the analysis set is covered."""
    proc = estimator.fit(sample, grid, multipliers)
    if not proc.covers_analysis():
        raise BreakdownError(
            f"estimation breaks down before the analysis set is covered "
            f"(largest estimable tau: {proc.max_tau}, needed {grid.analysis_levels[-1]:.4g})",
            proc.max_tau,
        )
    return proc
