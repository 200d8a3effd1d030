"""Weighted least absolute deviations: minimize sum_i w_i |a_i - d_i'b|.

The kernel is a vertex-to-vertex descent on the piecewise-linear objective.
A vertex is fixed by a basis of m = p+1 terms with zero residual. At each
vertex the dual certificate s_B = -D_B^{-T} g / w_B is checked (g collects
the signed directions of the non-basic terms); when some |s_j| > 1 the
objective decreases along the edge that releases basic term j, and a
weighted-median line search over the breakpoints of that edge picks the
entering term. Warm starts from a previous basis make sequential solves
along a quantile grid cheap. Stalls fall back to an LP solved by HiGHS.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import linprog

OPTIMAL = 0
DEGENERATE = 1
UNBOUNDED = 2
STALLED = 3

STATUS_NAMES = {OPTIMAL: "optimal", DEGENERATE: "degenerate", UNBOUNDED: "unbounded"}

_ZERO_RTOL = 1e-10
_CERT_TOL = 1e-9


class SolverError(RuntimeError):
    def __init__(self, message: str, status: str):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class L1Problem:
    weights: np.ndarray
    responses: np.ndarray
    directions: np.ndarray

    @classmethod
    def from_terms(cls, terms) -> "L1Problem":
        terms = list(terms)
        w = np.array([float(t[0]) for t in terms])
        a = np.array([float(t[1]) for t in terms])
        d = np.array([np.atleast_1d(np.asarray(t[2], dtype=float)) for t in terms])
        return cls(w, a, d)

    def objective(self, b) -> float:
        b = np.atleast_1d(np.asarray(b, dtype=float))
        return float(np.sum(self.weights * np.abs(self.responses - self.directions @ b)))


@numba.njit(cache=True, nogil=True)
def tie_key(i):
    """Fixed pseudo-random perturbation of row i (splitmix64), used to order zero residuals.

    Must not be affine in i: collinear rows with affinely related indices
    would otherwise stay tied under the perturbation.
    """
    z = np.uint64(i + 1) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True, nogil=True)
def vertex(A, a, basis):
    """(b, D^{-1}) for the vertex interpolating the basic rows; (None-like) det==0 flagged by ok."""
    m = A.shape[1]
    D = np.empty((m, m))
    aB = np.empty(m)
    for j in range(m):
        D[j, :] = A[basis[j], :]
        aB[j] = a[basis[j]]
    if abs(np.linalg.det(D)) < 1e-300:
        return np.zeros(m), np.zeros((m, m)), False
    Dinv = np.linalg.inv(D)
    b = np.linalg.solve(D, aB)
    return b, Dinv, True


@numba.njit(cache=True, nogil=True)
def residual_signs(A, a, b, basis, Dinv, scale, r, sgn):
    """Fill r = A b - a and sgn = perturbed residual signs (0 on basic rows).

    Responses are perturbed by eps * tie_key(i), so a zero residual on a
    non-basic row becomes eps * p_i with p_i = d_i' D^{-1} pi_B - pi_i.
    Returns v = D^{-1} pi_B.
    """
    n, m = A.shape
    v = np.zeros(m)
    for k in range(m):
        for j in range(m):
            v[k] += Dinv[k, j] * tie_key(basis[j])
    for i in range(n):
        s = -a[i]
        for k in range(m):
            s += A[i, k] * b[k]
        r[i] = s
        if abs(s) > scale[i]:
            sgn[i] = 1.0 if s > 0 else -1.0
        else:
            p = -tie_key(i)
            for k in range(m):
                p += A[i, k] * v[k]
            sgn[i] = 1.0 if p > 0 else -1.0
    for j in range(m):
        sgn[basis[j]] = 0.0
    return v


@numba.njit(cache=True, nogil=True)
def line_search(A, w, r, scale, sgn, v, u, slope, first_only):
    """Entering row along b + t u.

    Breakpoints are visited in lexicographic order (perturbed zeros first).
    With ``first_only`` the nearest one is returned, otherwise the one at
    which the slope (``slope`` at 0+) becomes nonnegative. Returns
    (row, t) with row = -1 when the objective is unbounded along u.
    """
    n, m = A.shape
    zt = np.empty(n)
    zi = np.empty(n, dtype=np.int64)
    zc = np.empty(n)
    pt = np.empty(n)
    pi_ = np.empty(n, dtype=np.int64)
    pc = np.empty(n)
    nz = 0
    npos = 0
    for i in range(n):
        if sgn[i] == 0.0:
            continue
        ci = 0.0
        cabs = 0.0
        for k in range(m):
            ci += A[i, k] * u[k]
            cabs += abs(A[i, k] * u[k])
        # directional change lost to cancellation: the row stays parallel to the edge
        if abs(ci) <= 1e-12 * cabs or sgn[i] * ci >= 0.0:
            continue
        if abs(r[i]) <= scale[i]:
            p = -tie_key(i)
            for k in range(m):
                p += A[i, k] * v[k]
            zt[nz] = -p / ci
            zi[nz] = i
            zc[nz] = ci
            nz += 1
        else:
            pt[npos] = -r[i] / ci
            pi_[npos] = i
            pc[npos] = ci
            npos += 1
    oz = np.argsort(zt[:nz], kind="mergesort")
    for q in range(nz):
        o = oz[q]
        if first_only:
            return zi[o], 0.0
        slope += 2.0 * w[zi[o]] * abs(zc[o])
        if slope >= 0.0:
            return zi[o], 0.0
    op = np.argsort(pt[:npos], kind="mergesort")
    for q in range(npos):
        o = op[q]
        if first_only:
            return pi_[o], pt[o]
        slope += 2.0 * w[pi_[o]] * abs(pc[o])
        if slope >= 0.0:
            return pi_[o], pt[o]
    return -1, 0.0


@numba.njit(cache=True, nogil=True)
def descend(A, a, w, basis, maxit):
    """Vertex descent from ``basis`` (modified in place).

    Returns (b, status, iterations) with status OPTIMAL, UNBOUNDED,
    DEGENERATE (singular basis) or STALLED (iteration cap).
    """
    n, m = A.shape
    scale = np.empty(n)
    for i in range(n):
        scale[i] = _ZERO_RTOL * (1.0 + abs(a[i]))
    r = np.empty(n)
    sgn = np.empty(n)
    it = 0
    while True:
        b, Dinv, ok = vertex(A, a, basis)
        if not ok:
            return b, DEGENERATE, it
        v = residual_signs(A, a, b, basis, Dinv, scale, r, sgn)
        g = np.zeros(m)
        for i in range(n):
            if sgn[i] != 0.0:
                for k in range(m):
                    g[k] += w[i] * sgn[i] * A[i, k]
        # certificate s_j = -(D^{-T} g)_j / w_Bj must lie in [-1, 1]
        best = -1
        best_val = 0.0
        best_sig = 0.0
        for j in range(m):
            h = 0.0
            for k in range(m):
                h += g[k] * Dinv[k, j]
            sj = -h / w[basis[j]]
            excess = abs(sj) - 1.0
            if excess > _CERT_TOL:
                nrm = 0.0
                for k in range(m):
                    nrm += Dinv[k, j] * Dinv[k, j]
                # steepest edge: slope per unit length of the edge direction
                val = w[basis[j]] * excess / np.sqrt(nrm)
                if val > best_val:
                    best_val = val
                    best = j
                    best_sig = 1.0 if sj > 0 else -1.0
        if best < 0:
            return b, OPTIMAL, it
        if it >= maxit:
            return b, STALLED, it
        it += 1
        u = best_sig * Dinv[:, best]
        slope = 0.0
        for i in range(n):
            if sgn[i] != 0.0:
                ci = 0.0
                for k in range(m):
                    ci += A[i, k] * u[k]
                slope += w[i] * sgn[i] * ci
        slope += w[basis[best]]
        enter, t = line_search(A, w, r, scale, sgn, v, u, slope, False)
        if enter < 0:
            return b, UNBOUNDED, it
        basis[best] = enter


def initial_basis(A: np.ndarray, w: np.ndarray) -> np.ndarray | None:
    """Pick m linearly independent positive-weight rows (QR with column pivoting on A^T)."""
    from scipy.linalg import qr

    n, m = A.shape
    pos = np.flatnonzero(w > 0)
    if pos.size < m:
        return None
    _, R, piv = qr(A[pos].T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    if diag.size < m or diag[m - 1] <= 1e-12 * max(diag[0], 1e-300):
        return None
    return pos[np.sort(piv[:m])].astype(np.int64)


def basis_from_solution(A: np.ndarray, a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Recover a basis of independent zero-residual rows near an LP optimum ``b``."""
    n, m = A.shape
    r = np.abs(A @ b - a) / (1.0 + np.abs(a))
    order = np.argsort(r, kind="mergesort")
    chosen: list[int] = []
    for i in order:
        if w[i] <= 0:
            continue
        cand = chosen + [int(i)]
        if np.linalg.matrix_rank(A[cand]) == len(cand):
            chosen = cand
            if len(chosen) == m:
                return np.array(chosen, dtype=np.int64)
    return None


def lp_solve(A: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Same problem as a linear program: min w'(u+v) s.t. A b + u - v = a."""
    n, m = A.shape
    cost = np.concatenate([np.zeros(m), w, w])
    A_eq = np.hstack([A, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * m + [(0, None)] * (2 * n)
    res = linprog(cost, A_eq=A_eq, b_eq=a, bounds=bounds, method="highs")
    if res.status == 3:
        raise SolverError("objective unbounded below", "unbounded")
    if res.status != 0:
        raise SolverError(f"LP fallback failed: {res.message}", "degenerate")
    return res.x[:m]


def solve_arrays(A, a, w, basis=None, maxit=None):
    """Solve with optional warm-start basis; returns (b, basis, status_name).

    Terms with zero weight are dropped before solving.
    """
    A = np.ascontiguousarray(A, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    keep = np.flatnonzero(w > 0)
    full_basis = None
    if keep.size < A.shape[0]:
        A, a, w = A[keep], a[keep], w[keep]
        if basis is not None:
            pos = np.searchsorted(keep, basis)
            if np.all(pos < keep.size) and np.array_equal(keep[np.minimum(pos, keep.size - 1)], basis):
                basis = pos
            else:
                basis = None
        full_basis = keep
    n, m = A.shape
    if basis is None:
        basis = initial_basis(A, w)
        if basis is None:
            raise SolverError("positive-weight directions do not span the coefficient space", "degenerate")
    basis = np.array(basis, dtype=np.int64)
    if maxit is None:
        maxit = 50 * (n + m)
    b, status, _ = descend(A, a, w, basis, maxit)
    if status == DEGENERATE:
        fresh = initial_basis(A, w)
        if fresh is None:
            raise SolverError("positive-weight directions do not span the coefficient space", "degenerate")
        basis = fresh
        b, status, _ = descend(A, a, w, basis, maxit)
    if status == UNBOUNDED:
        raise SolverError("objective unbounded below", "unbounded")
    if status != OPTIMAL:
        b = lp_solve(A, a, w)
        nb = basis_from_solution(A, a, w, b)
        if nb is not None:
            b2, st2, _ = descend(A, a, w, nb, maxit)
            if st2 == OPTIMAL:
                b, basis = b2, nb
    if full_basis is not None:
        basis = full_basis[basis]
    return b, basis, "optimal"


def solve_l1(problem: L1Problem, tol: float = 1e-8):
    """Minimize sum_i w_i |a_i - d_i'b|.

    Returns ``(b, status)`` where status is ``"optimal"``. A problem whose
    positive-weight directions fail to span the coefficient space raises
    :class:`SolverError` with status ``"degenerate"``.
    """
    w = np.asarray(problem.weights, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    b, _, status = solve_arrays(problem.directions, problem.responses, w)
    return b, status


def subgradient_residual(problem: L1Problem, b, zero_tol: float = 1e-9) -> float:
    """Smallest ||sum w_i s_i d_i||_inf over admissible signs, relative to sum w_i ||d_i||_inf.

    Signs of zero residuals range over [-1, 1]; the minimum over them is a
    small box-constrained least-infinity-norm problem solved as an LP.
    """
    w, a, D = problem.weights, problem.responses, np.atleast_2d(problem.directions)
    if D.shape[0] != w.size:
        D = D.reshape(w.size, -1)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    r = D @ b - a
    zero = np.abs(r) <= zero_tol * (1.0 + np.abs(a))
    fixed = (w * np.sign(r))[~zero] @ D[~zero]
    Dz = (w[zero, None] * D[zero])
    scale = float(np.sum(w * np.max(np.abs(D), axis=1)))
    if scale == 0:
        return 0.0
    if not zero.any():
        return float(np.max(np.abs(fixed))) / scale
    k, m = Dz.shape
    # min t  s.t. -t <= fixed + Dz's <= t, -1 <= s <= 1
    cost = np.zeros(k + 1)
    cost[-1] = 1.0
    A_ub = np.vstack([
        np.hstack([Dz.T, -np.ones((m, 1))]),
        np.hstack([-Dz.T, -np.ones((m, 1))]),
    ])
    b_ub = np.concatenate([-fixed, fixed])
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(-1, 1)] * k + [(0, None)], method="highs")
    return float(res.x[-1]) / scale
