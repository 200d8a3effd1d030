import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqcompare.solver import L1Problem, SolverError, lp_solve, solve_l1, subgradient_residual


def vertex_objectives(problem):
    """Objective at every point interpolating m of the terms (brute-force oracle)."""
    D, a = problem.directions, problem.responses
    m = D.shape[1]
    vals = []
    for rows in itertools.combinations(range(len(a)), m):
        rows = list(rows)
        if abs(np.linalg.det(D[rows])) < 1e-9:
            continue
        vals.append(problem.objective(np.linalg.solve(D[rows], a[rows])))
    return vals


def test_single_term():
    b, status = solve_l1(L1Problem.from_terms([(1, 3.0, (1,))]))
    assert status == "optimal"
    assert b[0] == pytest.approx(3.0)


def test_median_of_three():
    b, _ = solve_l1(L1Problem.from_terms([(1, 1, (1,)), (1, 2, (1,)), (1, 9, (1,))]))
    assert b[0] == pytest.approx(2.0)


def test_weighted_median_matches_breakpoint_search():
    prob = L1Problem.from_terms([(3, 1, (1,)), (1, 2, (1,)), (1, 9, (1,))])
    candidates = [1.0, 2.0, 9.0]
    best = min(candidates, key=prob.objective)
    b, _ = solve_l1(prob)
    assert b[0] == pytest.approx(best) == pytest.approx(1.0)


def test_collinear_exact_fit():
    prob = L1Problem.from_terms([(1, 0, (1, 0)), (1, 1, (1, 1)), (1, 2, (1, 2))])
    b, _ = solve_l1(prob)
    np.testing.assert_allclose(b, [0.0, 1.0], atol=1e-12)
    assert prob.objective(b) == pytest.approx(0.0, abs=1e-12)


def test_degenerate_span():
    with pytest.raises(SolverError) as err:
        solve_l1(L1Problem.from_terms([(1, 0, (1, 0)), (1, 1, (2, 0))]))
    assert err.value.status == "degenerate"


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        solve_l1(L1Problem(np.array([-1.0]), np.array([0.0]), np.array([[1.0]])))


problems = st.integers(1, 2).flatmap(
    lambda p: st.integers(p + 1, 12).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 4), min_size=n, max_size=n),
            st.lists(st.integers(-5, 5), min_size=n, max_size=n),
            st.lists(st.lists(st.integers(-3, 3), min_size=p, max_size=p), min_size=n, max_size=n),
        )
    )
)


def _build(raw):
    w, a, z = raw
    D = np.column_stack([np.ones(len(a)), np.array(z, dtype=float)])
    return L1Problem(np.array(w, dtype=float), np.array(a, dtype=float) / 2, D)


def _spans(prob):
    pos = prob.weights > 0
    return pos.sum() >= prob.directions.shape[1] and np.linalg.matrix_rank(prob.directions[pos]) == prob.directions.shape[1]


@given(problems)
def test_brute_force_optimality(raw):
    prob = _build(raw)
    if not _spans(prob):
        return
    b, _ = solve_l1(prob)
    pos = L1Problem(prob.weights[prob.weights > 0], prob.responses[prob.weights > 0], prob.directions[prob.weights > 0])
    assert prob.objective(b) <= min(vertex_objectives(pos)) + 1e-9
    assert subgradient_residual(prob, b) <= 1e-8


@given(problems, st.sampled_from([0.001, 0.5, 7.0, 1e4]))
def test_weight_scaling(raw, lam):
    prob = _build(raw)
    if not _spans(prob):
        return
    b, _ = solve_l1(prob)
    scaled = L1Problem(lam * prob.weights, prob.responses, prob.directions)
    bs, _ = solve_l1(scaled)
    assert scaled.objective(bs) == pytest.approx(scaled.objective(b), rel=1e-9, abs=1e-9)
    assert subgradient_residual(scaled, bs) <= 1e-8


@given(problems, st.integers(-5, 5), st.integers(-3, 3))
def test_zero_weight_term_is_ignored(raw, a_new, z_new):
    prob = _build(raw)
    if not _spans(prob):
        return
    b, _ = solve_l1(prob)
    m = prob.directions.shape[1]
    extra = np.r_[1.0, np.full(m - 1, float(z_new))]
    bigger = L1Problem(
        np.r_[prob.weights, 0.0],
        np.r_[prob.responses, float(a_new)],
        np.vstack([prob.directions, extra]),
    )
    b2, _ = solve_l1(bigger)
    np.testing.assert_array_equal(b, b2)


def test_deterministic(rng):
    D = np.column_stack([np.ones(200), rng.random((200, 2))])
    prob = L1Problem(rng.exponential(size=200), rng.normal(size=200), D)
    b1, _ = solve_l1(prob)
    b2, _ = solve_l1(prob)
    np.testing.assert_array_equal(b1, b2)


@pytest.mark.parametrize("ties", [False, True])
def test_agrees_with_lp(rng, ties):
    for _ in range(30):
        n = int(rng.integers(5, 120))
        D = np.column_stack([np.ones(n), rng.random((n, 2))])
        a = rng.normal(size=n)
        if ties:
            D = np.round(D, 1)
            a = np.round(a, 1)
        w = rng.exponential(size=n)
        prob = L1Problem(w, a, D)
        if not _spans(prob):
            continue
        b, _ = solve_l1(prob)
        ref = lp_solve(D, a, w)
        assert prob.objective(b) <= prob.objective(ref) + 1e-9 * (1 + prob.objective(ref))
