import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import kstest, ortho_group

from cqcompare.bootstrap import BootstrapScheme
from cqcompare.dgp import DgpConfig, calibrated, generate
from cqcompare.estimator import PengHuang
from cqcompare.teststats import (
    BONF,
    L2,
    LINF,
    TestConfig,
    all_statistics,
    bonferroni_reject,
    decide,
    integrate_over_A,
    nearest_rank,
    run_test,
    stat_bonf,
    stat_L2,
    stat_Linf,
    two_sided_pvalue,
    upper_pvalue,
)
from cqcompare.types import PairedData, make_grid

A = make_grid(0.6, 0.01, 0.1, 0.6)
LV = A.analysis_levels


def const(v):
    return np.tile(np.asarray(v, dtype=float), (LV.size, 1))


def test_integral_examples():
    assert integrate_over_A(np.ones(LV.size), None, LV) == pytest.approx(0.5, abs=1e-10)
    assert integrate_over_A(np.array([2.5]), [1.0], [0.5], interval=False) == 2.5
    t = np.round(np.arange(0, 101) * 0.01, 10)
    assert integrate_over_A(t, None, t) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        integrate_over_A(np.ones(3), None, LV)


def test_norm_statistic_examples():
    assert stat_L2(const([0, 0, 0]), None, LV) == 0
    assert stat_L2(const([1, 0, 0]), None, LV, n=100) == pytest.approx(5.0, abs=1e-10)
    assert stat_L2(const([3, 4, 0]), None, LV, n=4) == pytest.approx(5.0, abs=1e-10)
    assert stat_Linf(const([3, 4, 0]), None, LV, n=4) == pytest.approx(4.0, abs=1e-10)
    assert stat_Linf(const([0, 0, 0]), None, LV) == 0


def test_bonferroni_statistic_examples():
    d = np.array([[1.0, -2.0, 0.0]])
    np.testing.assert_array_equal(stat_bonf(d, [1.0], [0.5], interval=False), [1, 2, 0])
    np.testing.assert_array_equal(stat_bonf(np.zeros((LV.size, 3)), None, LV), 0)


def test_bonferroni_rule():
    assert bonferroni_reject([0.004, 0.2, 0.9], 0.05)
    assert not bonferroni_reject([0.02, 0.2, 0.9], 0.05)


def test_undefined_entries_rejected():
    d = const([1, 0, 0])
    d[3, 1] = np.nan
    with pytest.raises(ValueError):
        stat_L2(d, None, LV)


def test_weights_validated():
    with pytest.raises(ValueError):
        stat_L2(const([1, 0, 0]), np.zeros(LV.size), LV)
    with pytest.raises(ValueError):
        TestConfig(weights=(1.0, -1.0))


def test_nearest_rank():
    x = np.arange(1.0, 11.0)
    assert nearest_rank(x, 0.0) == 1
    assert nearest_rank(x, 0.1) == 1
    assert nearest_rank(x, 0.11) == 2
    assert nearest_rank(x, 0.975) == 10


def test_pvalues():
    null = np.arange(1.0, 101.0)
    assert two_sided_pvalue(50.0, null) == pytest.approx(1.0)
    assert two_sided_pvalue(0.5, null) == 0
    assert two_sided_pvalue(100.0, null) == pytest.approx(0.02)
    assert upper_pvalue(96.0, null) == pytest.approx(0.05)


@given(
    arrays(np.float64, (LV.size, 3), elements=st.floats(-5, 5)),
    st.floats(1.0, 10.0),
)
def test_statistics_nonnegative_and_monotone_in_scale(d, lam):
    a, b = all_statistics(d, None, LV), all_statistics(lam * d, None, LV)
    for name in (L2, LINF):
        assert a[name] >= 0
        assert b[name] >= a[name] * (1 - 1e-12)
    assert np.all(b[BONF] >= a[BONF] * (1 - 1e-12))


@given(arrays(np.float64, (LV.size, 1), elements=st.floats(-5, 5)))
def test_one_component_statistics_coincide(d):
    s = all_statistics(d, None, LV)
    assert s[L2] == s[LINF] == s[BONF][0]


def test_l2_orthogonal_invariance(rng):
    d = rng.normal(size=(LV.size, 3))
    q = ortho_group.rvs(3, random_state=1)
    assert stat_L2(d @ q.T, None, LV) == pytest.approx(stat_L2(d, None, LV), rel=1e-12)


def test_decide_two_sided_and_bonferroni_interval():
    null = {L2: np.arange(1.0, 101.0), LINF: np.arange(1.0, 101.0), BONF: np.tile(np.arange(1.0, 101.0)[:, None], 2)}
    point = {L2: 100.5, LINF: 50.0, BONF: np.array([100.5, 50.0])}
    _, p, iv, rej = decide(point, null, 0.05, (BONF, L2, LINF))
    assert rej[L2] and not rej[LINF] and rej[BONF]
    assert iv[L2] == [3.0, 98.0]
    assert iv[BONF] == [[2.0, 2.0], [99.0, 99.0]]
    assert p[BONF] == [0.0, 1.0]


def _paired(cfg, seed):
    return generate(calibrated(cfg), np.random.default_rng(seed))


def test_identical_paired_samples_never_reject():
    data = _paired(DgpConfig(paired=True, n1=100, n2=100, censor_target=0.2), 3)
    same = PairedData(data.sample1, data.sample1)
    res, _, _ = run_test(same, PengHuang(), make_grid(0.5, 0.05, 0.3, 0.5), BootstrapScheme(paired=True), TestConfig(n_boot=20, standardize=False))
    assert all(v == 0 or v == [0.0, 0.0, 0.0] for v in res.statistics.values())
    assert not any(res.reject.values())


def test_gross_violation_rejects():
    cfg = DgpConfig(beta1=(0.0, -0.5, 0.5), beta2=(10.0, -0.5, 0.5), n1=200, n2=200, censor_target=0.2)
    data = generate(calibrated(cfg), np.random.default_rng(8))
    res, _, _ = run_test(data, PengHuang(), make_grid(0.5, 0.01, 0.5, 0.5), BootstrapScheme(), TestConfig(n_boot=200, seed=2))
    assert all(res.reject.values())
    assert res.p_values[L2] < 0.01 and res.p_values[LINF] < 0.01
    assert min(res.p_values[BONF]) < 0.01


def test_component_subset_validated():
    with pytest.raises(ValueError):
        TestConfig(component_subset=(0, 0)).check_components(3)
    with pytest.raises(ValueError):
        TestConfig(component_subset=(3,)).check_components(3)
    TestConfig(component_subset=(1,)).check_components(3)


@pytest.mark.slow
def test_warp_pvalues_uniform_under_null(median_study):
    label = median_study.rows[0]["label"]
    points, nulls = median_study.statistics[label]
    for name in (L2, LINF):
        null = np.array([q[name] for q in nulls])
        p = np.array([two_sided_pvalue(t[name], null) for t in points])
        assert kstest(p, "uniform").pvalue > 0.01
