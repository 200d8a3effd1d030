import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqcompare.types import (
    BreakdownError,
    CoefficientProcess,
    DataError,
    Observation,
    PairedData,
    SampleData,
    make_grid,
    validate_sample,
)


def test_validate_sample_log_transform():
    s = validate_sample([(1.0, 1, [0.3]), (2.0, 0, [0.7])])
    assert s.p == 1
    np.testing.assert_allclose(s.log_time, [0.0, math.log(2)])
    np.testing.assert_array_equal(s.covariates[:, 0], 1.0)


@pytest.mark.parametrize(
    "rows, message",
    [
        ([(0.0, 1, [0.3])], "nonpositive time"),
        ([(1.0, 0, [0.3]), (2.0, 0, [0.1])], "no events"),
        ([(1.0, 1, [0.3]), (2.0, 0, [0.1, 0.2])], "inconsistent covariate length"),
    ],
)
def test_validate_sample_errors(rows, message):
    with pytest.raises(DataError, match=message):
        validate_sample(rows)


@given(
    st.lists(
        st.tuples(
            st.floats(1e-3, 1e3),
            st.integers(0, 1),
            st.lists(st.floats(-10, 10), min_size=2, max_size=2),
        ),
        min_size=1,
        max_size=20,
    )
)
def test_export_roundtrip(rows):
    rows = [(t, 1, z) if k == 0 else (t, d, z) for k, (t, d, z) in enumerate(rows)]
    s = validate_sample(rows)
    again = validate_sample(s.export_rows())
    np.testing.assert_array_equal(again.event, s.event)
    np.testing.assert_array_equal(again.covariates, s.covariates)
    # exp/log round trip is exact to a couple of ulps
    np.testing.assert_allclose(again.log_time, s.log_time, rtol=0, atol=1e-15)


def test_sample_roundtrip_bit_exact():
    s = SampleData(np.log([0.5, 1.5, 3.0]), np.array([1, 0, 1]), np.array([[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]]))
    assert SampleData.from_observations(s.observations) == s


def test_observation_invariants():
    with pytest.raises(DataError):
        Observation(0.0, 2, (1.0,))
    with pytest.raises(DataError):
        Observation(0.0, 1, (0.5,))
    with pytest.raises(DataError):
        Observation(float("inf"), 1, (1.0,))


def test_paired_needs_equal_length():
    a = validate_sample([(1.0, 1, []), (2.0, 1, [])])
    b = validate_sample([(1.0, 1, [])])
    with pytest.raises(DataError):
        PairedData(a, b)


def test_make_grid_distribution_interval():
    g = make_grid(0.6, 0.01, 0.1, 0.6)
    assert g.M == 60
    assert g.analysis.size == 51
    assert g.interval
    np.testing.assert_allclose(g.analysis_levels[[0, -1]], [0.1, 0.6])


def test_make_grid_application_interval():
    g = make_grid(0.3, 0.01, 0.1, 0.3)
    assert g.analysis.size == 21


def test_make_grid_singleton():
    g = make_grid(0.5, 0.5, 0.5, 0.5)
    assert g.M == 1 and g.analysis.size == 1 and not g.interval
    assert g.levels[0] == 0.5


@given(st.integers(1, 99), st.sampled_from([0.01, 0.02, 0.05]))
def test_make_grid_spacing(m, step):
    tau_R = round(m * step, 10)
    if tau_R >= 1:
        return
    g = make_grid(tau_R, step, step, tau_R)
    assert np.all(np.diff(g.levels) > 0)
    np.testing.assert_allclose(np.diff(g.levels), step, atol=1e-12)


def test_make_grid_snapping():
    g = make_grid(0.6, 0.01, 0.1049, 0.5951)
    np.testing.assert_allclose(g.snapped, (0.10, 0.60))


def test_make_grid_errors():
    with pytest.raises(ValueError):
        make_grid(1.0, 0.01, 0.1, 0.5)
    with pytest.raises(ValueError):
        make_grid(0.5, 0.01, 0.4, 0.3)


def test_coefficient_process_requires_analysis():
    g = make_grid(0.5, 0.1, 0.2, 0.5)
    beta = np.full((5, 1), np.nan)
    beta[:3] = 0.0
    proc = CoefficientProcess(g, beta, 3)
    assert not proc.covers_analysis()
    with pytest.raises(BreakdownError) as err:
        proc.require_analysis()
    assert err.value.max_tau == pytest.approx(0.3)
