import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqcompare.bootstrap import BootstrapDraws
from cqcompare.dataio import (
    BandTable,
    DatasetSchema,
    atomic_write,
    coefficients_csv,
    dumps_json,
    emit_band_table,
    load_csv,
    read_coefficients,
)
from cqcompare.estimator import ph_fit
from cqcompare.types import DataError, IndependentData, PairedData, SampleData, make_grid


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_group_file_splits(tmp_path):
    path = write(tmp_path, "time,status,x,g\n1,1,0.5,1\n2,0,0.1,1\n3,1,0.2,2\n4,1,0.9,2\n")
    data = load_csv(path, DatasetSchema("time", "status", ("x",), group="g"))
    assert isinstance(data, IndependentData)
    assert data.sample1.n == data.sample2.n == 2
    np.testing.assert_allclose(data.sample2.log_time, np.log([3, 4]))
    np.testing.assert_array_equal(data.sample1.covariates, [[1, 0.5], [1, 0.1]])


def test_single_sample_mode(tmp_path):
    path = write(tmp_path, "time,status\n1,1\n2,0\n")
    data = load_csv(path, DatasetSchema("time", "status"))
    assert isinstance(data, SampleData) and data.n == 2


def test_bad_status_names_row_and_column(tmp_path):
    path = write(tmp_path, "time,status,g\n1,1,a\n2,2,b\n")
    with pytest.raises(DataError, match=r"row 3, column 'status'"):
        load_csv(path, DatasetSchema("time", "status", group="g"))


@pytest.mark.parametrize(
    "body, message",
    [
        ("x,1,1,0\n", "row 2, column 'time'"),
        ("-1,1,1,0\n", "time must be positive"),
        ("1,1\n", "expected"),
    ],
)
def test_cell_errors(tmp_path, body, message):
    path = write(tmp_path, "time,status,pid,arm\n" + body)
    with pytest.raises(DataError, match=message):
        load_csv(path, DatasetSchema("time", "status"))


def test_missing_column(tmp_path):
    path = write(tmp_path, "time,status\n1,1\n")
    with pytest.raises(DataError, match="missing column"):
        load_csv(path, DatasetSchema("time", "status", ("age",)))


def test_group_needs_two_levels(tmp_path):
    path = write(tmp_path, "time,status,g\n1,1,a\n2,1,b\n3,1,c\n")
    with pytest.raises(DataError):
        load_csv(path, DatasetSchema("time", "status", group="g"))
    data = load_csv(path, DatasetSchema("time", "status", group="g", levels=("c", "a")))
    assert data.sample1.log_time[0] == pytest.approx(np.log(3))


PAIRS = "pid,arm,time,status,x\n1,t,5,1,0\n1,c,3,1,0\n2,c,4,0,1\n2,t,6,1,1\n"


def test_paired_alignment(tmp_path):
    path = write(tmp_path, PAIRS)
    data = load_csv(path, DatasetSchema("time", "status", ("x",), pair_id="pid", arm="arm", levels=("t", "c")))
    assert isinstance(data, PairedData)
    np.testing.assert_allclose(np.exp(data.sample1.log_time), [5, 6])
    np.testing.assert_allclose(np.exp(data.sample2.log_time), [3, 4])


@pytest.mark.parametrize(
    "extra, message",
    [("3,t,2,1,0\n", "exactly one row per arm"), ("1,t,2,1,0\n", "duplicate arm")],
)
def test_paired_errors(tmp_path, extra, message):
    path = write(tmp_path, PAIRS + extra)
    with pytest.raises(DataError, match=message):
        load_csv(path, DatasetSchema("time", "status", ("x",), pair_id="pid", arm="arm"))


def test_subset_filter(tmp_path):
    path = write(tmp_path, "time,status,g,kind\n1,1,a,k\n2,1,b,k\n3,1,a,z\n")
    data = load_csv(path, DatasetSchema("time", "status", group="g", subset=("kind", "k")))
    assert data.sample1.n == data.sample2.n == 1


def test_schema_validation():
    with pytest.raises(ValueError):
        DatasetSchema("time", "status", group="g", pair_id="p", arm="a")
    with pytest.raises(ValueError):
        DatasetSchema("time", "status", pair_id="p")


def test_coefficients_roundtrip(tmp_path, rng):
    n = 80
    z = np.column_stack([np.ones(n), rng.random(n)])
    y = z @ [0.0, 1.0] + rng.normal(size=n)
    d = (rng.random(n) < 0.6).astype(int)
    d[np.argmin(y)] = 1
    grid = make_grid(0.95, 0.05, 0.1, 0.6)
    proc = ph_fit(SampleData(y, d, z), grid)
    path = tmp_path / "c.csv"
    atomic_write(path, coefficients_csv({"1": proc}, ["intercept", "x"]))
    back = read_coefficients(path)["1"]
    np.testing.assert_array_equal(back.beta, proc.beta)
    np.testing.assert_array_equal(back.grid.levels, proc.grid.levels)
    np.testing.assert_array_equal(back.grid.analysis, proc.grid.analysis)
    assert back.defined_upto == proc.defined_upto


def test_band_examples():
    levels = [0.1, 0.2]
    zero = emit_band_table(np.zeros((2, 3)), np.zeros((5, 2, 3)), levels)
    assert len(zero.rows) == 6
    assert all(r[3] == r[4] == r[5] == 0 for r in zero.rows)
    v = np.array([[1.0, -2.0, 0.5], [0.3, 0.0, 4.0]])
    band = emit_band_table(np.zeros((2, 3)), np.stack([v, -v]), levels)
    for (tau, name, _, lo, mean, hi), a, j in zip(band.rows, [0, 0, 0, 1, 1, 1], [0, 1, 2] * 2):
        assert (lo, hi) == (-abs(v[a, j]), abs(v[a, j]))
        assert mean == 0
    assert band.to_csv().splitlines()[0] == ",".join(BandTable.COLUMNS)


def test_band_scale_from_draws():
    d = BootstrapDraws(np.full((3, 1, 2), 4.0), 16)
    band = emit_band_table(np.full((1, 2), 8.0), d, [0.5])
    assert band.rows[0][2:] == (2.0, 1.0, 1.0, 1.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_band_ordering(values):
    d = np.array(values)[:, None, None]
    (row,) = emit_band_table(np.zeros((1, 1)), d, [0.5]).rows
    # mean can leave the percentile band for skewed draws, the percentiles cannot cross
    assert row[3] <= row[5]


def test_json_is_deterministic():
    obj = {"b": np.float64(np.nan), "a": [np.int64(1), np.bool_(True)], "c": (1.5,)}
    assert dumps_json(obj) == '{\n  "a": [\n    1,\n    true\n  ],\n  "b": null,\n  "c": [\n    1.5\n  ]\n}\n'


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write(tmp_path / "x.txt", "hello")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.txt"]
