import json

import numpy as np
import pytest

from cqcompare.cli import cli_main
from cqcompare.dataio import read_coefficients


def write_groups(path, rng, n=120, shift=0.0, censor=True):
    rows = ["time,status,x,g"]
    for g, s in ((1, 0.0), (2, shift)):
        x = rng.random(n)
        t = np.exp(s + 0.5 * x + 0.5 * rng.normal(size=n))
        c = rng.uniform(0, 8, n) if censor else np.full(n, np.inf)
        for xi, ti, ci in zip(x, t, c):
            rows.append(f"{float(min(ti, ci))!r},{int(ti <= ci)},{float(xi)!r},{g}")
    path.write_text("\n".join(rows) + "\n")
    return path


def write_pairs(path, rng, n=100):
    rows = ["pid,arm,time,status,x"]
    for i in range(n):
        x = rng.random()
        e = rng.multivariate_normal([0, 0], [[0.5, 0.4], [0.4, 0.5]])
        c = rng.uniform(0, 10)
        for arm, ei in (("a", e[0]), ("b", e[1])):
            t = np.exp(0.5 * x + ei)
            rows.append(f"{i},{arm},{float(min(t, c))!r},{int(t <= c)},{float(x)!r}")
    path.write_text("\n".join(rows) + "\n")
    return path


def run(argv, capsys):
    code = cli_main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_writes_reingestible_csv(tmp_path, rng, capsys):
    data = write_groups(tmp_path / "g.csv", rng)
    out = tmp_path / "fit.csv"
    code, _, _ = run(["fit", data, "--covariates", "x", "--group", "g", "--out", out], capsys)
    assert code == 0
    procs = read_coefficients(out)
    assert set(procs) == {"1", "2"}
    assert procs["1"].beta.shape == (60, 2)


def test_fit_consistency_without_censoring(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 2000
    x = rng.random(n)
    t = np.exp(1.0 - 0.5 * x + 0.5 * rng.normal(size=n))
    path = tmp_path / "one.csv"
    path.write_text("time,status,x\n" + "".join(f"{float(ti)!r},1,{float(xi)!r}\n" for ti, xi in zip(t, x)))
    code, out, _ = run(["fit", path, "--covariates", "x", "--tau-lo", 0.5, "--tau-hi", 0.5], capsys)
    assert code == 0
    last = out.strip().splitlines()[-1].split(",")
    assert float(last[1]) == 0.5
    assert abs(float(last[3]) - 1.0) < 0.1 and abs(float(last[4]) + 0.5) < 0.1


def test_test_command_detects_shift(tmp_path, rng, capsys):
    data = write_groups(tmp_path / "g.csv", rng, shift=1.5)
    bands = tmp_path / "bands.csv"
    code, out, _ = run(
        ["test", data, "--covariates", "x", "--group", "g", "--boot", 100, "--tau-hi", 0.4, "--bands", bands],
        capsys,
    )
    assert code == 0
    rep = json.loads(out)
    assert all(rep["result"]["reject"].values())
    assert rep["config"]["seed"] == 0 and rep["config"]["boot"] == 100
    assert rep["design"] == "independent"
    assert len(bands.read_text().splitlines()) == 1 + 31 * 2


def test_paired_test_runs(tmp_path, rng, capsys):
    data = write_pairs(tmp_path / "p.csv", rng)
    code, out, _ = run(
        ["test", data, "--paired", "--pair-id", "pid", "--arm", "arm", "--covariates", "x", "--boot", 60, "--tau-hi", 0.4],
        capsys,
    )
    assert code == 0
    rep = json.loads(out)
    assert rep["design"] == "paired" and rep["sample_sizes"] == [100, 100]


def test_usage_errors_exit_2(tmp_path, capsys):
    code, _, err = run(["test"], capsys)
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, err = run(["simulate", "--reps", 1], capsys)
    assert code == 2
    code, _, _ = run(["fit", "x.csv", "--tau-lo", 0.7, "--tau-hi", 0.6], capsys)
    assert code == 2


def test_runtime_errors_exit_1(tmp_path, rng, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,status,g\n1,2,a\n2,1,b\n")
    code, _, err = run(["fit", bad, "--group", "g"], capsys)
    msg = json.loads(err)
    assert code == 1 and msg["error"] == "data" and "row 2" in msg["message"]
    code, _, err = run(["fit", tmp_path / "missing.csv"], capsys)
    assert code == 1
    heavy = write_groups(tmp_path / "h.csv", rng, n=30)
    code, _, err = run(["fit", heavy, "--group", "g", "--tau-lo", 0.9, "--tau-hi", 0.99], capsys)
    assert code == 1 and json.loads(err)["error"] == "breakdown"


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"target": 0.3, "setting": 2, "seed": 7}))
    code, out, _ = run(["calibrate", "--config", cfg, "--seed", 8], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["config"]["target"] == 0.3 and rep["config"]["setting"] == 2 and rep["config"]["seed"] == 8
    c1, c2 = rep["censor_bounds"]
    assert 0 < c1 and 0 < c2
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, _ = run(["calibrate", "--config", cfg, "--target", 0.2], capsys)
    assert code == 2


def test_simulate_csv(tmp_path, capsys):
    code, out, _ = run(
        ["simulate", "--reps", 3, "--n1", 50, "--n2", 50, "--diffs", "0", "--tau-lo", 0.5, "--tau-hi", 0.5, "--seed", 4],
        capsys,
    )
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 2 and lines[0].startswith("label,model")
