"""Compare the multiplier-bootstrap covariance with the Monte Carlo covariance.

For one dataset, the covariance of N bootstrap difference draws at a single
quantile level is set against the covariance of sqrt(n)(b1 - b2 - truth)
over R independent datasets. Each entry is reported with its Monte Carlo
standard error.

    python scripts/covariance_check.py --reps 200 --boot 200 --tau 0.5
"""
from __future__ import annotations

import argparse
import math

import numpy as np

from cqcompare.bootstrap import BootstrapScheme, difference_draws
from cqcompare.dgp import DgpConfig, calibrated, generate, true_beta
from cqcompare.estimator import PengHuang
from cqcompare.types import make_grid


def cov_with_se(x):
    c = x - x.mean(axis=0)
    prod = c[:, :, None] * c[:, None, :]
    return prod.mean(axis=0), prod.std(axis=0) / math.sqrt(len(x))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", type=int, default=1)
    ap.add_argument("--setting", type=int, default=1)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--censoring", type=float, default=0.2)
    ap.add_argument("--tau", type=float, default=0.5)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--boot", type=int, default=200)
    ap.add_argument("--seed", type=int, default=606)
    args = ap.parse_args()

    cfg = calibrated(DgpConfig(model=args.model, setting=args.setting, n1=args.n, n2=args.n, censor_target=args.censoring))
    grid = make_grid(args.tau, 0.01, args.tau, args.tau)
    est = PengHuang()
    rng = np.random.default_rng(args.seed)
    truth = true_beta(cfg, 1, args.tau) - true_beta(cfg, 2, args.tau)
    root = math.sqrt(2 * args.n)
    point = []
    for _ in range(args.reps):
        d = generate(cfg, rng)
        point.append(root * (est.fit(d.sample1, grid).beta[-1] - est.fit(d.sample2, grid).beta[-1] - truth))
    _, draws = difference_draws(generate(cfg, rng), est, grid, BootstrapScheme(), args.boot, args.seed)
    c_mc, se_mc = cov_with_se(np.array(point))
    c_bs, se_bs = cov_with_se(draws.draws[:, 0, :])
    z = (c_bs - c_mc) / np.sqrt(se_mc**2 + se_bs**2)
    np.set_printoptions(precision=3, suppress=True)
    print("Monte Carlo covariance\n", c_mc)
    print("bootstrap covariance\n", c_bs)
    print("standardized difference\n", z)


if __name__ == "__main__":
    main()
