"""Rejection-rate tables for the median and interval comparisons.

Runs warp-speed studies over a family of scenarios and writes one CSV per
table. Defaults reproduce the full design (500 replications per cell),
which takes a few hours on one core; use --reps for a quick look.

    python scripts/simulation_tables.py --out-dir tables/ --reps 100 --threads 4
"""
from __future__ import annotations

import argparse
import itertools
from pathlib import Path

from cqcompare.dataio import atomic_write
from cqcompare.simulate import ScenarioGrid, diff_family, warp_speed_study

DIFFS = (0.0, 0.2, 0.4)


def independent_table(A, reps, seed, threads, censoring=0.2):
    """Settings 1 and 2, Models 1-3, n2 in {100, 200}."""
    scen = []
    for setting, model, n2 in itertools.product((1, 2), (1, 2, 3), (100, 200)):
        scen += diff_family(model, setting, n1=200, n2=n2, censoring=censoring, diffs=DIFFS, tau_lo=A[0], tau_hi=A[1])
    return warp_speed_study(ScenarioGrid(tuple(scen), replications=reps), seed, threads=threads)


def paired_table(A, reps, seed, threads, censoring=0.2):
    """Paired design, Models 1-3, eta in {0.2, 0.4}, n = 200."""
    scen = []
    for model, eta in itertools.product((1, 2, 3), (0.2, 0.4)):
        scen += diff_family(model, paired=True, eta=eta, n1=200, censoring=censoring, diffs=DIFFS, tau_lo=A[0], tau_hi=A[1])
    return warp_speed_study(ScenarioGrid(tuple(scen), replications=reps), seed, threads=threads)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="tables")
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--censoring", type=float, default=0.2)
    ap.add_argument("--only", choices=("independent", "paired"), default=None)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = {"independent": independent_table, "paired": paired_table}
    for name, fn in tables.items():
        if args.only and name != args.only:
            continue
        for tag, A in (("median", (0.5, 0.5)), ("interval", (0.1, 0.6))):
            rep = fn(A, args.reps, args.seed, args.threads, args.censoring)
            path = out / f"{name}_{tag}_c{args.censoring:g}.csv"
            atomic_write(path, rep.to_csv(timing=True))
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
