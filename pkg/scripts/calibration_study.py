"""Compare no calibration, CV calibration and OOB calibration for PIBF.

For each scenario reports the mean and run-to-run SD of test coverage. The
final line gives the spread of mean coverage across scenarios per calibration,
which is how calibration is judged to stabilise coverage across problems.

    python scripts/calibration_study.py --problems friedman1,friedman2,peak --reps 20
"""
import argparse

import numpy as np

from bopforest.forest import ForestConfig
from bopforest.simbench import BenchmarkConfig, run_benchmark

CALIBRATIONS = ("none", "cv", "oob")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", default="friedman1,friedman2,friedman3,peak,h2c,tree_normal,tree_exp")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--trees", type=int, default=1000)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    means = {c: [] for c in CALIBRATIONS}
    print(f"{'problem':<12}" + "".join(f"{c + ' mean':>12}{c + ' sd':>10}" for c in CALIBRATIONS))
    for problem in args.problems.split(","):
        cfg = BenchmarkConfig(problem, n_train=args.n, replications=args.reps, alpha=args.alpha,
                              forest=ForestConfig(num_trees=args.trees), pibf_calibrations=CALIBRATIONS,
                              seed=args.seed)
        res = run_benchmark(cfg)
        row = f"{problem:<12}"
        for c in CALIBRATIONS:
            cov = res.values(f"pibf-{c}", "coverage")
            means[c].append(cov.mean())
            row += f"{cov.mean():>12.4f}{cov.std(ddof=1):>10.4f}"
        print(row, flush=True)
    print(f"{'across':<12}" + "".join(f"{np.mean(means[c]):>12.4f}{np.std(means[c], ddof=1):>10.4f}"
                                      for c in CALIBRATIONS))


if __name__ == "__main__":
    main()
