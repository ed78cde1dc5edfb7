"""Replicated simulation study: PIBF (CV) against the 15 RFPI variants.

Prints mean coverage with mean PI length in brackets, one row per method,
one column per (problem, n_train) scenario.

    python scripts/method_comparison.py --problems friedman1,tree_normal --n 200,500 --reps 20
"""
import argparse
import time

from bopforest.forest import ForestConfig
from bopforest.interval import METHODS
from bopforest.simbench import PROBLEMS, BenchmarkConfig, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problems", default="friedman1")
    ap.add_argument("--n", default="200")
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--trees", type=int, default=1000)
    ap.add_argument("--n-test", type=int, default=1000)
    ap.add_argument("--rules", default="ls,l1,spi", help="RFPI split rules (empty for PIBF only)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    problems = [p for p in args.problems.split(",") if p]
    unknown = set(problems) - set(PROBLEMS)
    if unknown:
        ap.error(f"unknown problems {sorted(unknown)}")
    sizes = [int(v) for v in args.n.split(",")]
    rules = tuple(r for r in args.rules.split(",") if r)

    columns = {}
    for problem in problems:
        for n in sizes:
            cfg = BenchmarkConfig(problem, n_train=n, n_test=args.n_test, replications=args.reps,
                                  forest=ForestConfig(num_trees=args.trees), pibf_calibrations=("cv",),
                                  rfpi_rules=rules, rfpi_methods=METHODS, seed=args.seed)
            t0 = time.perf_counter()
            columns[f"{problem} n={n}"] = run_benchmark(cfg).summary()
            print(f"# {problem} n={n}: {time.perf_counter() - t0:.0f}s", flush=True)

    methods = list(next(iter(columns.values())))
    print(f"{'method':<12}" + "".join(f"{c:>22}" for c in columns))
    for m in methods:
        cells = [f"{s[m].coverage:.3f} ({s[m].mean_pi_length:.2f})" for s in columns.values()]
        print(f"{m:<12}" + "".join(f"{c:>22}" for c in cells))


if __name__ == "__main__":
    main()
