"""Worked example on a synthetic house-price table with mixed column types.

Writes the table to CSV, splits it 70/30 and runs every interval method
through the command-line interface, exactly as a user would on real data.

    python scripts/housing_demo.py --workdir /tmp/housing
"""
import argparse
from pathlib import Path

import numpy as np
import pandas as pd

from bopforest.cli import main as cli
from bopforest.data import load_csv, split_train_test, write_csv

QUALITY = ["Po", "Fa", "TA", "Gd", "Ex"]


def housing_frame(n: int, seed: int) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    # four neighbourhoods are rare and get merged during encoding
    hood = rng.choice([f"N{k}" for k in range(12)], size=n, p=np.r_[np.full(8, 0.12), np.full(4, 0.01)])
    quality = rng.choice(QUALITY, size=n, p=[0.05, 0.15, 0.45, 0.25, 0.10])
    area = rng.lognormal(7.2, 0.3, size=n)
    year = rng.integers(1900, 2010, size=n)
    lot = rng.lognormal(9.0, 0.4, size=n)
    hood_effect = np.array([0.08 * (k % 5 - 2) for k in range(12)])[[int(h[1:]) for h in hood]]
    q_effect = np.array([-0.3, -0.15, 0.0, 0.12, 0.3])[[QUALITY.index(q) for q in quality]]
    log_price = (5.0 + 0.7 * np.log(area) + 0.004 * (year - 1950) + 0.1 * np.log(lot) + hood_effect + q_effect
                 + rng.normal(scale=0.12, size=n))
    return pd.DataFrame({"Neighborhood": hood, "Kitchen.Qual": quality, "Gr.Liv.Area": area.round(0),
                         "Year.Built": year, "Lot.Area": lot.round(0), "Sale.Price": np.exp(log_price).round(0)})


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", type=Path, default=Path("housing_demo"))
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--trees", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.workdir.mkdir(parents=True, exist_ok=True)
    full = args.workdir / "housing.csv"
    housing_frame(args.n, args.seed).to_csv(full, index=False)
    train, test = split_train_test(load_csv(full, "Sale.Price"), 0.7, args.seed)
    write_csv(train, args.workdir / "train.csv")
    write_csv(test, args.workdir / "test.csv")

    data = ["--train", str(args.workdir / "train.csv"), "--test", str(args.workdir / "test.csv"),
            "--target", "Sale.Price", "--trees", str(args.trees), "--seed", str(args.seed)]
    print("== PIBF with CV calibration and OOB summary ==")
    cli(["pibf", *data, "--oob", "--plot-data", str(args.workdir / "pibf_intervals.csv")])
    print("\n== Single forest, LS split, all PI methods ==")
    cli(["rfpi", *data, "--split", "ls"])
    print("\n== All 16 methods ==")
    cli(["piall", *data])


if __name__ == "__main__":
    main()
