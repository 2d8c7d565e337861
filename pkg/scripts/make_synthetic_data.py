"""Regenerate the bundled synthetic data tables.

The real county home-value and loan tables are not redistributable, so the
package ships stand-ins with the same column layout. Running this script
rewrites ``src/mvgattack/data/zhvi.csv`` and ``src/mvgattack/data/loan.csv``
bit for bit.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

DATA = Path(__file__).resolve().parents[1] / "src" / "mvgattack" / "data"

COUNTIES_Y = ["Yuma", "Cochise", "Apache", "LaPaz"]
COUNTIES_Z = ["Maricopa", "Pima", "Pinal", "Yavapai", "Mohave", "Coconino", "Navajo", "Gila", "SantaCruz",
              "Graham", "Greenlee"]
# level in hundreds of thousands of dollars at the start of the window
LEVEL_Y = [1.55, 1.35, 0.95, 1.05]
LEVEL_Z = [2.45, 2.05, 1.95, 2.70, 1.85, 3.10, 1.45, 1.60, 1.80, 1.35, 1.00]

LOAN_COLS = ["income", "debt_to_income", "total_credit_balance", "total_debit_limit", "total_credit_limit",
             "pct_lines_no_delinquency", "loan_amount", "interest_rate"]


def zhvi(rng: np.random.Generator, months: int = 82) -> tuple[list[str], np.ndarray]:
    levels = np.array(LEVEL_Y + LEVEL_Z)
    k = levels.size
    growth = rng.uniform(0.008, 0.013, size=k)
    common = np.cumsum(rng.normal(0.0, 0.01, size=months))
    load = rng.uniform(0.6, 1.4, size=k)
    t = np.arange(months)[:, None]
    idio = np.cumsum(rng.normal(0.0, 0.006, size=(months, k)), axis=0)
    x = levels * np.exp(growth * t + load * common[:, None] + idio)
    return COUNTIES_Y + COUNTIES_Z, np.round(x, 4)


def loan(rng: np.random.Generator, n: int = 400) -> tuple[list[str], np.ndarray]:
    mean = np.array([80.0, 18.0, 50.0, 25.0, 60.0, 90.0, 16.0])
    sd = np.array([40.0, 8.0, 40.0, 15.0, 40.0, 10.0, 10.0])
    corr = np.eye(7)
    for (i, j, r) in [(0, 2, 0.4), (0, 4, 0.5), (2, 4, 0.6), (3, 4, 0.3), (0, 6, 0.3), (1, 2, 0.2), (1, 5, -0.2)]:
        corr[i, j] = corr[j, i] = r
    X = rng.multivariate_normal(mean, corr * np.outer(sd, sd), size=n)
    beta = np.array([-0.02, 0.12, 0.01, -0.03, -0.015, -0.05, 0.04])
    y = 14.0 + (X - mean) @ beta + rng.normal(0.0, 4.0, size=n)
    return LOAN_COLS, np.round(np.column_stack([X, y]), 3)


def write(path: Path, cols, rows) -> None:
    lines = [",".join(cols)] + [",".join(f"{v:g}" for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--out", type=Path, default=DATA)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write(args.out / "zhvi.csv", *zhvi(rng))
    write(args.out / "loan.csv", *loan(rng))
    print(f"wrote {args.out / 'zhvi.csv'} and {args.out / 'loan.csv'}")


if __name__ == "__main__":
    main()
