#!/usr/bin/env python3
"""Regenerate the bundled continuous-covariate fixture.

Seven continuous columns (c7 duplicates c3 to exercise binarization
dedup) and a response carrying a single planted interaction: rows where
both c1 and c2 exceed one standard deviation get a +2 shift, everything
else is N(0, 0.1^2) noise.  The file is deterministic for a given seed.
"""

import argparse
from pathlib import Path

import numpy as np


def make_table(rows: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    c1 = rng.standard_normal(rows)
    c2 = rng.standard_normal(rows)
    c3 = rng.standard_normal(rows)
    c4 = rng.standard_normal(rows)
    c5 = 0.8 * c1 + 0.6 * rng.standard_normal(rows)
    c6 = rng.uniform(-3.0, 3.0, rows)
    c7 = c3.copy()
    signal = 2.0 * ((c1 > 1.0) & (c2 > 1.0))
    y = signal + 0.1 * rng.standard_normal(rows)
    return np.column_stack([c1, c2, c3, c4, c5, c6, c7, y])


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=1500)
    parser.add_argument("--seed", type=int, default=60221023)
    parser.add_argument(
        "--output",
        type=Path,
        default=Path(__file__).resolve().parent.parent / "tests" / "data" / "interactions.csv",
    )
    args = parser.parse_args()

    table = make_table(args.rows, args.seed)
    header = ",".join([f"c{j}" for j in range(1, 8)] + ["y"])
    with open(args.output, "w") as fh:
        fh.write(header + "\n")
        for row in table:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
    print(f"wrote {args.output} ({args.rows} rows)")


if __name__ == "__main__":
    main()
