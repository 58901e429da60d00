#!/usr/bin/env python3
"""Pruning-effectiveness sweep over dimensionality, order, and sparsity.

For every (d, r, sparsity) cell this reports the mean wall time of the
truncation-point search and the fraction of itemset-tree nodes it actually
visited (1.0 means no pruning was possible, as at r = 1 where the tree is
flat).  Each cell reuses the same generated datasets across model orders,
so the r columns are directly comparable.
"""

import argparse
import sys

from selectree.cli import _truth_arg
from selectree.experiments import SyntheticSpec, run_perf_study, write_rows_csv, write_rows_json


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=100)
    parser.add_argument("--topk", type=int, default=10)
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--cols-list", type=_int_list, default=[100, 200])
    parser.add_argument("--order-list", type=_int_list, default=[1, 2, 3])
    parser.add_argument("--sparsity-list", type=_float_list, default=[0.5, 0.9])
    parser.add_argument(
        "--truth", type=_truth_arg, default={(1, 2, 3): 1.0},
        help='planted effects, e.g. "1,2,3:1.0"',
    )
    parser.add_argument("--format", choices=["json", "csv"], default="csv")
    parser.add_argument("--output", default=None, help="default: stdout")
    args = parser.parse_args()

    base = SyntheticSpec(
        n=args.rows, d=min(args.cols_list), r=max(args.order_list),
        k=args.topk, sparsity=args.sparsity_list[0], sigma=args.sigma,
        alpha=args.alpha, truth=args.truth, seed=args.seed, trials=args.trials,
    )
    rows = [
        row.to_row()
        for row in run_perf_study(
            base,
            d_values=args.cols_list,
            r_values=args.order_list,
            sparsity_values=args.sparsity_list,
            threads=args.threads,
        )
    ]
    fh = open(args.output, "w") if args.output else sys.stdout
    try:
        if args.format == "csv":
            write_rows_csv(rows, fh)
        else:
            write_rows_json(rows, fh)
    finally:
        if args.output:
            fh.close()


if __name__ == "__main__":
    main()
