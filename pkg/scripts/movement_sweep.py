#!/usr/bin/env python3
"""Data-movement study: shift cost vs shifted fraction across buffer sizes.

Times the in-place temporal shift on a frames-major activation buffer for
a range of shifted-channel fractions, at several spatial/channel sizes.
Writes one CSV per shape and prints a median-overhead table. The shift
does no arithmetic, so everything measured here is memory traffic.
"""

import argparse
import sys
from fractions import Fraction
from pathlib import Path

from tsmkit.bench import bench_shift, write_csv

SHAPES = [
    (1, 32, 8, 28, 28),
    (1, 64, 8, 56, 56),
    (1, 128, 8, 56, 56),
]
FRACTIONS = [Fraction(0), Fraction(1, 16), Fraction(1, 8),
             Fraction(1, 4), Fraction(1, 2), Fraction(1)]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=50,
                    help="timed repetitions per fraction (default 50)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"),
                    help="directory for per-shape CSVs (default results/)")
    args = ap.parse_args(argv)

    args.out.mkdir(parents=True, exist_ok=True)
    labels = [str(f) for f in FRACTIONS]
    print("shape            " + "".join(f"{s:>10}" for s in labels)
          + "   (median overhead % vs untouched buffer)")
    for shape in SHAPES:
        report = bench_shift(shape, FRACTIONS, reps=args.reps, seed=args.seed)
        tag = "x".join(str(e) for e in shape)
        write_csv(report, args.out / f"shift_{tag}.csv")
        cells = "".join(f"{r.overhead_pct:>10.2f}" for r in report.rows)
        print(f"{tag:<17}{cells}")
    print(f"\nper-shape CSVs written to {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
