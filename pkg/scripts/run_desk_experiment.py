#!/usr/bin/env python3
"""Generate the bundled corpus and run the full prove/train/prove loop.

This is the one-command version of the desk-scale experiment: baseline
over the training split, datasets and three tree models out of the
traces, every guidance mode evaluated on dev, and the winner run once
on the holdout split. Results land in OUT/report.json and OUT/table.txt.

    python3 scripts/run_desk_experiment.py --out runs/desk
    python3 scripts/run_desk_experiment.py --out runs/quick --count 60 \
        --max-processed 150 --parental-grid 0.0 0.05 0.3
"""

from __future__ import annotations

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from satloop.corpus import generate_corpus
from satloop.harness import LoopConfig, run_loop
from satloop.prover import Limits


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--count", type=int, default=200, help="corpus size")
    ap.add_argument("--family", default="mix")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-processed", type=int, default=250)
    ap.add_argument("--max-generated", type=int, default=20000)
    ap.add_argument("--rho", type=float, default=8.0)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--two-phase-grid", type=float, nargs="+")
    ap.add_argument("--parental-grid", type=float, nargs="+")
    ap.add_argument("--no-holdout", action="store_true")
    args = ap.parse_args()

    corpus_dir = os.path.join(args.out, "corpus")
    t0 = time.monotonic()
    paths = generate_corpus(corpus_dir, args.count, args.family, args.seed)
    print(f"corpus: {len(paths)} problems in {corpus_dir}")

    cfg = LoopConfig(
        corpus_dir=corpus_dir,
        out_dir=args.out,
        seed=args.seed,
        parallel=args.parallel,
        limits=Limits(
            max_processed=args.max_processed, max_generated=args.max_generated
        ),
        rho=args.rho,
        run_holdout=not args.no_holdout,
    )
    if args.two_phase_grid:
        cfg.two_phase_grid = args.two_phase_grid
    if args.parental_grid:
        cfg.parental_grid = args.parental_grid

    report = run_loop(cfg)
    print(report.table)
    print(f"best two-phase threshold: {report.best_two_phase_threshold}")
    print(f"best parental threshold:  {report.best_parental_threshold}")
    print(f"holdout reads: {report.holdout_reads}")
    print(f"done in {time.monotonic() - t0:.0f}s; report in {args.out}/report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
