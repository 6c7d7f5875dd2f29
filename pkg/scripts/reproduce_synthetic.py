#!/usr/bin/env python3
"""Run every synthetic experiment at full protocol and write CSVs to a directory.

    python scripts/reproduce_synthetic.py --out results/ [--reps 20] [--jobs 4]

Prints the PASS/FAIL line of each ordering check. Expect roughly ten
minutes on one core.
"""

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from meetransfer.experiments import checks
from meetransfer.experiments.config import SweepConfig
from meetransfer.experiments.sweeps import (
    run_dependence,
    run_kernel_size_study,
    run_noise_table,
    run_shift_sweep,
)
from meetransfer.synthdata import ShiftScenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = SweepConfig(repetitions=args.reps, seed=args.seed, jobs=args.jobs)
    results = []

    def stage(name, fn):
        t0 = time.perf_counter()
        res = fn()
        print(f"[{name}] {time.perf_counter() - t0:.0f}s", file=sys.stderr)
        for c in res:
            print(c.line())
        results.extend(res)

    for noise in ("shifted_exponential", "laplace", "mixed_gaussian"):
        cfg = replace(base, scenario=ShiftScenario(noise=noise), mu_grid=(0.0, 1.0, 2.0, 3.0),
                      losses=("mse", "mae", "hsic", "mee"), out=str(out / f"shift_{noise}.csv"))
        stage(f"shift-sweep {noise}", lambda cfg=cfg, noise=noise:
              checks.check_shift_sweep(run_shift_sweep(cfg), noise))

    cfg = replace(base, losses=("mae", "hsic", "huber", "barron", "mee"), out=str(out / "noise_table.csv"))
    stage("noise-table", lambda: checks.check_noise_table(run_noise_table(cfg)))

    cfg = replace(base, scenario=ShiftScenario(noise="laplace"), repetitions=min(args.reps, 10),
                  out=str(out / "kernel_study.csv"))
    stage("kernel-study", lambda: checks.check_kernel_study(run_kernel_size_study(cfg)))

    cfg = replace(base, losses=("mee", "mse"), out=str(out / "dependence.csv"))
    stage("dependence", lambda: checks.check_dependence(run_dependence(cfg)))

    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed; CSVs in {out}/")
    return 0 if not failed else 2


if __name__ == "__main__":
    sys.exit(main())
