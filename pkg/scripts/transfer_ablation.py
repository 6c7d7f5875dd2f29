#!/usr/bin/env python3
"""Fine-tuning and linear-probing arms on the synthetic shift scenario.

    python scripts/transfer_ablation.py --out results/ [--reps 20] [--model mlp]

Arms:
  fix-vary    pretrain with mse, adapt with each loss
  vary-vary   pretrain and adapt with the same loss
Procedures: finetune (all parameters) and probe (head only).
Summaries (mean +- std of target test MSE) go to stdout.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from meetransfer.experiments.config import SweepConfig
from meetransfer.experiments.sweeps import run_transfer
from meetransfer.models import MlpConfig
from meetransfer.synthdata import ShiftScenario
from meetransfer.training import TrainConfig

LOSSES = ("mse", "mae", "hsic", "mee")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--mu", type=float, default=3.0)
    ap.add_argument("--model", choices=("linear", "mlp"), default="mlp")
    ap.add_argument("--adapt-epochs", type=int, default=100)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SweepConfig(scenario=ShiftScenario(noise="shifted_exponential"), losses=LOSSES,
                      repetitions=args.reps, model_kind=args.model, mlp=MlpConfig((32,)),
                      adapt=TrainConfig(epochs=args.adapt_epochs, batch_size=32, learning_rate=1e-3),
                      jobs=args.jobs)

    arms = {"fix-vary": [("mse", l) for l in LOSSES], "vary-vary": [(l, l) for l in LOSSES]}
    for procedure in ("finetune", "probe"):
        for label, arm in arms.items():
            if procedure == "probe" and label == "vary-vary":
                continue
            path = out / f"transfer_{procedure}_{label}.csv"
            report = run_transfer(replace(cfg, out=str(path)), procedure, arm, mu=args.mu)
            print(f"== {procedure} / {label}")
            for line in report.summary_lines():
                print("  " + line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
