"""Command-line entry point: ``meetransfer <subcommand> [flags]``.

Exit status is 0 on success, 1 on error and 2 when ``--assert`` is given
and one of the ordering checks fails. CSV goes to ``--out`` (or stdout);
per-arm summaries go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from ..ingest import IngestError, WindowSpec, load_csv, save_windows
from ..training import pretrain, write_history_csv
from . import checks, sweeps
from .config import SweepConfig, load_config

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2


def _names(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in _names(text))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meetransfer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI-style config file")
        sp.add_argument("--out", help="output CSV path (default: stdout)")
        sp.add_argument("--seed", type=int, help="base seed; repetition r uses seed + r")
        sp.add_argument("--reps", type=int, help="number of repetitions")
        sp.add_argument("--loss", help="comma-separated loss names")
        sp.add_argument("--noise", help="shifted_exponential | mixed_gaussian | laplace")
        sp.add_argument("--mu", help="comma-separated target shifts")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--jobs", type=int, help="parallel worker processes")
        sp.add_argument("--assert", dest="assert_mode", action="store_true",
                        help="check the expected orderings; exit 2 on failure")
        return sp

    common(sub.add_parser("shift-sweep", help="test MSE versus target shift for each loss"))
    ks = common(sub.add_parser("kernel-study", help="MEE residual spread versus kernel size"))
    ks.add_argument("--multipliers", default="0.1,1,10")
    ks.add_argument("--bins", type=int, default=64)
    ks.add_argument("--range", dest="hist_range", default="-8,8")
    common(sub.add_parser("noise-table", help="robust-loss comparison at a fixed shift"))
    common(sub.add_parser("dependence", help="input/residual HSIC for each loss"))
    tr = common(sub.add_parser("transfer", help="pretrain, then fine-tune or probe"))
    tr.add_argument("--procedure", choices=("finetune", "probe"), default="finetune")
    tr.add_argument("--pretrain-loss", help="fix the pretraining loss (default: same as --loss)")
    pt = common(sub.add_parser("pretrain", help="train a source model and save it"))
    pt.add_argument("--history", help="per-epoch history CSV path")
    pt.add_argument("--model", choices=("linear", "mlp"))

    ic = sub.add_parser("ingest-check", help="window a CSV file and report its shape")
    ic.add_argument("csv")
    ic.add_argument("--window", type=int, default=1)
    ic.add_argument("--features", required=True, help="comma-separated feature columns")
    ic.add_argument("--label", required=True)
    ic.add_argument("--group")
    ic.add_argument("--stride", type=int, default=1)
    ic.add_argument("--out", help="cache the flattened windows as CSV")
    return p


def config_from_args(args) -> SweepConfig:
    cfg = load_config(getattr(args, "config", None))
    changes: dict = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["repetitions"] = args.reps
    if args.loss:
        changes["losses"] = _names(args.loss)
    if args.noise:
        changes["scenario"] = replace(cfg.scenario, noise=args.noise)
    if args.mu:
        changes["mu_grid"] = _floats(args.mu)
    if args.epochs is not None:
        changes["train"] = replace(cfg.train, epochs=args.epochs)
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if getattr(args, "model", None):
        changes["model_kind"] = args.model
    if args.out and args.command != "pretrain":
        changes["out"] = args.out
    return replace(cfg, **changes)


def _emit(report, cfg: SweepConfig) -> None:
    if cfg.out is None:
        sys.stdout.write(report.to_csv())
    for line in report.summary_lines():
        print(line, file=sys.stderr)


def _finish(results: list[checks.Check], assert_mode: bool) -> int:
    if not assert_mode:
        return EXIT_OK
    for c in results:
        print(c.line(), file=sys.stderr)
    return EXIT_OK if all(c.passed for c in results) else EXIT_ASSERT


def _run(args) -> int:
    if args.command == "ingest-check":
        spec = WindowSpec(args.window, _names(args.features), args.label, args.stride, args.group)
        data = load_csv(args.csv, spec)
        print(f"{args.csv}: {len(data)} windows x {data.X.shape[1]} features, "
              f"{len(set(data.groups.tolist()))} group(s)", file=sys.stderr)
        if args.out:
            save_windows(data, args.out)
        return EXIT_OK

    cfg = config_from_args(args)
    if args.command == "shift-sweep":
        report = sweeps.run_shift_sweep(cfg)
        _emit(report, cfg)
        return _finish(checks.check_shift_sweep(report, cfg.scenario.noise), args.assert_mode)
    if args.command == "kernel-study":
        report = sweeps.run_kernel_size_study(cfg, _floats(args.multipliers), bins=args.bins,
                                              hist_range=_floats(args.hist_range))
        _emit(report, cfg)
        return _finish(checks.check_kernel_study(report), args.assert_mode)
    if args.command == "noise-table":
        if not args.loss:
            cfg = replace(cfg, losses=sweeps.NOISE_TABLE_LOSSES)
        noises = (args.noise,) if args.noise else sweeps.NOISE_TABLE_NOISES
        report = sweeps.run_noise_table(cfg, noises)
        _emit(report, cfg)
        return _finish(checks.check_noise_table(report), args.assert_mode)
    if args.command == "dependence":
        if not args.loss:
            cfg = replace(cfg, losses=("mee", "mse"))
        report = sweeps.run_dependence(cfg)
        _emit(report, cfg)
        return _finish(checks.check_dependence(report), args.assert_mode)
    if args.command == "transfer":
        arms = None
        if args.pretrain_loss:
            arms = [(args.pretrain_loss, l) for l in cfg.losses]
        report = sweeps.run_transfer(cfg, args.procedure, arms)
        _emit(report, cfg)
        return _finish(checks.check_transfer(report), args.assert_mode)
    if args.command == "pretrain":
        data = sweeps._transfer_data(cfg, cfg.seed, max(cfg.mu_grid))["source"]
        loss = cfg.loss_params.build(cfg.losses[0])
        result = pretrain(data, loss, replace(cfg.train, seed=cfg.seed), kind=cfg.model_kind, mlp=cfg.mlp)
        if args.out:
            result.model.save(args.out)
        if args.history:
            write_history_csv(result.history, args.history)
        last = result.history[-1]["train_loss"] if result.history else float("nan")
        print(f"pretrain {loss.name}: {len(result.history)} epochs, final train loss {last:.6g}",
              file=sys.stderr)
        return EXIT_OK
    raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (IngestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
