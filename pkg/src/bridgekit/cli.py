"""Command-line entry point wiring all modules.

Subcommands mirror the experiment lifecycle:

    bridgekit data make        synthesize a paired dataset
    bridgekit schedule export  tabulate a schedule as CSV
    bridgekit train            run adversarial training
    bridgekit sample           translate a source batch with a checkpoint
    bridgekit eval             score predictions, optionally vs a baseline
    bridgekit verify           run the math oracle suites

On failure a single machine-parseable line ``error:<category>: <message>``
goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline, verify
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .data import ContainerError, load_tensor, make_synthetic_pairs, save_tensor
from .posterior import OracleMismatchError
from .sampler import NonFiniteEstimateError
from .schedule import ScheduleConfig, ScheduleError, build_schedule, export_csv
from .training import TrainingError, train

_ERROR_CATEGORIES = [
    (ConfigError, "config"),
    (ContainerError, "container"),
    (ScheduleError, "schedule"),
    (OracleMismatchError, "oracle"),
    (NonFiniteEstimateError, "sampler"),
    (TrainingError, "training"),
    (FileNotFoundError, "io"),
    (ValueError, "value"),
]


def _fail(exc: Exception) -> int:
    category = "internal"
    for cls, name in _ERROR_CATEGORIES:
        if isinstance(exc, cls):
            category = name
            break
    print(f"error:{category}: {exc}", file=sys.stderr)
    return 1


def _cmd_data_make(args) -> int:
    ds = make_synthetic_pairs(args.task, args.n, args.seed)
    pipeline.save_pairs(args.out, ds)
    print(f"wrote {args.n} {args.task} pairs to {args.out}")
    return 0


def _cmd_schedule_export(args) -> int:
    table = build_schedule(ScheduleConfig(T=args.T, gamma=args.gamma, variant=args.variant))
    if args.out == "-":
        export_csv(table, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8") as fp:
            export_csv(table, fp)
        print(f"wrote schedule table to {args.out}")
    return 0


def _cmd_train(args) -> int:
    exp = load_config(args.config) if args.config else ExperimentConfig()
    dataset = pipeline.load_pairs(args.data) if args.data else pipeline.dataset_for(exp)
    ckpt = train(exp, dataset, args.out, resume=args.resume)
    print(f"final checkpoint: {ckpt}")
    return 0


def _cmd_sample(args) -> int:
    y = load_tensor(args.input)
    result = pipeline.translate(args.checkpoint, y, T=args.T, rel_tol=args.rel_tol,
                                r_max=args.r_max, seed=args.seed,
                                emit_trajectory=args.emit_trajectory)
    save_tensor(args.output, result.x0)
    if args.emit_trajectory:
        base = Path(args.output)
        stem = base.with_suffix("")
        for i, state in enumerate(result.trajectory):
            save_tensor(f"{stem}_t{i:04d}{base.suffix or '.brtk'}", state)
    print(f"sampled {y.shape[0]} translations "
          f"(mean recursions/step {result.mean_recursions:.2f}) -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    ref = load_tensor(args.ref)
    test = load_tensor(args.test)
    report = pipeline.evaluate_translation(ref, test, rescale=args.rescale)
    if args.baseline:
        base = pipeline.read_report(args.baseline)
        pipeline.compare_reports(report, base)
    pipeline.write_report(args.report, report)
    line = f"psnr {report.psnr_mean:.3f}+-{report.psnr_std:.3f} dB"
    if np.any(np.isfinite(report.ssim)):
        line += f", ssim {report.ssim_mean:.4f}+-{report.ssim_std:.4f}"
    if report.p_psnr is not None:
        line += f", p(psnr)={report.p_psnr:.4g}"
    print(line)
    return 0


def _cmd_verify(args) -> int:
    suites = tuple(args.suites) if args.suites else verify.SUITES
    results = verify.run_all(suites=suites)
    print(verify.format_table(results))
    return 0 if all(r.passed for r in results) else 1


def _cmd_config_init(args) -> int:
    save_config(ExperimentConfig(), args.out)
    print(f"wrote default config to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgekit",
                                     description="diffusion-bridge translation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_data = sub.add_parser("data", help="dataset commands")
    data_sub = p_data.add_subparsers(dest="subcommand", required=True)
    p_make = data_sub.add_parser("make", help="synthesize a paired dataset")
    p_make.add_argument("--task", required=True, choices=("gauss2gauss", "shapes16"))
    p_make.add_argument("--n", type=int, required=True)
    p_make.add_argument("--seed", type=int, default=0)
    p_make.add_argument("--out", required=True)
    p_make.set_defaults(func=_cmd_data_make)

    p_sched = sub.add_parser("schedule", help="schedule commands")
    sched_sub = p_sched.add_subparsers(dest="subcommand", required=True)
    p_exp = sched_sub.add_parser("export", help="emit the schedule table as CSV")
    p_exp.add_argument("--T", type=int, required=True)
    p_exp.add_argument("--gamma", type=float, default=2.2)
    p_exp.add_argument("--variant", choices=("soft", "pinned"), default="soft")
    p_exp.add_argument("--out", default="-")
    p_exp.set_defaults(func=_cmd_schedule_export)

    p_train = sub.add_parser("train", help="run adversarial training")
    p_train.add_argument("--config", help="key = value experiment file")
    p_train.add_argument("--data", help="dataset directory (default: synthesize per config)")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.set_defaults(func=_cmd_train)

    p_sample = sub.add_parser("sample", help="translate a source batch")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--input", required=True, help="source batch container")
    p_sample.add_argument("--output", required=True)
    p_sample.add_argument("--T", type=int)
    p_sample.add_argument("--rel-tol", type=float, dest="rel_tol")
    p_sample.add_argument("--r-max", type=int, dest="r_max")
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--emit-trajectory", action="store_true")
    p_sample.set_defaults(func=_cmd_sample)

    p_eval = sub.add_parser("eval", help="score predictions against references")
    p_eval.add_argument("--ref", required=True)
    p_eval.add_argument("--test", required=True)
    p_eval.add_argument("--report", required=True)
    p_eval.add_argument("--baseline", help="baseline report CSV for significance testing")
    p_eval.add_argument("--rescale", choices=("image", "range"), default="image")
    p_eval.set_defaults(func=_cmd_eval)

    p_verify = sub.add_parser("verify", help="run the math oracle suites")
    p_verify.add_argument("suites", nargs="*",
                          help="restrict to schedule/posterior/sampler (default: all)")
    p_verify.set_defaults(func=_cmd_verify)

    p_cfg = sub.add_parser("config", help="config helpers")
    cfg_sub = p_cfg.add_subparsers(dest="subcommand", required=True)
    p_init = cfg_sub.add_parser("init", help="write a default config file")
    p_init.add_argument("--out", required=True)
    p_init.set_defaults(func=_cmd_config_init)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single-line machine-parseable failure
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
