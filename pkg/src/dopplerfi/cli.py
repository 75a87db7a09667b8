"""Command-line interface for dopplerfi.

Usage::

    dopplerfi run --preset w2b --trials 10          # BER / throughput
    dopplerfi sweep --config scenarios/shift.ini    # one CSV row per grid value
    dopplerfi legacy-impact --preset legacy_wifi    # legacy throughput loss
    dopplerfi trace --preset b2w --out traces/      # receiver intermediates
    dopplerfi --list-presets
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from dopplerfi import __version__
from dopplerfi.config import dump_config, load_config
from dopplerfi.harness import ExperimentRunner, Metrics
from dopplerfi.presets import SWEEP_AXES, ExperimentConfig, PresetManager
from dopplerfi.report import METRIC_COLUMNS, write_csv

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c", "--config",
        help="INI scenario file.",
    )
    common.add_argument(
        "-p", "--preset",
        default="w2b",
        choices=PresetManager.PRESETS,
        help="Base preset when no --config is given (default: %(default)s).",
    )
    common.add_argument("--seed", type=int, help="Override the random seed.")
    common.add_argument("--trials", type=int, help="Override the number of trials.")
    common.add_argument(
        "-o", "--out",
        default="results",
        help="Output directory (default: %(default)s).",
    )
    common.add_argument(
        "-j", "--jobs",
        type=int,
        default=1,
        help="Worker processes for independent trials (default: %(default)s).",
    )
    common.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="Print progress; repeat for debug logging.",
    )
    return common


def _build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="dopplerfi",
        description="Simulate cross-technology side channels carried by artificial Doppler shifts.",
    )
    parser.add_argument(
        "--list-presets",
        action="store_true",
        help="List available experiment presets and exit.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("run", parents=[common], help="Run Monte-Carlo trials.")
    sweep = sub.add_parser("sweep", parents=[common], help="Sweep one parameter.")
    sweep.add_argument("--axis", choices=SWEEP_AXES, help="Sweep axis (overrides the config).")
    sweep.add_argument("--values", help="Comma-separated grid values.")
    sweep.add_argument("--no-plot", action="store_true", help="Skip the plot script.")
    sub.add_parser("legacy-impact", parents=[common], help="Measure legacy throughput loss.")
    trace = sub.add_parser("trace", parents=[common], help="Dump receiver intermediates.")
    trace.add_argument("--channel", type=int, help="BLE channel to trace.")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT)


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"file not found: {path}")
        cfg = load_config(path)
    else:
        cfg = PresetManager(args.preset).config
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    return cfg.validate()


def _summary(metrics: Metrics) -> list[str]:
    lines = []
    for key, value in metrics.as_row().items():
        if isinstance(value, float):
            if math.isnan(value):
                continue
            lines.append(f"  {key:<24}{value:.6g}")
        elif value is not None:
            lines.append(f"  {key:<24}{value}")
    return lines


def _cmd_run(cfg: ExperimentConfig, args: argparse.Namespace, out_dir: Path) -> None:
    runner = ExperimentRunner(cfg, jobs=args.jobs)
    metrics, records = runner.run()
    trial_columns = ("trial", "payload_bits", "bit_errors", "frame_detected", "channel_bits",
                     "channel_errors", "corrections", "opportunities", "sim_time", "packets",
                     "packet_errors", "baseline_packet_errors", "throughput_bps")
    rows = [{c: getattr(r, c) for c in trial_columns} for r in records]
    write_csv(rows, trial_columns, out_dir / f"{cfg.name}_trials.csv")
    path = write_csv([metrics.as_row()], METRIC_COLUMNS, out_dir / f"{cfg.name}_metrics.csv")
    print("\n".join(_summary(metrics)))
    print(f"Results: {path}")


def _cmd_sweep(cfg: ExperimentConfig, args: argparse.Namespace, out_dir: Path) -> None:
    if args.axis:
        cfg.sweep.axis = args.axis
    if args.values:
        cfg.sweep.values = [float(v) for v in args.values.split(",") if v.strip()]
    runner = ExperimentRunner(cfg.validate(), jobs=args.jobs)
    path = runner.write_sweep(out_dir, plot=not args.no_plot)
    print(f"Sweep: {path}")


def _cmd_legacy(cfg: ExperimentConfig, args: argparse.Namespace, out_dir: Path) -> None:
    metrics = ExperimentRunner(cfg, jobs=args.jobs).legacy_impact()
    path = write_csv([metrics.as_row()], METRIC_COLUMNS, out_dir / f"{cfg.name}_legacy.csv")
    print("\n".join(_summary(metrics)))
    print(f"Results: {path}")


def _cmd_trace(cfg: ExperimentConfig, args: argparse.Namespace, out_dir: Path) -> None:
    for path in ExperimentRunner(cfg).trace(out_dir, channel=args.channel):
        print(f"Wrote: {path}")


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "legacy-impact": _cmd_legacy,
    "trace": _cmd_trace,
}


def main(argv: list[str] | None = None) -> int:
    """Entry point for the CLI."""
    parser = _build_parser()
    args = parser.parse_args(argv)

    if args.list_presets:
        print("Available presets:")
        for preset in PresetManager.PRESETS:
            print(f"  - {preset}: {PresetManager.describe(preset)}")
        return 0

    if not args.command:
        parser.error("a command is required: " + ", ".join(_COMMANDS))

    _configure_logging(args.verbose)

    try:
        cfg = _load(args)
        out_dir = Path(args.out)
        if args.verbose:
            print(f"Experiment: {cfg.name} ({cfg.direction.value})")
            print(f"Trials:     {cfg.trials}, seed {cfg.seed}")
            print(f"Output:     {out_dir}")
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{cfg.name}.ini").write_text(dump_config(cfg), encoding="utf-8")
        _COMMANDS[args.command](cfg, args, out_dir)
    except Exception as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 1

    return 0


if __name__ == "__main__":
    sys.exit(main())
