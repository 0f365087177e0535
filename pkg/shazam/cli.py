"""
Command line entry point.

    shazam synth | train | calibrate | monitor | evaluate [options]

Exit codes: 0 success (no hazard), 2 monitor flagged a hazard, 1 error.
"""

import argparse
import logging
import sys
from typing import Sequence

from pydantic import ValidationError

from .config import RunConfig, load_run_config
from .errors import ShazamError
from .services import CalibrateService, EvaluateService, MonitorService, SynthService, TrainService
from .utils import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HAZARD = 2

ABLATION_FLAGS = {
    "no_position": "drop the patch-position encoding channels",
    "linear_time": "replace the cyclical day-of-year encodings with a normalised day of year",
    "mae_score": "score with mean absolute error instead of SDIM",
    "flat_threshold": "use one flat threshold instead of the seasonal one",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML run configuration")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a configuration key, e.g. --set train.epochs=5 (repeatable)",
    )
    common.add_argument("--seed", type=int, default=None, help="run seed")
    for name, text in ABLATION_FLAGS.items():
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, action="store_true", help=text)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="shazam", description="Seasonal hazard monitoring of satellite image time series")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic scene with planted hazards")
    sub.add_parser("train", parents=[common], help="fit normalisation, baseline and SIU-Net")
    sub.add_parser("calibrate", parents=[common], help="fit the hazard threshold on the training period")
    monitor = sub.add_parser("monitor", parents=[common], help="score new images")
    monitor.add_argument("--images", nargs="+", default=None, help="rasters to score (default: the test directory)")
    sub.add_parser("evaluate", parents=[common], help="compare flags with labels and write the report")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    ablations = {name: getattr(args, name) for name in ABLATION_FLAGS}
    return load_run_config(args.config, overrides=args.overrides, seed=args.seed, ablations=ablations)


def run_command(args: argparse.Namespace, config: RunConfig) -> int:
    if args.command == "synth":
        SynthService.run(config)
    elif args.command == "train":
        TrainService.run(config)
    elif args.command == "calibrate":
        CalibrateService.run(config)
    elif args.command == "monitor":
        results = MonitorService.run(config, args.images)
        if any(r.flag for r in results):
            return EXIT_HAZARD
    elif args.command == "evaluate":
        EvaluateService.run(config)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = resolve_config(args)
    except (ValidationError, ValueError, FileNotFoundError) as e:
        print(f"[config] {e}", file=sys.stderr)
        return EXIT_ERROR
    try:
        return run_command(args, config)
    except ShazamError as e:
        print(str(e), file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
