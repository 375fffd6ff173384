"""Command line entry point: ``esnfi <subcommand> --config cfg.json``.

Exit codes: 0 on success, 1 on validation errors, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from esnfi import workflows
from esnfi.config import ConfigError, ExperimentConfig, config_from_dict, load_config

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

log = logging.getLogger("esnfi")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be at least 1")
    return v


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON experiment config")
    p.add_argument("--seed", type=_u64, default=d, help="override the config seed")
    p.add_argument("--output", default=d, help="output directory")
    p.add_argument("--threads", type=_positive, default=d, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esnfi", description="Echo state network forecasts and block-wise feature importance.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "write synthetic datasets as gridded CSVs",
        "study": "run the simulation study grid and write importance CSVs",
        "fit": "fit an ESN to gridded data and save it as JSON",
        "importance": "fit an ESN and compute stPFI/stZFI curves",
        "evaluate": "train/test RMSE for one or more split years",
        "plot": "render an importance or RMSE CSV as SVG",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        _add_globals(sp, suppress=True)
        if name == "plot":
            sp.add_argument("--input", help="CSV to plot")
        if name == "importance":
            sp.add_argument("--no-plot", action="store_true", help="skip the SVG")
    return parser


def _config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config, seed=args.seed)
    else:
        cfg = config_from_dict({}, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.output is not None:
        cfg = replace(cfg, output=args.output)
    return cfg


def _output_dir(cfg: ExperimentConfig, args) -> Path:
    # an --output flag is taken relative to the cwd, a config value relative to the config
    return Path(args.output) if args.output is not None else cfg.resolve(cfg.output)


def run(args) -> None:
    cfg = _config(args)
    out = _output_dir(cfg, args)
    cmd = args.command
    if cmd == "simulate":
        paths = workflows.run_simulate(cfg, out)
        log.info("wrote %d files", len(paths))
    elif cmd == "study":
        paths = workflows.run_study_workflow(cfg, out)
        log.info("wrote %d study files", len(paths))
    elif cmd == "fit":
        log.info("wrote %s", workflows.run_fit(cfg, out))
    elif cmd == "importance":
        written = workflows.run_climate_workflow(cfg, out, plot=not getattr(args, "no_plot", False))
        log.info("wrote %s", ", ".join(str(p) for p in written.values()))
    elif cmd == "evaluate":
        reports = workflows.run_evaluation(cfg, out)
        log.info("wrote RMSE for %d splits", len(reports))
    elif cmd == "plot":
        log.info("wrote %s", workflows.run_plot(cfg, out, getattr(args, "input", None)))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
