"""Command-line entry point: ``lobphys <command> [options]``.

Exit status is 0 on success, 1 for data errors and 2 for configuration
errors. JSON summaries go to stdout, progress to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback

from . import __version__
from .errors import ConfigError, DataError
from .pipeline import COMMANDS, RunConfig, summary_json


def _dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("full", nargs="?", help="full-channel capture (normalized CSV or JSON lines)")
    p.add_argument("--ticker", help="ticker-channel capture")
    p.add_argument("--manifest", help="JSON with tick_size, lot_size, pair")
    p.add_argument("--format", dest="fmt", choices=("auto", "csv", "jsonl"))
    p.add_argument("--quotes", choices=("book", "ticker"),
                   help="reference quotes from the replayed book or the ticker channel")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of the settings below; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--strict", action="store_true", default=None,
                   help="fail on malformed records and unknown order ids")
    p.add_argument("--seed", type=int)
    p.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")


def _analysis(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, help="sampling interval in seconds (default 0.1)")
    p.add_argument("--window", type=float, help="velocity / regression window in seconds (default 1)")
    p.add_argument("--depth-grid", help="log-spaced depth grid min:max:n in ticks")
    p.add_argument("--signed-correlation", action="store_true", default=None,
                   help="correlate reacted volume with signed rather than absolute price moves")
    p.add_argument("--alpha", type=int, help="active depth in ticks (skips estimation)")
    p.add_argument("--horizons", help="comma-separated horizons in seconds (default 1,10)")
    p.add_argument("--vpin-bucket", type=int, help="VPIN bucket size in lots")
    p.add_argument("--vpin-rolling", type=int, help="buckets per VPIN value (default 10)")
    p.add_argument("--bar-seconds", type=float, help="window for Roll, Kyle and Amihud estimates (default 60)")
    p.add_argument("--granger-lags", help="lag offsets lo:hi[:step] or a comma list, seconds")
    p.add_argument("--n-ar-lags", type=int, help="autoregressive order of the Granger test (default 5)")
    p.add_argument("--predictions", help="CSV ts_micros,value scored for directional accuracy")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobphys", description="Order-book kinetics toolkit")
    parser.add_argument("--version", action="version", version=f"lobphys {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest-check": "parse and replay a capture, report counts and consistency",
        "active-depth": "estimate the active depth",
        "measures": "energy, momentum and baseline measures",
        "evaluate": "regressions, Granger sweeps and directional accuracy",
        "synth": "write a seeded synthetic capture",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "synth":
            p.add_argument("--duration", type=float, help="seconds of simulated flow")
            p.add_argument("--active-depth", type=int, dest="active_depth", help="planted depth d* in ticks")
            p.add_argument("--drift", type=float, help="fair-value drift, quote units per second")
            p.add_argument("--volatility", type=float, help="fair-value volatility, quote units per sqrt(s)")
            p.add_argument("--coupling", help="reaction strength: none, weak, medium, strong or a number")
            p.add_argument("--no-ticker-sizes", action="store_true", default=None,
                           help="omit best bid/ask sizes from the ticker channel")
        else:
            _dataset_args(p)
            _analysis(p)
    return parser


_SYNTH_FLAGS = ("duration", "active_depth", "drift", "volatility", "coupling")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "command", "quiet") + _SYNTH_FLAGS + ("no_ticker_sizes",)}
    if args.command == "synth":
        synth = dict(file_cfg.pop("synth", {}) or {})
        for k in _SYNTH_FLAGS:
            v = getattr(args, k, None)
            if v is not None:
                synth[k] = _number(v) if k == "coupling" else v
        if getattr(args, "no_ticker_sizes", None):
            synth["ticker_sizes"] = False
        flags["synth"] = synth
    return RunConfig.build(file_cfg, flags)


def _number(text):
    try:
        return float(text)
    except ValueError:
        return text


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the exception passed through."""
    name = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = frame.filename.replace("\\", "/").split("/")
        if "lobphys" in parts:
            name = parts[-1].removesuffix(".py")
    return name


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        summary = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"lobphys: error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"lobphys: error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(summary_json(summary) + "\n")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
