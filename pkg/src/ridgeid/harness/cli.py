"""Command line entry point.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
an experiment fails at run time.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..model import GenerationError, generate_network
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import RUNNERS
from .report import load_report, report_csv, write_report

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (a file path for gen-network)")
    common.add_argument("--threads", type=_positive, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="what to print on stdout")

    parser = _Parser(prog="ridgeid", description="Identify shallow ridge-function networks from queries.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-network", parents=[common], help="sample a random network")
    gen.add_argument("--m", type=_positive, required=True)
    gen.add_argument("--d", type=_positive)
    gen.add_argument("--eps", type=float, required=True)

    for name in RUNNERS:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
        p.add_argument("--config", help="key = value or JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    rep = sub.add_parser("report", parents=[common], help="re-render a saved JSON report")
    rep.add_argument("path", help="report JSON written by an experiment")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    raw = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    if raw:
        cfg = cfg.updated(**raw)
    return cfg.updated(kind=args.command, seed=args.seed)


def _gen_network(args) -> int:
    seed = 0 if args.seed is None else args.seed
    net = generate_network(args.m, args.d or args.m, args.eps, seed=seed)
    text = net.to_json()
    if args.out:
        path = Path(args.out)
        if path.is_dir():
            path = path / "network.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n")
    if args.format == "json" or not args.out:
        print(text)
    return EXIT_OK


def _emit(report: dict, fmt: str) -> None:
    if fmt == "csv":
        sys.stdout.write(report_csv(report))
    else:
        sys.stdout.write(json.dumps(report["aggregate"], indent=2) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_CONFIG
    try:
        if args.command == "gen-network":
            return _gen_network(args)
        if args.command == "report":
            report = load_report(args.path)
            if args.out:
                write_report(report, args.out)
            _emit(report, args.format)
            return EXIT_OK
        cfg = _config(args)
    except (ConfigError, ValueError) as exc:
        print(f"ridgeid: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, OSError) as exc:
        print(f"ridgeid: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        report = RUNNERS[cfg.kind](cfg, threads=args.threads)
        if args.out:
            write_report(report, args.out)
        _emit(report, args.format)
    except Exception as exc:  # noqa: BLE001 - any failure of a run maps to exit 2
        print(f"ridgeid: {cfg.kind} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
