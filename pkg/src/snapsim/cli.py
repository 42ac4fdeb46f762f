"""Command-line entry point.

Exit status: 0 success, 1 usage or config error, 2 runtime or I/O error,
3 reference check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .acceptance import evaluate
from .config import METRICS, ConfigSyntaxError, load_config
from .engine import ConfigError, default_config, validate_config
from .report import InsufficientData, cmd_analyze, cmd_compare, cmd_simulate

log = logging.getLogger("snapsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config(args):
    config = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
        problems = validate_config(config)
        if problems:
            raise ConfigError(problems)
    return config


def _emit(doc, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
        return
    for key, value in doc.items():
        print(f"{key}: {value}")


def _summary_text(summary) -> None:
    for group, g in summary["groups"].items():
        parts = [f"{group:<22} runs {g['successful_runs']}/{g['runs']}"]
        for label, stat in (("startup", g["startup"]), ("cold", g["service"]["cold"]),
                            ("hot", g["service"]["hot"])):
            if stat["status"] == "ok":
                parts.append(
                    f"{label} {stat['median_ms']:.3f} [{stat['ci_low_ms']:.3f}, {stat['ci_high_ms']:.3f}] ms"
                )
            else:
                parts.append(f"{label} no data")
        print("  ".join(parts))


def run_simulate(args) -> int:
    out = args.out or "out"
    paths = cmd_simulate(_config(args), out)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def run_analyze(args) -> int:
    summary = cmd_analyze(args.out or "out")
    if args.format == "json":
        _emit(summary, "json")
    else:
        _summary_text(summary)
    return EXIT_OK


def run_compare(args) -> int:
    report = cmd_compare(args.out or "out", args.a, args.b, args.metric)
    _emit(report, args.format)
    return EXIT_OK


def run_check(args) -> int:
    config = _config(args)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out) if args.out else Path(tmp)
        cmd_simulate(config, out)
        summary = cmd_analyze(out)
        checks = evaluate(out, summary)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snapsim", description="Snapshot cold-start simulation and analysis")
    parser.add_argument("--version", action="version", version=f"snapsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config (JSON); defaults to the builtin experiment")
            p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", "--data", dest="out", help="bundle directory (default: ./out)")
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("simulate", help="run the experiment and write raw tables")
    common(p)
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("analyze", help="summarize a bundle and emit plot data")
    common(p, config=False)
    p.set_defaults(func=run_analyze)

    p = sub.add_parser("compare", help="compare two groups of a bundle")
    common(p, config=False)
    p.add_argument("--a", required=True, help="slower group, e.g. noop/seuss")
    p.add_argument("--b", required=True, help="faster group, e.g. noop/prebaking")
    p.add_argument("--metric", choices=METRICS, default="startup")
    p.set_defaults(func=run_compare)

    p = sub.add_parser("check", help="simulate, analyze and verify the reference results")
    common(p)
    p.set_defaults(func=run_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"snapsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except ConfigSyntaxError as exc:
        print(f"snapsim: config syntax error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print("snapsim: invalid config:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"snapsim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        where = f" ({exc.filename})" if exc.filename else ""
        print(f"snapsim: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
