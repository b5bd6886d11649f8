"""Command-line runner.

Usage::

    hecka <subcommand> [--config FILE] [--seed N] [--out DIR] [--override key=value ...]

Subcommands: sphere, quadrants, regress1d, cka-heatmap, ood-preview, eval.
Exit status is 0 on success, 1 for configuration errors and 2 for numerical
failures (non-finite losses, degenerate Gram matrices).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import ConfigError, resolve_config, run_experiment
from .kernels import DegenerateGramError, DivergentEnergyError
from .models import CheckpointError
from .ood import OodConfigError
from .train import NonFiniteLossError

__all__ = ["main", "build_parser"]

SUBCOMMANDS = {"sphere": "sphere", "quadrants": "quadrants", "regress1d": "regress1d",
               "cka-heatmap": "cka_heatmap", "ood-preview": "ood_preview", "eval": "eval"}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hecka", description="Feature-diversity ensemble studies.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="run this single seed")
        p.add_argument("--out", type=Path, default=Path("runs") / name, help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path config override; repeatable")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(SUBCOMMANDS[args.command], _load_config(args.config), args.override, args.seed)
        manifest = run_experiment(cfg, args.out)
    except (NonFiniteLossError, DegenerateGramError, DivergentEnergyError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OodConfigError, CheckpointError, ValueError, TypeError, KeyError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
