"""Command line entry point: ``caviar fit`` and ``caviar mc``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import MCConfig, RunConfig, read_json
from .errors import CaviarError
from .pipeline import exit_code_for, run, run_mc

log = logging.getLogger("caviar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caviar",
        description="Estimate and backtest conditional autoregressive VaR models.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more log output on stderr (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "fit every configured regime and quantile level to a return series"),
        ("mc", "run a Monte Carlo experiment on synthetic data"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        raw = read_json(args.config)
        if args.command == "fit":
            cfg = RunConfig.from_dict(raw, base_dir=Path(args.config).resolve().parent)
            code, _ = run(cfg.with_overrides(args.out, args.seed))
        else:
            cfg = MCConfig.from_dict(raw)
            code, _ = run_mc(cfg.with_overrides(args.out, args.seed))
    except CaviarError as exc:
        log.error("%s", exc)
        return exit_code_for(exc)
    return code


if __name__ == "__main__":
    sys.exit(main())
