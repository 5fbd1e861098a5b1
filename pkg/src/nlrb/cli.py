"""Command line entry point: ``nlrb <command> --config <file> [--out DIR] [--seed N] [--mesh-exp K]``.

Exit codes: 0 when every check passed, 1 when a check failed, 2 for
configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .study import COMMANDS, ConfigError, StudyConfig, load_config, run_command, validate_config

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlrb", description="Nonlocal reduced basis studies.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML study config; defaults apply when omitted")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed for the random test sets (overrides the config)")
    p.add_argument("--mesh-exp", type=int, help="use h = 2^-k (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else StudyConfig()
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        if args.mesh_exp is not None:
            cfg.mesh.mesh_exp = args.mesh_exp
        validate_config(cfg)
        report = run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    for name, rows in report.manifest.items():
        print(f"wrote {name} ({rows} rows)")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
