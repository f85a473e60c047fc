"""Command line: ``forge run``, ``forge validate``, ``forge spectra``.

Monte-Carlo batches run on ``FORGE_THREADS`` worker threads (default 1). Results do
not depend on the thread count.
"""
from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_json, parse_config, validate_config

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG = 0, 1, 2


def _run(args) -> int:
    try:
        cfg = parse_config(load_json(args.config))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    from .experiments import run_experiment

    try:
        summary = run_experiment(cfg, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for c in summary["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}")
    print(f"wrote {args.out or cfg.output}")
    if args.check and not summary["passed"]:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _validate(args) -> int:
    report = validate_config(args.config)
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["valid"] else EXIT_CONFIG


def _spectra(args) -> int:
    from fractions import Fraction

    from .experiments import spectra_table

    try:
        spin = Fraction(args.spin)
        rows = spectra_table(spin)
    except (ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("operator,eigenvalue,multiplicity")
    for op, val, mult in rows:
        print(f"{op},{val:.12g},{mult}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="forge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--check", action="store_true", help="exit 1 if any check fails")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.set_defaults(func=_run)
    v = sub.add_parser("validate", help="validate a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_validate)
    s = sub.add_parser("spectra", help="print spin super-operator spectra")
    s.add_argument("--spin", required=True, help="spin quantum number, e.g. 1/2, 1, 3/2")
    s.set_defaults(func=_spectra)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
