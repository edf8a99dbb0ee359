"""charflow command-line interface.

    charflow <solve|traces|verify-traces|verify-energy|symbol-check|convergence>
             --config <path> [--out <dir>] [--seed <u64>] [--levels <n>]

Exit codes: 0 ok, 2 config error, 3 validation error, 4 runtime error,
5 verification-check failure.  Failures emit a JSON error record on
stderr (and into <out>/error.json when --out is given).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CharflowError, ConfigError
from .reports import error_record, write_json
from .run import (
    run_convergence,
    run_solve,
    run_symbol_check,
    run_traces,
    run_verify_energy,
    run_verify_traces,
)
from .scenarios import scenario_from_config

COMMANDS = ("solve", "traces", "verify-traces", "verify-energy",
            "symbol-check", "convergence")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="charflow",
        description="hyperbolic systems with totally characteristic boundary")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML or JSON scenario config")
    ap.add_argument("--out", default=None, help="artifact output directory")
    ap.add_argument("--seed", type=int, default=20240801,
                    help="seed for the randomized verification suites")
    ap.add_argument("--levels", type=int, default=2,
                    help="refinement levels for convergence/verification")
    return ap


def _dispatch(args) -> dict:
    if args.command == "symbol-check":
        # the config only contributes debug flags here
        perturb = False
        try:
            sc = scenario_from_config(args.config)
            perturb = sc.perturb_adjoint
        except ConfigError:
            raise
        report = run_symbol_check(seed=args.seed, out_dir=args.out,
                                  perturb_adjoint=perturb)
        return report
    sc = scenario_from_config(args.config)
    if args.command == "solve":
        return run_solve(sc, out_dir=args.out)
    if args.command == "traces":
        return run_traces(sc, out_dir=args.out)
    if args.command == "verify-traces":
        return run_verify_traces(sc, out_dir=args.out, levels=args.levels)
    if args.command == "verify-energy":
        return run_verify_energy(sc, out_dir=args.out)
    return run_convergence(sc, levels=args.levels, out_dir=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = _dispatch(args)
    except CharflowError as exc:
        rec = error_record(exc)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if args.out:
            write_json(Path(args.out) / "error.json", rec)
        return exc.exit_code
    except Exception as exc:  # unexpected runtime failure
        rec = error_record(exc)
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if args.out:
            write_json(Path(args.out) / "error.json", rec)
        return 4
    ok = report.get("ok", True)
    summary = {k: v for k, v in report.items()
               if isinstance(v, (int, float, str, bool))}
    print(json.dumps(summary, sort_keys=True))
    if not ok:
        rec = {"error": "VerificationFailure", "exit_code": 5,
               "message": f"{args.command} checks failed for {args.config}"}
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        if args.out:
            write_json(Path(args.out) / "error.json", rec)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
