"""Command-line front end.

Exit codes: 0 all checks passed, 2 a sweep verdict or verification threshold
failed, 3 configuration or hypothesis validation failed, 4 solver instability.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .harness import (ConfigError, HypothesisError, parse_config, run_sweep,
                      validate_only, write_outputs)
from .solver import SolverInstabilityError, run_mms

EXIT_OK = 0
EXIT_VERDICT = 2
EXIT_CONFIG = 3
EXIT_UNSTABLE = 4


def _load_config(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file: {exc}") from exc
    return parse_config(text)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    report = run_sweep(cfg, jobs=args.jobs, snapshots=args.snapshots,
                       out_dir=args.out)
    paths = write_outputs(report, out_dir=args.out)
    print(report.verdict_table())
    print(f"\nwrote: {', '.join(str(p) for p in paths)}")
    print(f"overall: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERDICT


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    result = validate_only(cfg)
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_CONFIG


def _cmd_mms(args) -> int:
    ok = True
    adv = run_mms(c=1.0, eps=0.1, resolutions=[400, 800])
    print(f"{adv.label}: errors {['%.3e' % e for e in adv.errors]}, "
          f"orders {['%.3f' % o for o in adv.orders]}")
    if adv.orders[-1] < 0.9:
        ok = False
        print("  -> FAIL: observed order below 0.9")
    heat = run_mms(c=0.0, eps=0.05, resolutions=[400, 800])
    ratio = heat.errors[0] / heat.errors[1]
    print(f"{heat.label}: errors {['%.3e' % e for e in heat.errors]}, "
          f"refinement ratio {ratio:.3f}")
    if ratio < 1.8:
        ok = False
        print("  -> FAIL: refinement ratio below 1.8")
    print("solver verification:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERDICT


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vvflux",
        description="viscosity sweeps and diagnostics for interface-switching "
                    "conservation laws")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a viscosity sweep from a config file")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="viscosity levels to run in parallel")
    p_run.add_argument("--snapshots", action="store_true",
                       help="dump per-probe field snapshots (large)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check hypotheses without solving")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_mms = sub.add_parser("mms", help="solver verification against exact solutions")
    p_mms.set_defaults(func=_cmd_mms)

    p_ver = sub.add_parser("version", help="print the tool version")
    p_ver.set_defaults(func=lambda args: (print(f"vvflux {__version__}"), EXIT_OK)[1])

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"hypothesis validation failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverInstabilityError as exc:
        print(f"solver instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE


if __name__ == "__main__":
    sys.exit(main())
