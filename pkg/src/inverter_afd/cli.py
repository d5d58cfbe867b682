"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from pydantic import ValidationError

from .config import load_config
from .presets import PRESETS, run_preset

NUMERIC_ERRORS = (ArithmeticError, np.linalg.LinAlgError)


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="inverter-afd",
                                description="Active fault detection experiments.")
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--preset", required=True, choices=PRESETS, help="experiment to run")
    p.add_argument("--gamma", type=float, help="inf-norm bound on the perturbation")
    p.add_argument("--horizon", type=int, help="detection horizon N in steps")
    p.add_argument("--seed", type=_u64, help="base seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--runs", type=int, help="Monte Carlo runs (timing repetitions)")
    return p


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = dict(gamma=args.gamma, horizon=args.horizon, seed=args.seed, out=args.out,
                     runs=args.runs)
    try:
        cfg = load_config(args.config)
        files = run_preset(args.preset, cfg, overrides)
    except ValidationError as exc:
        return _fail(2, "config", str(exc))
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(2, "config", str(exc))
    except NUMERIC_ERRORS as exc:
        return _fail(1, "numeric", f"{type(exc).__name__}: {exc}")
    except ValueError as exc:
        return _fail(2, "config", str(exc))
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
