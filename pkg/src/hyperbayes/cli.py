"""Command-line entry point: ``run``, ``validate`` and ``gen-data``.

Exit codes: 0 success, 1 unexpected package error, 2 invalid config or
arguments, 3 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .datasets import gen_multimodal, gen_xsinx, synthetic_seasonal_series
from .errors import ConfigError, HyperBayesError, TrainingDivergedError
from .experiments import run, validate

GEN_KINDS = ("xsinx", "multimodal", "seasonal")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hyperbayes", description="Train implicit posterior models from config files.")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", type=Path, default=None, help="run directory (run) or unused")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate one experiment")
    r.add_argument("config", type=Path)
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config", type=Path)
    v.add_argument("--set", action="append", metavar="KEY=VALUE")

    g = sub.add_parser("gen-data", help="write a synthetic dataset to CSV")
    g.add_argument("kind", choices=GEN_KINDS)
    g.add_argument("out", type=Path)
    return p


def _gen_data(kind: str, out: Path, seed: int) -> None:
    rng = np.random.default_rng(seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    if kind == "xsinx":
        gen_xsinx(rng=rng).to_csv(out)
    elif kind == "multimodal":
        gen_multimodal(rng=rng).to_csv(out)
    else:
        series = synthetic_seasonal_series(rng=rng)
        out.write_text("value\n" + "".join(f"{v!r}\n" for v in series.tolist()))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = _overrides(getattr(args, "set", None))
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.command == "validate":
            issues = validate(args.config, overrides)
            for issue in issues:
                print(issue, file=sys.stderr)
            if issues:
                return EXIT_CONFIG
            print(f"{args.config}: ok")
            return EXIT_OK
        if args.command == "gen-data":
            _gen_data(args.kind, args.out, 0 if args.seed is None else args.seed)
            print(args.out)
            return EXIT_OK
        result = run(args.config, out_dir=args.out_dir, overrides=overrides)
        print(json.dumps({"out_dir": str(result.out_dir), **result.metrics}, indent=2, sort_keys=True))
        return EXIT_OK
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for issue in exc.issues:
            print(issue, file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except HyperBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
