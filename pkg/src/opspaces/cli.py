"""Command-line driver: ``opspaces <verb> [--config FILE] [--seed N] [--out PATH] [--format csv|json]``.

The exit code is 0 exactly when every invariant asserted by the experiment holds.
"""
from __future__ import annotations

import argparse
import sys

from . import experiments as ex

VERBS = {
    "space": ex.space_experiment,
    "tree": ex.tree_experiment,
    "norms": ex.norms_experiment,
    "decompose": ex.decomposition_roundtrip,
    "interp": ex.interpolation_experiment,
    "multiplier": ex.multiplier_experiment,
    "sweep": ex.threshold_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opspaces", description="Function spaces and spectral multipliers on finite spaces.")
    ap.add_argument("verb", choices=sorted(VERBS))
    ap.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--out", help="output path (default: config out, else stdout)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ex.ExperimentConfig.from_json(args.config) if args.config else ex.ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        result = VERBS[args.verb](cfg)
    except (ValueError, OSError) as err:
        print(f"opspaces: error: {err}", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    text = ex.write_report(result, out, args.format)
    if out is None:
        sys.stdout.write(text)
    for name, passed, detail in result.checks:
        if not passed:
            print(f"FAIL {name} {detail}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
