"""``python -m nnkam`` / ``nnkam``: run, list and corpus subcommands.

Exit codes: 0 all evaluated criteria pass, 1 a criterion failed, 2 bad
arguments or configuration, 3 an experiment aborted.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nnkam", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run experiments and write report bundles")
    run.add_argument("experiments", nargs="*", help="experiment names (alternative to --spec)")
    run.add_argument("--spec", type=Path, help="config file: one [section] per experiment")
    run.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    run.add_argument("--out", type=Path, help="output directory (default: reports)")
    run.add_argument("--grid", type=harness.parse_grid, help="grid shape, e.g. 16x16x16x16")
    run.add_argument("--max-steps", type=int, help="iteration cap for kam-run")
    sub.add_parser("list", help="list experiments and the criteria they judge")
    corpus = sub.add_parser("corpus", help="write a deterministic corpus")
    corpus.add_argument("kind", choices=["weierstrass", "bandlimited", "diffeo", "acs"])
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--out", type=Path, default=Path("corpus"))
    corpus.add_argument("--grid", type=harness.parse_grid, help="grid shape (diffeo, acs)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, (_, crit) in harness.EXPERIMENTS.items():
            print(f"{name:18s} criteria {', '.join(str(c) for c in crit)}: "
                  f"{'; '.join(harness.CRITERIA[c] for c in crit)}")
        return 0
    if args.command == "corpus":
        params = {"shape": args.grid} if args.grid else {}
        items = harness.generate_corpus(args.seed, args.kind, **params)
        harness.write_corpus(items, args.out, args.seed, args.kind)
        print(f"wrote {len(items)} {args.kind} items to {args.out}")
        return 0
    overrides = {}
    if args.grid:
        overrides["grid"] = args.grid
    if args.max_steps is not None:
        overrides["max_steps"] = args.max_steps
    try:
        if args.spec:
            specs = harness.load_specs(args.spec, args.seed, args.out, overrides)
        elif args.experiments:
            specs = [harness.ExperimentSpec(name, dict(overrides), args.seed or 0, args.out or Path("reports"))
                     for name in args.experiments]
        else:
            print("nnkam run: give experiment names or --spec", file=sys.stderr)
            return 2
    except (OSError, ValueError) as exc:
        print(f"nnkam run: {exc}", file=sys.stderr)
        return 2
    try:
        code, _ = harness.run_all(specs, log=lambda msg: print(msg, flush=True))
    except RuntimeError as exc:
        print(f"nnkam run: {exc}", file=sys.stderr)
        return 3
    return code


if __name__ == "__main__":
    sys.exit(main())
