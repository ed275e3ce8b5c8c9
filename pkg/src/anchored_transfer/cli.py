"""Command-line entry point: ``cov``, ``markov`` and ``denoise`` subcommands."""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .matcore import MatrixFormatError

_KIND = {"cov": "covariance", "markov": "markov", "denoise": "denoise-file"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anchored-transfer",
                                 description="Anchored transfer estimation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "cov": "covariance study over a grid of target sample sizes",
        "markov": "Markov frequency-matrix study over a grid of trajectory lengths",
        "denoise": "transfer-denoise a target matrix read from a file",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--trials", type=int, help="override trials")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes for trial cells")
        sp.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    kind = _KIND[args.command]
    overrides = {"master_seed": args.seed, "trials": args.trials, "out": args.out, "jobs": args.jobs}
    try:
        cfg = harness.load_config(args.config, kind, overrides)
    except (OSError, harness.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    level = max(args.verbose, cfg.verbosity)
    logging.basicConfig(level=logging.WARNING - 10 * min(level, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if kind == "denoise-file":
            out = harness.denoise_file(cfg)
            rep = out["report"]
            print(f"iterations={rep['iterations']} converged={str(rep['converged']).lower()} "
                  f"out={out['out']}")
            return 0
        runner = harness.run_covariance_experiment if kind == "covariance" else harness.run_markov_experiment
        result = runner(cfg)
    except (OSError, MatrixFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    paths = harness.write_results(result, cfg.out)
    problems = harness.verify_aggregates(paths["results"], paths["aggregate"])
    for msg in problems:
        print(f"aggregate check: {msg}", file=sys.stderr)
    print(f"{len(result.records)} rows -> {paths['results']}")
    if result.failures:
        print(f"{len(result.failures)} of {result.total_cells} trial cells failed", file=sys.stderr)
    if result.failure_rate > harness.FAILURE_THRESHOLD or problems:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
