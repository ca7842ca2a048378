"""Command-line entry point.

Exit codes: 0 success, 1 a suite check failed, 2 config error,
3 resource cap exceeded, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, SUITES, run_experiment, run_suite
from .merge import ResourceCapError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibbsmerge",
        description="Recursive thermal-state preparation experiments for 1D chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to a YAML experiment config")
    run_p.add_argument("--seed", type=int, default=None, help="override run.seed")
    run_p.add_argument("--trials", type=int, default=None, help="override run.trials")
    run_p.add_argument("--out-dir", default=None, help="override output.directory")
    run_p.add_argument(
        "--cost-mode", choices=["faithful", "single-pass"], default=None,
        help="override run.cost_mode",
    )
    run_p.add_argument(
        "--max-qubits", type=int, default=None,
        help="cap on log2 of the Hilbert dimension (default 10)",
    )

    suite_p = sub.add_parser("suite", help="run a canned validation suite")
    suite_p.add_argument("name", help=f"one of: {', '.join(sorted(SUITES))}")
    suite_p.add_argument("--out-dir", default="out")
    suite_p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            result = run_experiment(
                args.config,
                out_dir=args.out_dir,
                seed=args.seed,
                trials=args.trials,
                cost_mode=args.cost_mode,
                max_qubits=args.max_qubits,
            )
            print(f"wrote {result.csv_path} and {result.summary_path}")
            print(
                "final trace distance to exact Gibbs: "
                f"{result.summary['final_trace_distance']:.6g}"
            )
            return 0
        result = run_suite(args.name, out_dir=args.out_dir, seed=args.seed)
        print(json.dumps(result.summary, indent=2, sort_keys=True))
        print(f"wrote {result.csv_path} and {result.summary_path}")
        if not result.passed:
            print(f"suite {args.name}: FAIL", file=sys.stderr)
            return 1
        print(f"suite {args.name}: PASS")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
