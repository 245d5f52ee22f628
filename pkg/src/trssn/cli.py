"""Command-line entry point ``trssn``.

Exit codes: 0 when every run converged, 2 when some run did not converge or
failed, 1 on configuration or I/O errors.
"""

import argparse
import json
import sys

from .bench import PROBLEMS, SOLVERS, BenchConfig, ConfigError, run_benchmark
from .io import DataFormatError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2


def _common_flags(parser):
    parser.add_argument("--config", help="flat JSON configuration file")
    parser.add_argument("--output-dir", help="directory for traces and summary.csv")
    parser.add_argument("--seed", type=int, help="seed for synthetic instances")
    parser.add_argument("--max-iters", type=int, help="iteration cap per run")
    parser.add_argument("--time-budget", type=float, help="wall-clock cap per run in seconds")
    parser.add_argument("--tol", type=float, help="stopping tolerance")
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trssn", description="Normal-map trust-region Newton solver and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solver on one problem")
    _common_flags(p_solve)
    p_solve.add_argument("--problem", choices=PROBLEMS)
    p_solve.add_argument("--solver", choices=SOLVERS)
    p_solve.add_argument("--data", dest="data_path", help="LIBSVM file or PGM image")
    p_solve.add_argument("--mu", type=float, help="regularization weight")

    p_bench = sub.add_parser("bench", help="run every configured solver")
    _common_flags(p_bench)
    return parser


def config_from_args(args):
    """Merge the JSON file (if any) with command-line overrides."""
    data = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
    overrides = dict(output_dir=args.output_dir, seed=args.seed, max_iters=args.max_iters,
                     time_budget=args.time_budget, tol=args.tol)
    if args.command == "solve":
        overrides.update(problem=args.problem, data_path=args.data_path, mu=args.mu)
        if args.solver is not None:
            overrides["solvers"] = [args.solver]
    data.update({k: v for k, v in overrides.items() if v is not None})
    config = BenchConfig.from_dict(data)
    if args.command == "solve" and len(config.solvers) != 1:
        raise ConfigError("solve runs exactly one solver; pass --solver")
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    log = None if args.quiet else (lambda line: print(line, file=sys.stderr))
    try:
        config = config_from_args(args)
        rows = run_benchmark(config, log=log)
    except (ConfigError, DataFormatError, OSError) as exc:
        print(f"trssn: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        for row in rows:
            print(f"{row['solver']:<12} {row['status']:<17} iters={row['n_iter']} "
                  f"psi={row['final_psi']} rel_err={row['final_rel_err']}")
    return EXIT_OK if all(row["converged"] for row in rows) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
