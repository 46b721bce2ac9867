"""Command-line entry point: ``lancbio run | summarize | check-oracles``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

from .bench import format_summary, load_config, run_experiment, summarize, write_summary_csv
from .checks import CHECK_INSTANCES, check_oracles
from .errors import ConfigError, EmptyInput, IDXError, LancBiOError
from .problems import PROBLEMS, build_problem

log = logging.getLogger("lancbio")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    cells = load_config(args.config)
    extra = {}
    if args.mnist_images or args.mnist_labels:
        extra = {"mnist_images": args.mnist_images, "mnist_labels": args.mnist_labels}
    seeds = [args.seed] if args.seed is not None else None
    paths = run_experiment(cells, out_dir=args.out, jobs=args.jobs,
                           extra_params=extra, seeds=seeds)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    paths = []
    for pattern in args.traces:
        matched = sorted(glob.glob(pattern))
        paths.extend(matched if matched else ([pattern] if Path(pattern).is_file() else []))
    table = summarize(paths, group_by=tuple(args.group_by.split(",")))
    if args.out:
        write_summary_csv(table, args.out)
    print(format_summary(table))
    return EXIT_OK


def _cmd_check(args) -> int:
    params = dict(CHECK_INSTANCES.get(args.problem, {}))
    problem = build_problem(args.problem, seed=args.seed, **params)
    results = check_oracles(problem, n_points=args.points, seed=args.seed)
    for res in results:
        print(f"{args.problem}: {res.line()}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lancbio", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (solver, seed) cell of a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="run only this seed")
    run.add_argument("--out", default=None, help="output directory (overrides config)")
    run.add_argument("--jobs", type=int, default=1, help="worker threads")
    run.add_argument("--mnist-images", default=None, help="IDX image file for hyperclean")
    run.add_argument("--mnist-labels", default=None, help="IDX label file for hyperclean")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="mean ± std of final trace rows")
    summ.add_argument("traces", nargs="+", help="trace CSV files or glob patterns")
    summ.add_argument("--group-by", default="problem,solver,cell")
    summ.add_argument("--out", default=None, help="write the summary CSV here")
    summ.set_defaults(func=_cmd_summarize)

    chk = sub.add_parser("check-oracles", help="finite-difference check of a problem")
    chk.add_argument("problem", choices=sorted(PROBLEMS))
    chk.add_argument("--points", type=int, default=100)
    chk.add_argument("--seed", type=int, default=0)
    chk.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptyInput, IDXError, FileNotFoundError) as exc:
        print(f"lancbio: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LancBiOError, ArithmeticError, ValueError) as exc:
        print(f"lancbio: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
