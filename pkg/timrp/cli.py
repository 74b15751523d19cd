"""
tim solve|converge|sweep

Examples:
    tim solve --topology net.json --solver tr --out outputs/result.json
    tim converge --users 100 --links 400 --rank 4 --solver tr --solver cg --solver als
    tim sweep --users 20 --trials 100 --jobs 8
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from .config import Config
from .experiments import (
    DEFAULT_LINK_GRID,
    DEFAULT_SWEEP_TRIALS,
    DEFAULT_SWEEP_USERS,
    EXIT_ERROR,
    ExperimentConfig,
    run,
)
from .solvers import SOLVER_KINDS
from .utils import setup_logging

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_ERROR; exit code 2 is reserved for the rank cap."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _link_grid(text: str):
    try:
        grid = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"link grid must be comma-separated integers, got {text!r}")
    if not grid:
        raise argparse.ArgumentTypeError("link grid is empty")
    return grid


def parse_args(argv: Optional[List[str]] = None, config: Optional[Config] = None):
    config = config or Config()

    common = _ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--topology", metavar="FILE", help="topology JSON file")
    source.add_argument("--users", type=int, metavar="K", help="user count of a random topology")
    common.add_argument("--links", type=int, metavar="L", help="interference links of a random topology")
    common.add_argument("--solver", action="append", choices=SOLVER_KINDS,
                        help="inner solver; repeat for several (converge/sweep)")
    common.add_argument("--eps", type=float, default=config.EPS, help=f"target normalized residual (default {config.EPS})")
    common.add_argument("--grad-tol", type=float, default=config.GRAD_TOL)
    common.add_argument("--max-iter", type=int, default=config.MAX_ITER)
    common.add_argument("--max-rank", type=int, default=None)
    common.add_argument("--seed", type=int, default=config.SEED)
    common.add_argument("--out", metavar="PATH", help="result file (solve) or output directory")
    common.add_argument("--jobs", type=int, default=config.MAX_WORKERS, help="worker threads")
    common.add_argument("--rank-rule", choices=("variety", "simple"), default="variety")
    common.add_argument("--no-timing", dest="timing", action="store_false",
                        help="write elapsed_ms as 0 for byte-identical reruns")
    common.add_argument("--log-level", default=config.LOG_LEVEL)
    common.add_argument("--log-file", default=config.LOG_FILE)

    p = _ArgumentParser(prog="tim", description="minimum channel-use transceiver design for partially connected interference networks")
    sub = p.add_subparsers(dest="mode", required=True)

    solve = sub.add_parser("solve", parents=[common], help="detect the minimum rank of one instance")
    solve.add_argument("--transceivers", metavar="PATH", help="also write the extracted transceivers")

    converge = sub.add_parser("converge", parents=[common], help="fixed-rank convergence traces")
    converge.add_argument("--rank", type=int, required=True, metavar="R")

    sweep = sub.add_parser("sweep", parents=[common], help="symmetric DoF versus interference links")
    sweep.add_argument("--trials", type=int, default=DEFAULT_SWEEP_TRIALS)
    sweep.add_argument("--link-grid", type=_link_grid, default=DEFAULT_LINK_GRID, metavar="L1,L2,...")

    return p.parse_args(argv)


def build_config(args, config: Config) -> ExperimentConfig:
    mode = args.mode
    if args.solver:
        solvers = tuple(dict.fromkeys(args.solver))
    else:
        solvers = ("tr",) if mode == "solve" else SOLVER_KINDS

    out = args.out
    if out is None:
        out = os.path.join(config.OUTPUT_DIR, "solve_result.json") if mode == "solve" else config.OUTPUT_DIR

    users = args.users
    if mode == "sweep" and users is None:
        users = DEFAULT_SWEEP_USERS

    return ExperimentConfig(
        mode=mode,
        out=out,
        topology=args.topology,
        users=users,
        links=args.links,
        solvers=solvers,
        eps=args.eps,
        grad_tol=args.grad_tol,
        max_iter=args.max_iter,
        max_rank=args.max_rank,
        rank=getattr(args, "rank", None),
        trials=getattr(args, "trials", 1),
        seed=args.seed,
        jobs=args.jobs,
        link_grid=getattr(args, "link_grid", DEFAULT_LINK_GRID),
        rank_step_rule=args.rank_rule,
        timing=args.timing,
        transceivers=getattr(args, "transceivers", None),
    )


def main(argv: Optional[List[str]] = None) -> int:
    try:
        config = Config.from_env()
        config.validate()
    except ValueError as e:
        print(f"tim: {e}", file=sys.stderr)
        return EXIT_ERROR

    args = parse_args(argv, config)
    level = getattr(logging, str(args.log_level).upper(), None)
    if not isinstance(level, int):
        print(f"tim: unknown log level {args.log_level!r}", file=sys.stderr)
        return EXIT_ERROR
    setup_logging(level, args.log_file)

    try:
        experiment = build_config(args, config)
        logger.info("=" * 70)
        return run(experiment)
    except (OSError, ValueError) as e:
        logger.error(f"tim: {type(e).__name__}: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
