"""
Experiment commands behind the `tim` CLI: single-instance solve, fixed-rank
convergence traces, and the symmetric-DoF sweep over random topologies.

Every command returns a process exit code. Trials of a sweep run on a bounded
thread pool; rows are sorted by (solver, links, trial) before aggregation, so
results do not depend on completion order.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import pandas as pd

from .manifold import random_point
from .pursuit import PursuitOptions, riemannian_pursuit
from .solvers import SOLVER_KINDS, SolverOptions, run_solver
from .tim import attach_dof, extract_transceivers, verify_alignment
from .topology import (
    NetworkTopology,
    StreamAllocation,
    build_problem,
    load_topology,
    random_topology,
)
from .utils import save_json

logger = logging.getLogger(__name__)

MODES = ("solve", "converge", "sweep")
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_RANK_CAP = 2

DEFAULT_SWEEP_USERS = 20
DEFAULT_SWEEP_TRIALS = 100
DEFAULT_LINK_GRID = tuple(range(0, 141, 20))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    out: str
    topology: Optional[str] = None
    users: Optional[int] = None
    links: Optional[int] = None
    solvers: Tuple[str, ...] = ("tr",)
    eps: float = 1e-6
    grad_tol: float = 1e-6
    max_iter: int = 500
    max_rank: Optional[int] = None
    rank: Optional[int] = None
    trials: int = 1
    seed: int = 0
    jobs: int = 1
    link_grid: Tuple[int, ...] = DEFAULT_LINK_GRID
    rank_step_rule: str = "variety"
    timing: bool = True
    transceivers: Optional[str] = None

    def __post_init__(self):
        problems = []
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        bad = [s for s in self.solvers if s not in SOLVER_KINDS]
        if bad or not self.solvers:
            problems.append(f"solvers must be drawn from {SOLVER_KINDS}, got {list(self.solvers)}")
        if self.trials < 1:
            problems.append(f"trials must be >= 1, got {self.trials}")
        if self.jobs < 1:
            problems.append(f"jobs must be >= 1, got {self.jobs}")
        if self.topology is not None and not os.path.isfile(self.topology):
            problems.append(f"topology file not found: {self.topology}")
        if self.mode == "sweep":
            if self.users is None:
                problems.append("sweep needs --users")
            if not self.link_grid:
                problems.append("sweep needs a non-empty link grid")
        elif self.topology is None and (self.users is None or self.links is None):
            problems.append("give --topology FILE or both --users K and --links L")
        if self.mode == "converge" and (self.rank is None or self.rank < 1):
            problems.append("converge needs --rank R >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> Dict:
        doc = asdict(self)
        doc["solvers"] = list(self.solvers)
        doc["link_grid"] = list(self.link_grid)
        return doc


# ==================== HELPERS ====================
def _load_instance(config: ExperimentConfig, seed: int) -> Tuple[NetworkTopology, StreamAllocation]:
    if config.topology is not None:
        topo, streams = load_topology(config.topology)
    else:
        topo, streams = random_topology(config.users, config.links, seed), None
    return topo, streams or StreamAllocation.uniform(topo.K)


def _solver_options(config: ExperimentConfig, seed: int) -> SolverOptions:
    return SolverOptions(grad_tol=config.grad_tol, max_iter=config.max_iter, seed=seed,
                         record_timing=config.timing)


def _pursuit_options(config: ExperimentConfig, kind: str, seed: int) -> PursuitOptions:
    return PursuitOptions(eps=config.eps, max_rank=config.max_rank, inner=_solver_options(config, seed),
                          inner_kind=kind, rank_step_rule=config.rank_step_rule)


def _write_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\r\n")
    logger.info(f"💾 Saved: {path}")
    return path


def _write_manifest(config: ExperimentConfig, artifacts: List[str]) -> str:
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "artifacts": [os.path.basename(a) for a in artifacts],
    }
    return save_json(manifest, os.path.join(config.out, "run.json"))


# ==================== SOLVE ====================
def cmd_solve(config: ExperimentConfig) -> int:
    """Riemannian Pursuit on one instance; writes the result JSON (and optionally the transceivers)."""
    kind = config.solvers[0]
    topo, streams = _load_instance(config, config.seed)
    problem = build_problem(topo, streams)
    logger.info(f"[SOLVE] K={topo.K}, M={problem.M}, |omega|={problem.size}, inner solver {kind}")

    result = riemannian_pursuit(problem, _pursuit_options(config, kind, config.seed))

    doc = {
        "config": config.to_dict(),
        "seed": config.seed,
        "K": topo.K,
        "M": problem.M,
        "solver": kind,
        "success": result.success,
        "message": result.message,
        "detected_rank": result.detected_rank,
        "residual": result.residual,
        "dof": None,
        "symmetric_dof": None,
        "alignment": None,
        "stages": [stage.summary() for stage in result.stage_traces],
    }

    sol = None
    if result.success:
        sol = extract_transceivers(result.X, problem, config.eps)
        result = attach_dof(result, sol)
        report = verify_alignment(sol, topo, streams, tol=10 * config.eps * math.sqrt(problem.M))
        doc.update(dof=list(result.dof), symmetric_dof=sol.symmetric_dof, alignment=report.to_dict())

    save_json(doc, config.out)
    if sol is not None and config.transceivers:
        save_json({"config": config.to_dict(), "seed": config.seed, **sol.to_dict()}, config.transceivers)

    if not result.success:
        logger.warning(f"[SOLVE] no completion within rank {result.detected_rank}; best residual {result.residual:.3e}")
        return EXIT_RANK_CAP
    logger.info(f"[SOLVE] ✅ detected rank {result.detected_rank}, residual {result.residual:.3e}")
    return EXIT_OK


# ==================== CONVERGE ====================
def cmd_converge(config: ExperimentConfig) -> int:
    """Fixed-rank traces, one CSV per solver, all solvers from the same seeded start."""
    topo, streams = _load_instance(config, config.seed)
    problem = build_problem(topo, streams)
    X0 = random_point(problem.M, config.rank, config.seed)
    opts = _solver_options(config, config.seed)
    logger.info(f"[CONVERGE] K={topo.K}, M={problem.M}, rank {config.rank}, solvers {list(config.solvers)}")

    results = {}
    with ThreadPoolExecutor(max_workers=min(config.jobs, len(config.solvers))) as executor:
        future_to_kind = {executor.submit(run_solver, kind, problem, X0, opts): kind for kind in config.solvers}
        for future in as_completed(future_to_kind):
            kind = future_to_kind[future]
            results[kind] = future.result()
            final = results[kind].final
            logger.info(f"[CONVERGE] {kind}: {results[kind].iterations} iterations, "
                        f"residual {final.residual:.3e} ({results[kind].message})")

    artifacts = []
    for kind in config.solvers:
        frame = pd.DataFrame([record.as_dict() for record in results[kind].trace])
        artifacts.append(_write_csv(frame, os.path.join(config.out, f"converge_{kind}.csv")))
    _write_manifest(config, artifacts)
    return EXIT_OK


# ==================== SWEEP ====================
def run_trial(config: ExperimentConfig, kind: str, links: int, trial: int) -> Dict:
    """One random topology, one pursuit; the trial seed is seed + trial."""
    seed = config.seed + trial
    topo = random_topology(config.users, links, seed)
    problem = build_problem(topo)
    result = riemannian_pursuit(problem, _pursuit_options(config, kind, seed))
    return {
        "solver": kind,
        "links": links,
        "trial": trial,
        "seed": seed,
        "detected_rank": result.detected_rank,
        "symmetric_dof": 1.0 / result.detected_rank,
        "residual": result.residual,
        "success": result.success,
    }


def summarize_sweep(trials: pd.DataFrame) -> pd.DataFrame:
    summary = (
        trials.groupby(["solver", "links"], sort=False)["symmetric_dof"]
        .agg(mean_symmetric_dof="mean", std=lambda s: s.std(ddof=0), trials="count")
        .reset_index()
    )
    return summary


def cmd_sweep(config: ExperimentConfig) -> int:
    """Average symmetric DoF versus interference-link count, per inner solver."""
    tasks = [(kind, links, trial) for kind in config.solvers for links in config.link_grid
             for trial in range(config.trials)]
    logger.info(f"[SWEEP] K={config.users}, grid {list(config.link_grid)}, {config.trials} trials, "
                f"solvers {list(config.solvers)}: {len(tasks)} pursuits on {config.jobs} workers")

    rows, failures = [], []
    with ThreadPoolExecutor(max_workers=config.jobs) as executor:
        future_to_task = {executor.submit(run_trial, config, *task): task for task in tasks}
        for done, future in enumerate(as_completed(future_to_task), start=1):
            task = future_to_task[future]
            try:
                rows.append(future.result())
            except Exception as e:
                logger.error(f"[SWEEP] trial {task} failed: {e}")
                failures.append(task)
            if done % max(1, len(tasks) // 20) == 0:
                logger.info(f"[SWEEP] {done}/{len(tasks)} trials done")

    if failures:
        logger.error(f"[SWEEP] {len(failures)} trials failed; no artifacts written")
        return EXIT_ERROR

    order = {kind: n for n, kind in enumerate(config.solvers)}
    rows.sort(key=lambda row: (order[row["solver"]], row["links"], row["trial"]))
    trials = pd.DataFrame(rows)
    summary = summarize_sweep(trials)

    artifacts = [_write_csv(trials, os.path.join(config.out, "sweep_trials.csv"))]
    for kind in config.solvers:
        per_solver = summary[summary["solver"] == kind].drop(columns="solver")
        artifacts.append(_write_csv(per_solver, os.path.join(config.out, f"sweep_{kind}.csv")))
    _write_manifest(config, artifacts)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "converge": cmd_converge, "sweep": cmd_sweep}


def run(config: ExperimentConfig) -> int:
    return COMMANDS[config.mode](config)
