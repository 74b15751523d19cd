"""
Riemannian Pursuit: solve the fixed-rank problem, and while the normalized
residual misses eps, grow the rank by one and warm-start the next stage.

Two rank-increase rules are available:
- "variety": a step along the gradient-related direction on the variety of
  rank <= r+1 matrices, with a sufficient-decrease backtracking rule
- "simple": subtract the dominant singular triplet of the Euclidean gradient
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from . import lrmc
from .manifold import (
    SINGULAR_FLOOR,
    FixedRankPoint,
    HorizontalTriple,
    augment,
    egrad_to_rgrad,
    metric,
    point_from_matrix,
    random_point,
    tangent_to_ambient,
)
from .solvers import SOLVER_KINDS, SolverOptions, TraceRecord, run_solver
from .topology import CompletionProblem

logger = logging.getLogger(__name__)

RANK_STEP_RULES = ("variety", "simple")
MAX_HALVINGS = 50
# iterations over which an inner solve must show progress towards eps
STALL_WINDOW = 30


class CriticalPointReached(RuntimeError):
    """The rank-increase direction vanished: X is critical on the rank <= r+1 variety."""


@dataclass(frozen=True)
class PursuitOptions:
    eps: float = 1e-6
    max_rank: Optional[int] = None
    inner: SolverOptions = field(default_factory=SolverOptions)
    inner_kind: str = "tr"
    rank_step_rule: str = "variety"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_rank is not None and self.max_rank < 1:
            raise ValueError(f"max_rank must be >= 1, got {self.max_rank}")
        if self.inner_kind not in SOLVER_KINDS:
            raise ValueError(f"inner_kind must be one of {SOLVER_KINDS}, got {self.inner_kind!r}")
        if self.rank_step_rule not in RANK_STEP_RULES:
            raise ValueError(f"rank_step_rule must be one of {RANK_STEP_RULES}, got {self.rank_step_rule!r}")


@dataclass(frozen=True)
class StageRecord:
    rank: int
    start_cost: float
    final_cost: float
    residual: float
    iterations: int
    converged: bool
    message: str
    trace: Tuple[TraceRecord, ...] = ()

    def summary(self) -> dict:
        return {
            "rank": self.rank,
            "start_cost": self.start_cost,
            "final_cost": self.final_cost,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
        }


@dataclass
class PursuitResult:
    X: FixedRankPoint
    detected_rank: int
    residual: float
    stage_traces: List[StageRecord]
    success: bool
    message: str
    dof: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class VarietyDirection:
    """
    Search direction D = normal - grad_embedded with <-grad f, D> = theta,
    where normal = sigma * left right^T
    """

    normal: np.ndarray
    grad_embedded: np.ndarray
    direction: np.ndarray
    theta: float
    left: np.ndarray
    right: np.ndarray
    sigma: float


def variety_direction(problem: CompletionProblem, X: FixedRankPoint,
                      grad: Optional[HorizontalTriple] = None) -> VarietyDirection:
    """
    Best rank-one part of the component of -grad f orthogonal to the tangent
    space, i.e. of -(I - U U^T) A (I - V V^T), combined with the tangent gradient.
    """
    if grad is None:
        grad = egrad_to_rgrad(X, problem)
    A = lrmc.euclidean_gradient(problem, X)
    U, _, V = X
    N = -(A - U @ (U.T @ A))
    N = N - (N @ V) @ V.T
    W, s, Zt = scipy.linalg.svd(N)
    left, right, sigma = W[:, 0], Zt[0], float(s[0])
    if sigma == 0.0 and X.r < X.M:
        # any unit pair from the orthogonal complements
        left = scipy.linalg.null_space(U.T)[:, 0]
        right = scipy.linalg.null_space(V.T)[:, 0]
    normal = sigma * np.outer(left, right)
    G = tangent_to_ambient(X, grad)
    theta = float(sigma ** 2 + metric(X, grad, grad))
    return VarietyDirection(normal, G, normal - G, theta, left, right, sigma)


def _padded(problem: CompletionProblem, X: FixedRankPoint, step: VarietyDirection) -> FixedRankPoint:
    """embed(X) plus a small non-increasing step along left right^T, kept at rank r+1."""
    s = SINGULAR_FLOOR * float(np.linalg.norm(X.Sigma, 2))
    curvature = float(np.sum(lrmc.masked(problem, np.outer(step.left, step.right)) ** 2))
    if step.sigma > 0.0 and curvature > 0.0:
        s = min(s, step.sigma / curvature)
    return augment(X, step.left, step.right, s)


def rank_increase(problem: CompletionProblem, X: FixedRankPoint,
                  grad: Optional[HorizontalTriple] = None) -> FixedRankPoint:
    """
    Warm start for rank r+1: P_{<=r+1}(embed(X) + alpha D) with alpha from the
    exact line minimizer, halved until f drops by at least alpha * theta / 2.

    Without such a step, the cheapest candidate is used if it does not
    increase f; otherwise X is padded with a tiny singular value along the
    normal direction, which keeps f from increasing.
    """
    if X.r >= problem.M:
        raise ValueError(f"cannot increase rank beyond M={problem.M}")
    step = variety_direction(problem, X, grad)
    A = lrmc.euclidean_gradient(problem, X)
    if np.sqrt(step.theta) <= np.finfo(float).eps * max(1.0, float(np.linalg.norm(A))):
        raise CriticalPointReached(f"rank-increase direction vanished at rank {X.r}")

    Y = X.embed()
    f = 0.5 * float(np.sum(A * A))
    alpha = lrmc.exact_step(problem, Y, step.direction)
    if not alpha > 0:
        alpha = 1.0

    best, best_f = None, np.inf
    for _ in range(MAX_HALVINGS + 1):
        candidate = point_from_matrix(Y + alpha * step.direction, X.r + 1)
        f_cand = lrmc.cost(problem, candidate)
        if f_cand <= f - 0.5 * alpha * step.theta:
            logger.debug(f"[PURSUIT] rank {X.r}->{X.r + 1}: alpha {alpha:.3e}, theta {step.theta:.3e}")
            return candidate
        if f_cand < best_f:
            best, best_f = candidate, f_cand
        alpha *= 0.5

    if best_f <= f:
        logger.warning(f"[PURSUIT] rank {X.r}->{X.r + 1}: decrease condition not met after {MAX_HALVINGS} "
                       f"halvings; using the cheapest candidate (cost {best_f:.3e} <= {f:.3e})")
        return best
    logger.warning(f"[PURSUIT] rank {X.r}->{X.r + 1}: every candidate raises the cost (best {best_f:.3e} > {f:.3e}); "
                   f"padding X with a small singular value")
    return _padded(problem, X, step)


def simple_rank_one_update(problem: CompletionProblem, X: FixedRankPoint) -> FixedRankPoint:
    """X - sigma u v^T with (sigma, u, v) the top singular triplet of grad f, refactored at rank r+1."""
    if X.r >= problem.M:
        raise ValueError(f"cannot increase rank beyond M={problem.M}")
    A = lrmc.euclidean_gradient(problem, X)
    W, s, Zt = scipy.linalg.svd(A)
    return point_from_matrix(X.embed() - s[0] * np.outer(W[:, 0], Zt[0]), X.r + 1)


def riemannian_pursuit(problem: CompletionProblem, opts: Optional[PursuitOptions] = None) -> PursuitResult:
    """Rank-increasing outer loop starting from a seeded rank-1 point."""
    opts = opts or PursuitOptions()
    max_rank = opts.max_rank or problem.M
    if max_rank > problem.M:
        raise ValueError(f"max_rank={max_rank} exceeds M={problem.M}")

    inner = opts.inner
    if inner.residual_tol is None:
        inner = replace(inner, residual_tol=opts.eps)
    if inner.stall_window is None:
        inner = replace(inner, stall_window=STALL_WINDOW)

    X0 = random_point(problem.M, 1, inner.seed)
    stages: List[StageRecord] = []

    while True:
        r = X0.r
        start_cost = lrmc.cost(problem, X0)
        result = run_solver(opts.inner_kind, problem, X0, inner)
        X = result.point
        value = lrmc.evaluate(problem, X)
        stages.append(StageRecord(r, start_cost, value.f, value.residual, result.iterations,
                                  result.converged, result.message, tuple(result.trace)))
        logger.info(f"[PURSUIT] rank {r}: cost {start_cost:.3e} -> {value.f:.3e}, residual {value.residual:.3e} "
                    f"({result.iterations} {opts.inner_kind} iterations, {result.message})")

        if value.residual <= opts.eps:
            logger.info(f"[PURSUIT] ✅ detected rank {r} (residual {value.residual:.3e} <= {opts.eps:.0e})")
            return PursuitResult(X, r, value.residual, stages, True, f"residual below eps at rank {r}")

        if r >= max_rank:
            logger.warning(f"[PURSUIT] rank cap {max_rank} reached with residual {value.residual:.3e}")
            return PursuitResult(X, r, value.residual, stages, False,
                                 f"max rank {max_rank} reached with residual {value.residual:.3e}")

        try:
            if opts.rank_step_rule == "variety":
                X0 = rank_increase(problem, X, egrad_to_rgrad(X, problem))
            else:
                X0 = simple_rank_one_update(problem, X)
        except CriticalPointReached as e:
            logger.warning(f"[PURSUIT] {e}; stopping with residual {value.residual:.3e}")
            return PursuitResult(X, r, value.residual, stages, False, str(e))
