"""
Fixed-rank solvers for the completion problem at rank r.

- solve_rcg: Riemannian conjugate gradient (PR+ with transported gradients,
  strong Wolfe steps from scipy's line search on the retraction curve)
- solve_rtr: Riemannian trust region with a truncated-CG inner solver
- solve_als: two-factor alternating least squares baseline

Each solver returns a SolverResult that unpacks as (X*, trace). The
Riemannian solvers reach the geometry through FixedRankQuotient, the
pymanopt view of the quotient manifold.
"""
import logging
import time
import warnings
from dataclasses import dataclass, field, asdict
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import line_search

from . import lrmc
from .manifold import (
    FixedRankPoint,
    FixedRankQuotient,
    HorizontalTriple,
    ManifoldError,
    Triple,
    egrad_to_rgrad,
    hess_vec,
    norm,
    point_from_factors,
    random_point,
    retract_with_velocity,
)
from .topology import CompletionProblem

logger = logging.getLogger(__name__)

BETA_RULES = ("pr+", "sd")
SOLVER_KINDS: Tuple[str, ...] = ("cg", "tr", "als")
LINE_SEARCH_MAXITER = 30
# default cap on truncated-CG iterations per trust-region step
TCG_MAX_INNER = 50
# a stalled run would need more than this many times its remaining budget
STALL_SLACK = 4.0

MSG_GRADIENT = "gradient norm below tolerance"
MSG_RESIDUAL = "residual below tolerance"
MSG_MAX_ITER = "max iterations reached"
MSG_LINE_SEARCH = "line search failed"
MSG_TRUST_REGION = "trust region radius collapsed"
MSG_STALLED = "residual stalled above target"


# ==================== OPTIONS & RESULTS ====================
@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules and algorithm constants shared by all fixed-rank solvers"""

    grad_tol: float = 1e-6
    max_iter: int = 500
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.1
    tr_delta0: float = 1.0
    tr_delta_max: float = 100.0
    tr_rho_accept: float = 0.1
    seed: int = 0
    beta_rule: str = "pr+"
    residual_tol: Optional[float] = None
    tcg_max_iter: Optional[int] = None
    als_ridge: float = 1e-10
    record_timing: bool = True
    stall_window: Optional[int] = None

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError(f"Wolfe constants need 0 < c1 < c2 < 1, got c1={self.wolfe_c1}, c2={self.wolfe_c2}")
        if not 0 < self.tr_delta0 <= self.tr_delta_max:
            raise ValueError(f"trust region needs 0 < delta0 <= delta_max, got {self.tr_delta0}, {self.tr_delta_max}")
        # ratios up to 1/4 keep acceptance below the shrink threshold
        if not 0 < self.tr_rho_accept < 0.25:
            raise ValueError(f"tr_rho_accept must lie in (0, 1/4), got {self.tr_rho_accept}")
        if self.beta_rule not in BETA_RULES:
            raise ValueError(f"beta_rule must be one of {BETA_RULES}, got {self.beta_rule!r}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.tcg_max_iter is not None and self.tcg_max_iter < 1:
            raise ValueError(f"tcg_max_iter must be >= 1, got {self.tcg_max_iter}")
        if self.als_ridge < 0:
            raise ValueError(f"als_ridge must be >= 0, got {self.als_ridge}")
        if self.stall_window is not None and self.stall_window < 1:
            raise ValueError(f"stall_window must be >= 1, got {self.stall_window}")

    @property
    def gradient_threshold(self) -> float:
        # while a residual target is pending, only a vanishing gradient marks a critical point
        if self.residual_tol is None:
            return self.grad_tol
        return self.grad_tol * self.residual_tol


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    cost: float
    grad_norm: float
    residual: float
    elapsed_ms: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverResult:
    point: FixedRankPoint
    trace: List[TraceRecord] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    message: str = ""

    def __iter__(self) -> Iterator:
        return iter((self.point, self.trace))

    @property
    def final(self) -> TraceRecord:
        return self.trace[-1]


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.start = time.perf_counter()

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self.start) * 1e3 if self.enabled else 0.0


def _record(it: int, problem: CompletionProblem, f: float, gnorm: float, clock: _Clock) -> TraceRecord:
    return TraceRecord(it, f, gnorm, lrmc.residual_from_cost(problem, f), clock.elapsed_ms())


def _stalled(problem: CompletionProblem, trace: Sequence[TraceRecord], opts: SolverOptions) -> bool:
    """
    True when the cost decrease over the last stall_window iterations, kept
    up at the same linear rate, cannot reach the residual target within
    STALL_SLACK times the remaining iteration budget.
    """
    window = opts.stall_window
    if window is None or opts.residual_tol is None or len(trace) <= window:
        return False
    it = len(trace) - 1
    f_old, f_now = trace[-1 - window].cost, trace[-1].cost
    if f_now >= f_old:
        return True
    target = 0.5 * problem.M * opts.residual_tol ** 2
    rate = np.log(f_old / f_now) / window
    needed = np.log(f_now / target) / rate
    return bool(needed > STALL_SLACK * max(opts.max_iter - it, 0))


def _stop_reason(problem: CompletionProblem, trace: Sequence[TraceRecord], gnorm: float,
                 opts: SolverOptions) -> Optional[Tuple[str, bool]]:
    """(message, converged) once a stopping rule fires for the last trace record, else None."""
    if opts.residual_tol is not None and trace[-1].residual <= opts.residual_tol:
        return MSG_RESIDUAL, True
    if gnorm <= opts.gradient_threshold:
        return MSG_GRADIENT, True
    if _stalled(problem, trace, opts):
        return MSG_STALLED, False
    return None


def _gradient(manifold: FixedRankQuotient, problem: CompletionProblem, X: FixedRankPoint) -> HorizontalTriple:
    return manifold.euclidean_to_riemannian_gradient(X, lrmc.euclidean_gradient(problem, X))


# ==================== CONJUGATE GRADIENT ====================
def _wolfe_step(problem: CompletionProblem, X: FixedRankPoint, direction: Triple, f0: float, slope: float,
                old_old_f: Optional[float], opts: SolverOptions):
    """Strong Wolfe step along t -> retract(X, direction, t); None when the search fails."""
    cache = {}

    def along(alpha: float):
        key = float(alpha)
        if key not in cache:
            Y, velocity = retract_with_velocity(X, direction, key)
            A = lrmc.euclidean_gradient(problem, Y)
            cache[key] = (Y, 0.5 * float(np.sum(A * A)), float(np.sum(A * velocity)))
        return cache[key]

    def phi(x):
        return along(x[0])[1]

    def dphi(x):
        return np.array([along(x[0])[2]])

    with warnings.catch_warnings():
        # LineSearchWarning derives from RuntimeWarning; failures are reported through alpha=None
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            alpha, _, _, f_new, _, _ = line_search(
                phi, dphi, np.zeros(1), np.ones(1),
                gfk=np.array([slope]), old_fval=f0, old_old_fval=old_old_f,
                c1=opts.wolfe_c1, c2=opts.wolfe_c2, maxiter=LINE_SEARCH_MAXITER,
            )
        except (ManifoldError, np.linalg.LinAlgError) as e:
            logger.debug(f"[RCG] retraction failed inside line search: {e}")
            return None

    if alpha is None or f_new is None or not np.isfinite(f_new) or f_new > f0:
        return None
    Y, f_new, _ = along(alpha)
    return float(alpha), Y, f_new


def solve_rcg(problem: CompletionProblem, X0: FixedRankPoint, opts: Optional[SolverOptions] = None) -> SolverResult:
    """Riemannian conjugate gradient from X0."""
    opts = opts or SolverOptions()
    clock = _Clock(opts.record_timing)
    manifold = FixedRankQuotient(X0.M, X0.r, opts.seed)

    X = X0
    f = lrmc.cost(problem, X)
    grad = _gradient(manifold, problem, X)
    gnorm = manifold.norm(X, grad)
    trace = [_record(0, problem, f, gnorm, clock)]

    direction = -grad
    steepest = True
    old_old_f = f + gnorm / 2.0
    message, converged = MSG_MAX_ITER, False
    it = 0

    while True:
        stop = _stop_reason(problem, trace, gnorm, opts)
        if stop:
            message, converged = stop
            break
        if it >= opts.max_iter:
            break
        it += 1

        slope = manifold.inner_product(X, grad, direction)
        if slope >= 0:
            logger.debug(f"[RCG] iter {it}: not a descent direction, restarting along -grad")
            direction, steepest = -grad, True
            slope = -gnorm ** 2

        step = _wolfe_step(problem, X, direction, f, slope, old_old_f, opts)
        if step is None and not steepest:
            logger.info(f"[RCG] iter {it}: line search failed on the CG direction, retrying along -grad")
            direction, steepest = -grad, True
            step = _wolfe_step(problem, X, direction, f, -gnorm ** 2, None, opts)
        if step is None:
            logger.warning(f"[RCG] iter {it}: line search failed along -grad (cost {f:.6e}, grad norm {gnorm:.3e}); aborting")
            message = MSG_LINE_SEARCH
            it -= 1
            break

        alpha, X_new, f_new = step
        grad_new = _gradient(manifold, problem, X_new)
        gnorm_new = manifold.norm(X_new, grad_new)

        beta = 0.0
        if opts.beta_rule == "pr+":
            moved_grad = manifold.transport(X, X_new, grad)
            beta = max(0.0, manifold.inner_product(X_new, grad_new, grad_new - moved_grad) / gnorm ** 2)

        if beta > 0.0:
            direction, steepest = -grad_new + beta * manifold.transport(X, X_new, direction), False
        else:
            direction, steepest = -grad_new, True

        old_old_f = f
        X, f, grad, gnorm = X_new, f_new, grad_new, gnorm_new
        trace.append(_record(it, problem, f, gnorm, clock))
        logger.debug(f"[RCG] iter {it}: cost {f:.6e} grad {gnorm:.3e} alpha {alpha:.3e} beta {beta:.3e}")

    logger.debug(f"[RCG] rank {X.r}: {message} after {it} iterations, cost {f:.6e}")
    return SolverResult(X, trace, it, converged, message)


# ==================== TRUST REGION ====================
_BOUNDARY_STOPS = ("negative curvature", "exceeded trust region")


def _truncated_cg(manifold: FixedRankQuotient, problem: CompletionProblem, X: FixedRankPoint,
                  grad: HorizontalTriple, gnorm: float, delta: float, max_inner: int,
                  kappa: float = 0.5, theta: float = 0.5):
    """
    Steihaug-Toint truncated CG on the model g(grad, eta) + 1/2 g(eta, H eta), ||eta|| <= delta.
    Returns (eta, H eta, inner iterations, stop reason).
    """
    inner = manifold.inner_product
    eta = manifold.zero_vector(X)
    Heta = manifold.zero_vector(X)
    r = grad
    r_r = gnorm ** 2
    stop_tol = gnorm * min(kappa, gnorm ** theta)

    mdelta = -r
    d_Pd = r_r
    e_Pd = 0.0
    e_Pe = 0.0

    for j in range(1, max_inner + 1):
        Hd = hess_vec(X, problem, mdelta, grad)
        d_Hd = inner(X, mdelta, Hd)
        alpha = r_r / d_Hd if d_Hd != 0 else np.inf
        e_Pe_new = e_Pe + 2.0 * alpha * e_Pd + alpha ** 2 * d_Pd

        if d_Hd <= 0 or e_Pe_new >= delta ** 2:
            tau = (-e_Pd + np.sqrt(e_Pd ** 2 + d_Pd * (delta ** 2 - e_Pe))) / d_Pd
            eta = eta + tau * mdelta
            Heta = Heta + tau * Hd
            return eta, Heta, j, "negative curvature" if d_Hd <= 0 else "exceeded trust region"

        eta = eta + alpha * mdelta
        Heta = Heta + alpha * Hd
        e_Pe = e_Pe_new
        r = r + alpha * Hd

        r_r_old = r_r
        r_r = inner(X, r, r)
        if np.sqrt(r_r) <= stop_tol:
            return eta, Heta, j, "residual small"

        beta = r_r / r_r_old
        mdelta = -r + beta * mdelta
        e_Pd = beta * (e_Pd + alpha * d_Pd)
        d_Pd = r_r + beta ** 2 * d_Pd

    return eta, Heta, max_inner, "max inner iterations"


def solve_rtr(problem: CompletionProblem, X0: FixedRankPoint, opts: Optional[SolverOptions] = None) -> SolverResult:
    """Riemannian trust region from X0; rejected steps leave X untouched."""
    opts = opts or SolverOptions()
    clock = _Clock(opts.record_timing)
    manifold = FixedRankQuotient(X0.M, X0.r, opts.seed)
    max_inner = opts.tcg_max_iter or min(manifold.dim, TCG_MAX_INNER)

    X = X0
    f = lrmc.cost(problem, X)
    grad = _gradient(manifold, problem, X)
    gnorm = manifold.norm(X, grad)
    trace = [_record(0, problem, f, gnorm, clock)]

    delta = opts.tr_delta0
    message, converged = MSG_MAX_ITER, False
    it = 0

    while True:
        stop = _stop_reason(problem, trace, gnorm, opts)
        if stop:
            message, converged = stop
            break
        if it >= opts.max_iter:
            break
        if delta < np.finfo(float).eps:
            logger.warning(f"[RTR] trust region radius {delta:.3e} collapsed at cost {f:.6e}")
            message = MSG_TRUST_REGION
            break
        it += 1

        eta, Heta, inner, how = _truncated_cg(manifold, problem, X, grad, gnorm, delta, max_inner)
        model_decrease = -(manifold.inner_product(X, grad, eta) + 0.5 * manifold.inner_product(X, eta, Heta))
        try:
            X_cand = manifold.retraction(X, eta)
            f_cand = lrmc.cost(problem, X_cand)
        except ManifoldError as e:
            logger.debug(f"[RTR] iter {it}: retraction failed ({e}); shrinking")
            X_cand, f_cand = None, np.inf

        reg = 1e3 * np.finfo(float).eps * max(1.0, abs(f))
        rho = (f - f_cand + reg) / (model_decrease + reg)

        if rho < 0.25:
            delta *= 0.25
        elif rho > 0.75 and how in _BOUNDARY_STOPS:
            delta = min(2.0 * delta, opts.tr_delta_max)

        accepted = model_decrease > 0 and rho > opts.tr_rho_accept and f_cand <= f
        if accepted:
            X, f = X_cand, f_cand
            grad = _gradient(manifold, problem, X)
            gnorm = manifold.norm(X, grad)

        trace.append(_record(it, problem, f, gnorm, clock))
        logger.debug(f"[RTR] iter {it}: {'acc' if accepted else 'REJ'} rho {rho:.3e} delta {delta:.3e} "
                     f"cost {f:.6e} grad {gnorm:.3e} tCG {inner} ({how})")

    logger.debug(f"[RTR] rank {X.r}: {message} after {it} iterations, cost {f:.6e}")
    return SolverResult(X, trace, it, converged, message)


# ==================== ALTERNATING LEAST SQUARES ====================
def update_factor(mask: np.ndarray, fixed: np.ndarray, ridge: float = 1e-10) -> np.ndarray:
    """
    One ALS half-step. Row i of the result minimizes
    sum_{j: (i,j) in omega} (row . fixed_j - delta_ij)^2 + ridge ||row||^2.
    Since (i, i) is always in omega the right-hand side is fixed_i.
    """
    r = fixed.shape[1]
    gram = np.einsum("ij,jk,jl->ikl", mask.astype(float), fixed, fixed)
    gram += ridge * np.eye(r)
    return np.linalg.solve(gram, fixed[:, :, None])[:, :, 0]


def solve_als(problem: CompletionProblem, r: int, seed: int, opts: Optional[SolverOptions] = None,
              init: Optional[FixedRankPoint] = None) -> SolverResult:
    """Alternating least squares on X = L R^T; returns the best iterate as a FixedRankPoint."""
    opts = opts or SolverOptions()
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    clock = _Clock(opts.record_timing)

    X = init if init is not None else random_point(problem.M, r, seed)
    if X.r != r:
        raise ValueError(f"initial point has rank {X.r}, expected {r}")
    f = lrmc.cost(problem, X)
    gnorm = norm(X, egrad_to_rgrad(X, problem))
    trace = [_record(0, problem, f, gnorm, clock)]
    best, best_f = X, f

    message, converged = MSG_MAX_ITER, False
    it = 0
    while True:
        stop = _stop_reason(problem, trace, gnorm, opts)
        if stop:
            message, converged = stop
            break
        if it >= opts.max_iter:
            break
        it += 1

        L = update_factor(problem.mask, X.V, opts.als_ridge)
        R = update_factor(problem.mask.T, L, opts.als_ridge)
        X = point_from_factors(L, R)
        f = lrmc.cost(problem, X)
        gnorm = norm(X, egrad_to_rgrad(X, problem))
        if f <= best_f:
            best, best_f = X, f
        trace.append(_record(it, problem, f, gnorm, clock))
        logger.debug(f"[ALS] sweep {it}: cost {f:.6e} grad {gnorm:.3e}")

    logger.debug(f"[ALS] rank {r}: {message} after {it} sweeps, best cost {best_f:.6e}")
    return SolverResult(best, trace, it, converged, message)


def run_solver(kind: str, problem: CompletionProblem, X0: FixedRankPoint,
               opts: Optional[SolverOptions] = None) -> SolverResult:
    """Dispatch by solver kind: 'cg', 'tr' or 'als' (ALS warm-starts from X0)."""
    if kind == "cg":
        return solve_rcg(problem, X0, opts)
    if kind == "tr":
        return solve_rtr(problem, X0, opts)
    if kind == "als":
        opts = opts or SolverOptions()
        return solve_als(problem, X0.r, opts.seed, opts, init=X0)
    raise ValueError(f"unknown solver kind {kind!r}; expected one of cg, tr, als")

