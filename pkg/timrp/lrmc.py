"""
Completion objective f(X) = 1/2 ||P_Omega(X) - I_M||_F^2, its Euclidean
gradient, and the normalized residual used as the stopping statistic.

Every function takes either a FixedRankPoint or a dense M x M matrix.
"""
from dataclasses import dataclass

import numpy as np

from .topology import CompletionProblem


@dataclass(frozen=True)
class ObjectiveValue:
    f: float
    residual: float


def _dense(problem: CompletionProblem, X) -> np.ndarray:
    Y = X.embed() if hasattr(X, "embed") else np.asarray(X, dtype=float)
    if Y.shape != (problem.M, problem.M):
        raise ValueError(f"dimension mismatch: problem has M={problem.M}, point embeds to {Y.shape}")
    return Y


def masked(problem: CompletionProblem, Y: np.ndarray) -> np.ndarray:
    """P_Omega(Y): keep entries on omega, zero elsewhere."""
    return np.where(problem.mask, Y, 0.0)


def euclidean_gradient(problem: CompletionProblem, X) -> np.ndarray:
    """A = P_Omega(X) - I_M, supported on omega."""
    Y = _dense(problem, X)
    A = masked(problem, Y)
    A[np.diag_indices(problem.M)] -= 1.0
    return A


def cost(problem: CompletionProblem, X) -> float:
    A = euclidean_gradient(problem, X)
    return 0.5 * float(np.sum(A * A))


def residual(problem: CompletionProblem, X) -> float:
    return residual_from_cost(problem, cost(problem, X))


def residual_from_cost(problem: CompletionProblem, f: float) -> float:
    return float(np.sqrt(2.0 * max(f, 0.0) / problem.M))


def evaluate(problem: CompletionProblem, X) -> ObjectiveValue:
    f = cost(problem, X)
    return ObjectiveValue(f=f, residual=residual_from_cost(problem, f))


def exact_step(problem: CompletionProblem, Y, D: np.ndarray) -> float:
    """
    Minimizer of the quadratic alpha -> f(Y + alpha D):
    alpha* = <-grad f(Y), D> / ||P_Omega(D)||^2.
    Returns 0 when D has no support on omega.
    """
    A = euclidean_gradient(problem, Y)
    PD = masked(problem, np.asarray(D, dtype=float))
    curvature = float(np.sum(PD * PD))
    if curvature == 0.0:
        return 0.0
    return float(-np.sum(A * D) / curvature)
