"""
Quotient geometry of rank-r M x M matrices factored as X = U Sigma V^T.

Points live on St(r, M) x GL(r) x St(r, M) modulo the action
(U, Sigma, V) -> (U Q_U, Q_U^T Sigma Q_V, V Q_V) of O(r) x O(r). The metric
weights the factor directions by P = Sigma Sigma^T and Q = Sigma^T Sigma:

    g(xi, zeta) = tr(xi_U^T zeta_U P) + <xi_Sigma, zeta_Sigma> + tr(xi_V^T zeta_V Q)

Tangent vectors are carried as (xi_U, xi_Sigma, xi_V) triples. The module
functions are pure; the only per-point state is the lazily factored metric
(MetricWeights), which depends on Sigma alone. FixedRankQuotient exposes the
same geometry through pymanopt's Manifold interface.
"""
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Tuple

import numpy as np
import scipy.linalg
from pymanopt.manifolds.manifold import Manifold
from pymanopt.tools import ndarraySequenceMixin

from . import lrmc
from .topology import CompletionProblem

logger = logging.getLogger(__name__)

# Sigma is repaired once its condition number passes this
COND_LIMIT = 1e12
# relative floor for singular values after a repair or truncation
SINGULAR_FLOOR = 1e-8


class ManifoldError(ValueError):
    """Shape mismatch or a degenerate factor (non-SPD weight, singular system, rank loss)"""


def sym(C: np.ndarray) -> np.ndarray:
    return 0.5 * (C + C.T)


def skew(C: np.ndarray) -> np.ndarray:
    return 0.5 * (C - C.T)


# ==================== DOMAIN TYPES ====================
@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    """Factorization X = U Sigma V^T with orthonormal U, V and invertible Sigma"""

    U: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        S = np.asarray(self.Sigma, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.ndim != 2 or V.ndim != 2 or U.shape != V.shape:
            raise ManifoldError(f"U and V must be M x r with equal shapes, got {U.shape} and {V.shape}")
        r = U.shape[1]
        if S.shape != (r, r):
            raise ManifoldError(f"Sigma must be {r} x {r}, got {S.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "V", V)

    @property
    def M(self) -> int:
        return self.U.shape[0]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @cached_property
    def weights(self) -> "MetricWeights":
        """Metric weights and their factored solves, computed on first use."""
        return MetricWeights(self.Sigma)

    def embed(self) -> np.ndarray:
        return self.U @ self.Sigma @ self.V.T

    def rotate(self, QU: np.ndarray, QV: np.ndarray) -> "FixedRankPoint":
        """Another representative of the same equivalence class."""
        return FixedRankPoint(self.U @ QU, QU.T @ self.Sigma @ QV, self.V @ QV)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.U, self.Sigma, self.V))


class Triple(tuple, ndarraySequenceMixin):
    """(xi_U, xi_Sigma, xi_V) as an ambient triple; arithmetic keeps the subclass."""

    def __new__(cls, xiU, xiSigma, xiV):
        return super().__new__(cls, (np.asarray(xiU, dtype=float),
                                     np.asarray(xiSigma, dtype=float),
                                     np.asarray(xiV, dtype=float)))

    def __getnewargs__(self):
        return tuple(self)

    @classmethod
    def zeros(cls, X: FixedRankPoint) -> "Triple":
        return cls(np.zeros_like(X.U), np.zeros_like(X.Sigma), np.zeros_like(X.V))

    @property
    def xiU(self) -> np.ndarray:
        return self[0]

    @property
    def xiSigma(self) -> np.ndarray:
        return self[1]

    @property
    def xiV(self) -> np.ndarray:
        return self[2]

    def __add__(self, other):
        return type(self)(*(s + o for s, o in zip(self, other)))

    def __sub__(self, other):
        return type(self)(*(s - o for s, o in zip(self, other)))

    def __mul__(self, other):
        return type(self)(*(other * s for s in self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return type(self)(*(s / other for s in self))

    def __neg__(self):
        return type(self)(*(-s for s in self))

    def __repr__(self):
        return f"{type(self).__name__}(shapes={[a.shape for a in self]})"


class TangentTriple(Triple):
    """Tangent vector: U^T xi_U and V^T xi_V skew-symmetric"""


class HorizontalTriple(TangentTriple):
    """Tangent vector metric-orthogonal to the equivalence class"""


def _check_triple(X: FixedRankPoint, xi) -> None:
    if len(xi) != 3:
        raise ManifoldError("expected a (xi_U, xi_Sigma, xi_V) triple")
    shapes = (X.U.shape, X.Sigma.shape, X.V.shape)
    got = tuple(np.shape(a) for a in xi)
    if got != shapes:
        raise ManifoldError(f"triple shapes {got} do not match point shapes {shapes}")


# ==================== LINEAR SOLVES ====================
def _lyapunov_factor(P: np.ndarray):
    """Cholesky factor of the Kronecker sum I kron P + P kron I for symmetric positive definite P."""
    n = P.shape[0]
    if np.linalg.norm(P - P.T) > 1e-10 * max(np.linalg.norm(P), 1.0):
        raise ManifoldError("Lyapunov coefficient P is not symmetric")
    P = sym(P)
    eig = np.linalg.eigvalsh(P)
    if not np.all(np.isfinite(eig)) or eig[0] <= 0.0:
        raise ManifoldError(f"Lyapunov coefficient P is not positive definite (eigenvalues in [{eig[0]:.3e}, {eig[-1]:.3e}])")
    eye = np.eye(n)
    try:
        return scipy.linalg.cho_factor(np.kron(eye, P) + np.kron(P, eye))
    except np.linalg.LinAlgError as e:
        raise ManifoldError(f"Lyapunov system is numerically singular: {e}") from e


def _lyapunov_solve(factor, rhs: np.ndarray) -> np.ndarray:
    n = rhs.shape[0]
    b = scipy.linalg.cho_solve(factor, sym(rhs).reshape(-1, order="F"))
    return sym(b.reshape((n, n), order="F"))


def solve_lyapunov_sym(P: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Symmetric B with P B + B P = sym(rhs), for symmetric positive definite P.
    Solved as the Kronecker-sum system (I kron P + P kron I) vec(B) = vec(rhs).
    """
    P = np.asarray(P, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n) or rhs.shape != (n, n):
        raise ManifoldError(f"Lyapunov shapes mismatch: P {P.shape}, rhs {rhs.shape}")
    return _lyapunov_solve(_lyapunov_factor(P), rhs)


def _skew_basis(r: int):
    """Embedding (r^2 x n) of skew coordinates and the selector of upper-triangle entries."""
    rows, cols = np.triu_indices(r, k=1)
    n = rows.size
    upper = rows + cols * r  # column-major vec index of (k, l)
    lower = cols + rows * r
    embed_basis = np.zeros((r * r, n))
    embed_basis[upper, np.arange(n)] = 1.0
    embed_basis[lower, np.arange(n)] = -1.0
    select = np.zeros((n, r * r))
    select[np.arange(n), upper] = 1.0
    return rows, cols, embed_basis, select


class MetricWeights:
    """P = Sigma Sigma^T, Q = Sigma^T Sigma, their inverses, and factored Lyapunov and coupled skew systems"""

    def __init__(self, Sigma: np.ndarray):
        S = np.asarray(Sigma, dtype=float)
        self.Sigma = S
        self.P = S @ S.T
        self.Q = S.T @ S
        try:
            self.P_inv = np.linalg.inv(self.P)
            self.Q_inv = np.linalg.inv(self.Q)
        except np.linalg.LinAlgError as e:
            raise ManifoldError(f"metric weights are singular; Sigma is degenerate: {e}") from e

    @cached_property
    def _p_factor(self):
        return _lyapunov_factor(self.P)

    @cached_property
    def _q_factor(self):
        return _lyapunov_factor(self.Q)

    def lyapunov_p(self, rhs: np.ndarray) -> np.ndarray:
        return _lyapunov_solve(self._p_factor, rhs)

    def lyapunov_q(self, rhs: np.ndarray) -> np.ndarray:
        return _lyapunov_solve(self._q_factor, rhs)

    @cached_property
    def _skew_system(self):
        r = self.Sigma.shape[0]
        S, P, Q = self.Sigma, self.P, self.Q
        eye = np.eye(r)
        full = np.block([
            [np.kron(eye, P) + np.kron(P, eye), -np.kron(S, S)],
            [-np.kron(S.T, S.T), np.kron(eye, Q) + np.kron(Q, eye)],
        ])
        rows, cols, basis, select = _skew_basis(r)
        zero_b = np.zeros_like(basis)
        zero_s = np.zeros_like(select)
        lhs = np.block([[select, zero_s], [zero_s, select]]) @ full @ np.block([[basis, zero_b], [zero_b, basis]])
        with warnings.catch_warnings():
            # lu_factor only warns on an exactly zero pivot
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(lhs)
        if not np.all(np.diag(lu) != 0.0):
            raise ManifoldError("coupled skew system is singular; Sigma is degenerate")
        return rows, cols, basis, (lu, piv)

    def coupled_skew(self, rhs1: np.ndarray, rhs2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r = self.Sigma.shape[0]
        if r == 1:
            return np.zeros((1, 1)), np.zeros((1, 1))
        rows, cols, basis, lu = self._skew_system
        c = scipy.linalg.lu_solve(lu, np.concatenate([skew(rhs1)[rows, cols], skew(rhs2)[rows, cols]]))
        n = rows.size
        theta1 = (basis @ c[:n]).reshape((r, r), order="F")
        theta2 = (basis @ c[n:]).reshape((r, r), order="F")
        return theta1, theta2


def solve_coupled_skew(X: FixedRankPoint, rhs1: np.ndarray, rhs2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Skew (Theta1, Theta2) with

        P Theta1 + Theta1 P - Sigma Theta2 Sigma^T = rhs1
        Q Theta2 + Theta2 Q - Sigma^T Theta1 Sigma = rhs2

    solved over a basis of skew-symmetric matrices.
    """
    r = X.r
    if np.shape(rhs1) != (r, r) or np.shape(rhs2) != (r, r):
        raise ManifoldError(f"coupled skew right-hand sides must be {r} x {r}")
    return X.weights.coupled_skew(rhs1, rhs2)


# ==================== METRIC ====================
def metric(X: FixedRankPoint, xi, zeta) -> float:
    _check_triple(X, xi)
    _check_triple(X, zeta)
    w = X.weights
    return float(np.sum(xi[0] * (zeta[0] @ w.P)) + np.sum(xi[1] * zeta[1]) + np.sum(xi[2] * (zeta[2] @ w.Q)))


def norm(X: FixedRankPoint, xi) -> float:
    return float(np.sqrt(max(metric(X, xi, xi), 0.0)))


# ==================== PROJECTIONS ====================
def _project_factor(Y: np.ndarray, G: np.ndarray, lyapunov, P: np.ndarray, P_inv: np.ndarray) -> np.ndarray:
    B = lyapunov(P @ (2.0 * sym(Y.T @ G)) @ P)
    return G - Y @ B @ P_inv


def project_tangent(X: FixedRankPoint, A) -> TangentTriple:
    """Metric-orthogonal projection of an ambient triple onto the tangent space at X."""
    _check_triple(X, A)
    w = X.weights
    xiU = _project_factor(X.U, A[0], w.lyapunov_p, w.P, w.P_inv)
    xiV = _project_factor(X.V, A[2], w.lyapunov_q, w.Q, w.Q_inv)
    return TangentTriple(xiU, A[1], xiV)


def project_horizontal(X: FixedRankPoint, xi) -> HorizontalTriple:
    """Remove the vertical component (U Theta1, Sigma Theta2 - Theta1 Sigma, V Theta2)."""
    _check_triple(X, xi)
    U, S, V = X
    w = X.weights
    rhs1 = skew(U.T @ xi[0] @ w.P) + skew(S @ xi[1].T)
    rhs2 = skew(V.T @ xi[2] @ w.Q) + skew(S.T @ xi[1])
    theta1, theta2 = w.coupled_skew(rhs1, rhs2)
    return HorizontalTriple(xi[0] - U @ theta1, xi[1] + theta1 @ S - S @ theta2, xi[2] - V @ theta2)


def vertical_vector(X: FixedRankPoint, theta1: np.ndarray, theta2: np.ndarray) -> TangentTriple:
    return TangentTriple(X.U @ theta1, X.Sigma @ theta2 - theta1 @ X.Sigma, X.V @ theta2)


def tangent_to_ambient(X: FixedRankPoint, xi) -> np.ndarray:
    """Embedded M x M direction xi_U Sigma V^T + U xi_Sigma V^T + U Sigma xi_V^T."""
    U, S, V = X
    return xi[0] @ S @ V.T + U @ xi[1] @ V.T + U @ S @ xi[2].T


def transport(X_new: FixedRankPoint, xi) -> HorizontalTriple:
    """Projection-based transport: the old triple read as ambient at X_new."""
    return project_horizontal(X_new, project_tangent(X_new, xi))


# ==================== POINTS ====================
def _qf(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Thin QR with the diagonal of R forced positive."""
    Q, R = np.linalg.qr(Y)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    Q = Q * signs
    R = signs[:, None] * R
    d = np.abs(np.diag(R))
    if d.min() <= 1e-14 * max(d.max(), 1.0):
        raise ManifoldError("rank deficiency in retraction: factor lost full column rank")
    return Q, R


def embed(X: FixedRankPoint) -> np.ndarray:
    return X.embed()


def random_point(M: int, r: int, seed: int) -> FixedRankPoint:
    """Orthonormal Gaussian factors and a diagonal Sigma with entries |N(0,1)| + 0.5, sorted descending."""
    if not 1 <= r <= M:
        raise ManifoldError(f"rank r={r} must satisfy 1 <= r <= M={M}")
    rng = np.random.default_rng(seed)
    U, _ = _qf(rng.standard_normal((M, r)))
    V, _ = _qf(rng.standard_normal((M, r)))
    s = np.sort(np.abs(rng.standard_normal(r)) + 0.5)[::-1]
    return FixedRankPoint(U, np.diag(s), V)


def point_from_matrix(Y: np.ndarray, r: int) -> FixedRankPoint:
    """Truncated SVD to rank r; vanishing singular values are floored at SINGULAR_FLOOR * sigma_max."""
    Y = np.asarray(Y, dtype=float)
    if not 1 <= r <= min(Y.shape):
        raise ManifoldError(f"rank r={r} out of range for a {Y.shape} matrix")
    W, s, Zt = scipy.linalg.svd(Y, full_matrices=False)
    s = s[:r].copy()
    top = s[0] if s[0] > 0 else 1.0
    s = np.maximum(s, SINGULAR_FLOOR * top)
    return FixedRankPoint(W[:, :r], np.diag(s), Zt[:r].T)


def point_from_factors(L: np.ndarray, R: np.ndarray) -> FixedRankPoint:
    """Rank-r point for L R^T (L, R both M x r): QR of each factor, SVD of the r x r core."""
    left_q, left_r = np.linalg.qr(L)
    right_q, right_r = np.linalg.qr(R)
    W, s, Zt = scipy.linalg.svd(left_r @ right_r.T)
    top = s[0] if s[0] > 0 else 1.0
    s = np.maximum(s, SINGULAR_FLOOR * top)
    return FixedRankPoint(left_q @ W, np.diag(s), right_q @ Zt.T)


def augment(X: FixedRankPoint, u: np.ndarray, v: np.ndarray, s: float) -> FixedRankPoint:
    """
    Rank r+1 point for embed(X) + s u' v'^T, where u' and v' are the unit
    components of u and v orthogonal to U and V.
    """
    if X.r >= X.M:
        raise ManifoldError(f"cannot augment a rank-{X.r} point beyond M={X.M}")
    U, _ = _qf(np.column_stack([X.U, u]))
    V, _ = _qf(np.column_stack([X.V, v]))
    return FixedRankPoint(U, scipy.linalg.block_diag(X.Sigma, [[float(s)]]), V)


def sigma_condition(X: FixedRankPoint) -> float:
    s = np.linalg.svd(X.Sigma, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def repair_point(X: FixedRankPoint) -> FixedRankPoint:
    """Re-factorize X when Sigma drifts towards singularity."""
    cond = sigma_condition(X)
    if cond <= COND_LIMIT:
        return X
    logger.warning(f"[MANIFOLD] cond(Sigma)={cond:.3e} above {COND_LIMIT:.0e}; re-factorizing by SVD")
    return point_from_matrix(X.embed(), X.r)


def check_point(X: FixedRankPoint, tol: float = 1e-10) -> None:
    eye = np.eye(X.r)
    if np.abs(X.U.T @ X.U - eye).max() > tol:
        raise ManifoldError("U does not have orthonormal columns")
    if np.abs(X.V.T @ X.V - eye).max() > tol:
        raise ManifoldError("V does not have orthonormal columns")
    if sigma_condition(X) > COND_LIMIT:
        raise ManifoldError("Sigma is not safely invertible")


# ==================== RETRACTION ====================
def retract(X: FixedRankPoint, xi, t: float = 1.0) -> FixedRankPoint:
    _check_triple(X, xi)
    U, _ = _qf(X.U + t * xi[0])
    V, _ = _qf(X.V + t * xi[2])
    return repair_point(FixedRankPoint(U, X.Sigma + t * xi[1], V))


def _qf_velocity(Q: np.ndarray, R: np.ndarray, dY: np.ndarray) -> np.ndarray:
    # d qf(Y) for dY = dot Y; Q^T dQ is the skew matrix matching tril(Q^T dY R^-1, -1)
    Z = scipy.linalg.solve_triangular(R, dY.T, trans="T", lower=False).T
    W = Q.T @ Z
    low = np.tril(W, -1)
    return Q @ (low - low.T) + Z - Q @ W


def retract_with_velocity(X: FixedRankPoint, xi, t: float) -> Tuple[FixedRankPoint, np.ndarray]:
    """
    retract(X, xi, t) together with d/dt embed(retract(X, xi, t)) as an M x M matrix.
    The derivative is taken before any Sigma repair; a repair keeps the embedding.
    """
    _check_triple(X, xi)
    QU, RU = _qf(X.U + t * xi[0])
    QV, RV = _qf(X.V + t * xi[2])
    Y = FixedRankPoint(QU, X.Sigma + t * xi[1], QV)
    velocity = Triple(_qf_velocity(QU, RU, xi[0]), xi[1], _qf_velocity(QV, RV, xi[2]))
    return repair_point(Y), tangent_to_ambient(Y, velocity)


# ==================== GRADIENT AND HESSIAN ====================
def riemannian_gradient(X: FixedRankPoint, A: np.ndarray) -> HorizontalTriple:
    """Riemannian gradient from the Euclidean gradient A of f at embed(X)."""
    U, S, V = X
    w = X.weights
    xiU = _project_factor(U, A @ V @ S.T @ w.P_inv, w.lyapunov_p, w.P, w.P_inv)
    xiV = _project_factor(V, A.T @ U @ S @ w.Q_inv, w.lyapunov_q, w.Q, w.Q_inv)
    return HorizontalTriple(xiU, U.T @ A @ V, xiV)


def egrad_to_rgrad(X: FixedRankPoint, problem: CompletionProblem) -> HorizontalTriple:
    return riemannian_gradient(X, lrmc.euclidean_gradient(problem, X))


def _project_factor_derivative(Y, dY, G, dG, lyapunov, P, dP, P_inv, dP_inv):
    # forward-mode derivative of G - Y B P^-1 with P B + B P = P (2 sym(Y^T G)) P
    S0 = 2.0 * sym(Y.T @ G)
    dS0 = 2.0 * sym(dY.T @ G + Y.T @ dG)
    B = lyapunov(P @ S0 @ P)
    dC = dP @ S0 @ P + P @ dS0 @ P + P @ S0 @ dP
    dB = lyapunov(dC - dP @ B - B @ dP)
    return dG - dY @ B @ P_inv - Y @ dB @ P_inv - Y @ B @ dP_inv


def _gradient_derivative(X: FixedRankPoint, A: np.ndarray, dA: np.ndarray, eta) -> Triple:
    U, S, V = X
    eU, eS, eV = eta
    w = X.weights
    P_inv, Q_inv = w.P_inv, w.Q_inv
    dP = 2.0 * sym(eS @ S.T)
    dQ = 2.0 * sym(S.T @ eS)
    dP_inv = -P_inv @ dP @ P_inv
    dQ_inv = -Q_inv @ dQ @ Q_inv

    AV, AtU = A @ V, A.T @ U
    GU = AV @ S.T @ P_inv
    dGU = (dA @ V + A @ eV) @ S.T @ P_inv + AV @ eS.T @ P_inv + AV @ S.T @ dP_inv
    dxiU = _project_factor_derivative(U, eU, GU, dGU, w.lyapunov_p, w.P, dP, P_inv, dP_inv)

    dGS = eU.T @ AV + U.T @ dA @ V + U.T @ A @ eV

    GV = AtU @ S @ Q_inv
    dGV = (dA.T @ U + A.T @ eU) @ S @ Q_inv + AtU @ eS @ Q_inv + AtU @ S @ dQ_inv
    dxiV = _project_factor_derivative(V, eV, GV, dGV, w.lyapunov_q, w.Q, dQ, Q_inv, dQ_inv)

    return Triple(dxiU, dGS, dxiV)


def gradient_derivative(X: FixedRankPoint, problem: CompletionProblem, eta) -> Triple:
    """Directional derivative D grad[eta] of the gradient formula in the ambient coordinates."""
    _check_triple(X, eta)
    A = lrmc.euclidean_gradient(problem, X)
    dA = lrmc.masked(problem, tangent_to_ambient(X, eta))
    return _gradient_derivative(X, A, dA, eta)


def christoffel(X: FixedRankPoint, eta, xi) -> Triple:
    """
    Connection correction of the Sigma-dependent ambient metric, so that
    D xi[eta] + christoffel(X, eta, xi) is the Levi-Civita derivative.
    """
    U, S, V = X
    eU, eS, eV = eta
    xU, xS, xV = xi
    w = X.weights
    dP_eta, dP_xi = 2.0 * sym(eS @ S.T), 2.0 * sym(xS @ S.T)
    dQ_eta, dQ_xi = 2.0 * sym(S.T @ eS), 2.0 * sym(S.T @ xS)
    gamma_U = 0.5 * (xU @ dP_eta + eU @ dP_xi) @ w.P_inv
    gamma_V = 0.5 * (xV @ dQ_eta + eV @ dQ_xi) @ w.Q_inv
    gamma_S = -sym(eU.T @ xU) @ S - S @ sym(eV.T @ xV)
    return Triple(gamma_U, gamma_S, gamma_V)


def riemannian_hessian(X: FixedRankPoint, A: np.ndarray, dA: np.ndarray, eta,
                       grad: Optional[HorizontalTriple] = None) -> HorizontalTriple:
    """
    Horizontal lift of the Riemannian Hessian applied to eta, from the Euclidean
    gradient A and the Euclidean Hessian image dA of the embedded eta.
    """
    _check_triple(X, eta)
    if grad is None:
        grad = riemannian_gradient(X, A)
    ambient = _gradient_derivative(X, A, dA, eta) + christoffel(X, eta, grad)
    return project_horizontal(X, project_tangent(X, ambient))


def hess_vec(X: FixedRankPoint, problem: CompletionProblem, eta,
             grad: Optional[HorizontalTriple] = None) -> HorizontalTriple:
    """Horizontal lift of the Riemannian Hessian applied to eta; pass grad to reuse it across calls."""
    _check_triple(X, eta)
    A = lrmc.euclidean_gradient(problem, X)
    return riemannian_hessian(X, A, lrmc.masked(problem, tangent_to_ambient(X, eta)), eta, grad)


# ==================== PYMANOPT VIEW ====================
class FixedRankQuotient(Manifold):
    """
    Rank-r M x M matrices as the quotient St(r, M) x GL(r) x St(r, M) / (O(r) x O(r)).

    Points are FixedRankPoint, tangent vectors are HorizontalTriple lifts, and
    the Euclidean gradient and Hessian images are dense M x M matrices.
    """

    def __init__(self, M: int, r: int, seed: int = 0):
        if not 1 <= r <= M:
            raise ManifoldError(f"rank r={r} must satisfy 1 <= r <= M={M}")
        self._M = M
        self._r = r
        self._rng = np.random.default_rng(seed)
        name = f"Quotient manifold of {M}x{M} matrices of rank {r}"
        super().__init__(name, (2 * M - r) * r, point_layout=3)

    @property
    def typical_dist(self):
        return self.dim

    def inner_product(self, point, tangent_vector_a, tangent_vector_b):
        return metric(point, tangent_vector_a, tangent_vector_b)

    def norm(self, point, tangent_vector):
        return norm(point, tangent_vector)

    def projection(self, point, vector):
        return project_horizontal(point, project_tangent(point, vector))

    to_tangent_space = projection

    def random_point(self):
        return random_point(self._M, self._r, int(self._rng.integers(2 ** 31)))

    def random_tangent_vector(self, point):
        ambient = Triple(*(self._rng.standard_normal(np.shape(a)) for a in point))
        xi = self.projection(point, ambient)
        return xi / self.norm(point, xi)

    def zero_vector(self, point):
        return HorizontalTriple.zeros(point)

    def retraction(self, point, tangent_vector):
        return retract(point, tangent_vector)

    def transport(self, point_a, point_b, tangent_vector):
        return transport(point_b, tangent_vector)

    def euclidean_to_riemannian_gradient(self, point, euclidean_gradient):
        return riemannian_gradient(point, euclidean_gradient)

    def euclidean_to_riemannian_hessian(self, point, euclidean_gradient, euclidean_hessian, tangent_vector):
        return riemannian_hessian(point, euclidean_gradient, euclidean_hessian, tangent_vector)
