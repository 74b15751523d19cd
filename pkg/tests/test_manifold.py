import logging

import numpy as np
import pytest

from conftest import (
    CYCLE_COMPLETION,
    identity_point,
    random_ambient,
    random_horizontal,
    random_instance,
    random_orthogonal,
    random_skew,
    random_tangent,
)
from timrp import lrmc
from timrp.manifold import (
    COND_LIMIT,
    SINGULAR_FLOOR,
    FixedRankPoint,
    FixedRankQuotient,
    HorizontalTriple,
    ManifoldError,
    TangentTriple,
    Triple,
    augment,
    check_point,
    christoffel,
    egrad_to_rgrad,
    gradient_derivative,
    hess_vec,
    metric,
    norm,
    point_from_factors,
    point_from_matrix,
    project_horizontal,
    project_tangent,
    random_point,
    retract,
    retract_with_velocity,
    riemannian_gradient,
    riemannian_hessian,
    sigma_condition,
    solve_coupled_skew,
    solve_lyapunov_sym,
    tangent_to_ambient,
    transport,
    vertical_vector,
)
from timrp.topology import build_problem, fully_connected


def _sym_part(C):
    return 0.5 * (C + C.T)


def assert_tangent(X, xi, atol=1e-9):
    assert np.abs(_sym_part(X.U.T @ xi[0])).max() < atol
    assert np.abs(_sym_part(X.V.T @ xi[2])).max() < atol


def assert_triples_close(a, b, rtol=1e-8, atol=1e-10):
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=rtol, atol=atol)


def rotated(xi, QU, QV):
    return Triple(xi[0] @ QU, QU.T @ xi[1] @ QV, xi[2] @ QV)


# ==================== POINTS ====================
def test_random_points_are_valid():
    for seed in range(200):
        X = random_point(7, 3, seed)
        check_point(X)
        s = np.diag(X.Sigma)
        assert np.all(s >= 0.5)
        assert np.all(np.diff(s) <= 0)
        assert np.count_nonzero(X.Sigma - np.diag(s)) == 0


def test_random_point_is_deterministic():
    a, b = random_point(5, 2, 9), random_point(5, 2, 9)
    assert np.array_equal(a.embed(), b.embed())


def test_random_point_rejects_bad_rank():
    with pytest.raises(ManifoldError):
        random_point(3, 4, 0)
    with pytest.raises(ManifoldError):
        random_point(3, 0, 0)


def test_embed_and_rotation():
    X = FixedRankPoint(np.eye(3)[:, :2], np.diag([2.0, 1.0]), np.eye(3)[:, :2])
    np.testing.assert_allclose(X.embed(), np.diag([2.0, 1.0, 0.0]))
    rng = np.random.default_rng(1)
    Y = X.rotate(random_orthogonal(2, rng), random_orthogonal(2, rng))
    np.testing.assert_allclose(Y.embed(), X.embed(), atol=1e-14)


def test_point_shapes_validated():
    with pytest.raises(ManifoldError, match="Sigma"):
        FixedRankPoint(np.eye(3)[:, :2], np.eye(3), np.eye(3)[:, :2])
    with pytest.raises(ManifoldError):
        FixedRankPoint(np.eye(3)[:, :2], np.eye(2), np.eye(4)[:, :2])


def test_point_from_matrix_truncates():
    X = point_from_matrix(CYCLE_COMPLETION, 2)
    assert X.r == 2
    check_point(X)
    np.testing.assert_allclose(X.embed(), CYCLE_COMPLETION, atol=1e-12)


def test_point_from_factors(rng):
    L, R = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    X = point_from_factors(L, R)
    check_point(X)
    np.testing.assert_allclose(X.embed(), L @ R.T, atol=1e-12)


# ==================== METRIC AND SOLVES ====================
def test_metric_is_symmetric_and_positive(rng):
    X = random_point(6, 3, 4)
    a, b = random_ambient(X, rng), random_ambient(X, rng)
    assert metric(X, a, b) == pytest.approx(metric(X, b, a))
    assert metric(X, a, a) > 0
    assert norm(X, a) ** 2 == pytest.approx(metric(X, a, a))


def test_metric_rejects_wrong_shapes(rng):
    X = random_point(6, 3, 4)
    with pytest.raises(ManifoldError, match="shapes"):
        metric(X, random_ambient(random_point(6, 2, 0), rng), random_ambient(X, rng))


def test_lyapunov_solve(rng):
    G = rng.standard_normal((4, 4))
    P = G @ G.T + 0.1 * np.eye(4)
    C = rng.standard_normal((4, 4))
    B = solve_lyapunov_sym(P, C)
    np.testing.assert_allclose(B, B.T, atol=1e-12)
    np.testing.assert_allclose(P @ B + B @ P, 0.5 * (C + C.T), atol=1e-10)


def test_lyapunov_rejects_degenerate_coefficients():
    with pytest.raises(ManifoldError, match="positive definite"):
        solve_lyapunov_sym(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(ManifoldError, match="symmetric"):
        solve_lyapunov_sym(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))


def test_coupled_skew_system(rng):
    X = random_point(6, 3, 2)
    S = X.Sigma
    P, Q = S @ S.T, S.T @ S
    rhs1, rhs2 = random_skew(3, rng), random_skew(3, rng)
    t1, t2 = solve_coupled_skew(X, rhs1, rhs2)
    np.testing.assert_allclose(t1, -t1.T, atol=1e-12)
    np.testing.assert_allclose(P @ t1 + t1 @ P - S @ t2 @ S.T, rhs1, atol=1e-10)
    np.testing.assert_allclose(Q @ t2 + t2 @ Q - S.T @ t1 @ S, rhs2, atol=1e-10)


def test_coupled_skew_rank_one_is_trivial():
    X = random_point(4, 1, 0)
    t1, t2 = solve_coupled_skew(X, np.zeros((1, 1)), np.zeros((1, 1)))
    assert t1.shape == t2.shape == (1, 1)
    assert t1[0, 0] == t2[0, 0] == 0.0


# ==================== PROJECTIONS ====================
def test_tangent_projection(rng):
    X = random_point(7, 3, 5)
    A = random_ambient(X, rng)
    xi = project_tangent(X, A)
    assert isinstance(xi, TangentTriple)
    assert_tangent(X, xi)
    assert_triples_close(project_tangent(X, xi), xi)
    zeta = random_tangent(X, rng)
    assert abs(metric(X, A - xi, zeta)) < 1e-9 * norm(X, A) * norm(X, zeta)


def test_horizontal_projection(rng):
    X = random_point(7, 3, 6)
    h = random_horizontal(X, rng)
    assert isinstance(h, HorizontalTriple)
    assert_tangent(X, h)
    assert_triples_close(project_horizontal(X, h), h)

    vert = vertical_vector(X, random_skew(3, rng), random_skew(3, rng))
    assert abs(metric(X, h, vert)) < 1e-9 * norm(X, h) * norm(X, vert)
    assert norm(X, project_horizontal(X, vert)) < 1e-9 * norm(X, vert)


def test_horizontal_vectors_do_not_change_with_vertical_shift(rng):
    X = random_point(5, 2, 8)
    xi = random_tangent(X, rng)
    shifted = xi + vertical_vector(X, random_skew(2, rng), random_skew(2, rng))
    assert_triples_close(project_horizontal(X, shifted), project_horizontal(X, xi))


def test_scalar_multiplication_keeps_type(rng):
    X = random_point(5, 2, 8)
    h = random_horizontal(X, rng)
    assert isinstance(np.float64(2.0) * h, HorizontalTriple)
    assert isinstance(h * 0.5 - h, HorizontalTriple)
    np.testing.assert_allclose((2 * h)[1], 2 * h[1])


# ==================== RETRACTION ====================
def test_retraction_at_zero_is_identity(rng):
    X = random_point(6, 2, 1)
    xi = random_horizontal(X, rng)
    np.testing.assert_allclose(retract(X, xi, 0.0).embed(), X.embed(), atol=1e-12)


def test_retraction_stays_on_manifold(rng):
    X = random_point(6, 3, 3)
    for t in (0.1, 1.0, 5.0):
        check_point(retract(X, random_horizontal(X, rng), t))


def test_retraction_velocity_matches_finite_difference(rng):
    X = random_point(6, 3, 12)
    xi = random_horizontal(X, rng)
    t, h = 0.7, 1e-6
    Y, velocity = retract_with_velocity(X, xi, t)
    np.testing.assert_allclose(Y.embed(), retract(X, xi, t).embed(), atol=1e-12)
    fd = (retract(X, xi, t + h).embed() - retract(X, xi, t - h).embed()) / (2 * h)
    np.testing.assert_allclose(velocity, fd, rtol=1e-5, atol=1e-7)


def test_retraction_first_order(rng):
    X = random_point(6, 3, 13)
    xi = random_horizontal(X, rng)
    _, velocity = retract_with_velocity(X, xi, 0.0)
    np.testing.assert_allclose(velocity, tangent_to_ambient(X, xi), atol=1e-12)


def test_retraction_repairs_ill_conditioned_sigma(caplog):
    X = FixedRankPoint(np.eye(4)[:, :2], np.diag([1.0, 1e-13]), np.eye(4)[:, :2])
    assert sigma_condition(X) > COND_LIMIT
    with caplog.at_level(logging.WARNING):
        Y = retract(X, Triple.zeros(X))
    assert sigma_condition(Y) <= COND_LIMIT
    np.testing.assert_allclose(Y.embed(), X.embed(), atol=1e-7)
    assert "re-factorizing" in caplog.text


def test_retraction_rank_loss_raises():
    X = identity_point(3)
    xi = Triple(-np.eye(3), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ManifoldError, match="rank deficiency"):
        retract(X, xi)


def test_transport_lands_in_horizontal_space(rng):
    X = random_point(6, 2, 21)
    xi = random_horizontal(X, rng)
    Y = retract(X, xi, 0.3)
    moved = transport(Y, random_horizontal(X, rng))
    assert isinstance(moved, HorizontalTriple)
    assert_tangent(Y, moved)
    vert = vertical_vector(Y, random_skew(2, rng), random_skew(2, rng))
    assert abs(metric(Y, moved, vert)) < 1e-9 * norm(Y, moved) * norm(Y, vert)


# ==================== GRADIENT ====================
def test_gradient_matches_directional_derivative(rng):
    problem, X = random_instance(6, 2, seed=31)
    grad = egrad_to_rgrad(X, problem)
    assert_tangent(X, grad)
    eta = random_horizontal(X, rng)

    A = lrmc.euclidean_gradient(problem, X)
    assert metric(X, grad, eta) == pytest.approx(np.sum(A * tangent_to_ambient(X, eta)), rel=1e-9)

    h = 1e-6
    fd = (lrmc.cost(problem, retract(X, eta, h)) - lrmc.cost(problem, retract(X, eta, -h))) / (2 * h)
    assert metric(X, grad, eta) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_gradient_vanishes_at_completion(cycle_problem):
    X = point_from_matrix(CYCLE_COMPLETION, 2)
    assert norm(X, egrad_to_rgrad(X, cycle_problem)) < 1e-12


def test_gradient_is_equivariant(rng):
    problem, X = random_instance(6, 3, seed=17)
    QU, QV = random_orthogonal(3, rng), random_orthogonal(3, rng)
    grad = egrad_to_rgrad(X, problem)
    grad_rot = egrad_to_rgrad(X.rotate(QU, QV), problem)
    assert_triples_close(grad_rot, rotated(grad, QU, QV), rtol=1e-7, atol=1e-9)


# ==================== HESSIAN ====================
def test_gradient_derivative_matches_finite_difference(rng):
    problem, X = random_instance(5, 2, seed=41)
    eta = random_horizontal(X, rng)
    h = 1e-6

    def grad_at(t):
        Y = FixedRankPoint(X.U + t * eta[0], X.Sigma + t * eta[1], X.V + t * eta[2])
        return riemannian_gradient(Y, lrmc.euclidean_gradient(problem, Y))

    fd = (grad_at(h) - grad_at(-h)) / (2 * h)
    assert_triples_close(gradient_derivative(X, problem, eta), fd, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("case", ["identity", "cycle"])
def test_hessian_curvature_at_completion(case, rng, cycle_problem):
    # at a zero of f the second derivative along any curve is ||P_Omega(dX)||^2
    if case == "identity":
        problem, X = build_problem(fully_connected(3)), identity_point(3)
    else:
        problem, X = cycle_problem, point_from_matrix(CYCLE_COMPLETION, 2)
    eta = random_horizontal(X, rng)
    PD = lrmc.masked(problem, tangent_to_ambient(X, eta))
    assert metric(X, hess_vec(X, problem, eta), eta) == pytest.approx(np.sum(PD * PD), rel=1e-8)

    t = 1e-4
    second = (lrmc.cost(problem, retract(X, eta, t)) + lrmc.cost(problem, retract(X, eta, -t))
              - 2 * lrmc.cost(problem, X)) / t ** 2
    assert metric(X, hess_vec(X, problem, eta), eta) == pytest.approx(second, rel=1e-4)


def test_hessian_is_symmetric(rng):
    problem, X = random_instance(6, 3, seed=23)
    eta, zeta = random_horizontal(X, rng), random_horizontal(X, rng)
    left = metric(X, hess_vec(X, problem, eta), zeta)
    right = metric(X, eta, hess_vec(X, problem, zeta))
    assert left == pytest.approx(right, rel=1e-7, abs=1e-9)


def test_hessian_is_linear(rng):
    problem, X = random_instance(5, 2, seed=29)
    eta, zeta = random_horizontal(X, rng), random_horizontal(X, rng)
    combined = hess_vec(X, problem, 2.0 * eta + zeta)
    assert_triples_close(combined, 2.0 * hess_vec(X, problem, eta) + hess_vec(X, problem, zeta),
                         rtol=1e-7, atol=1e-9)


def test_hessian_is_horizontal(rng):
    problem, X = random_instance(6, 3, seed=37)
    H = hess_vec(X, problem, random_horizontal(X, rng))
    assert isinstance(H, HorizontalTriple)
    assert_tangent(X, H)
    vert = vertical_vector(X, random_skew(3, rng), random_skew(3, rng))
    assert abs(metric(X, H, vert)) < 1e-8 * norm(X, H) * norm(X, vert)


def test_hessian_is_equivariant(rng):
    problem, X = random_instance(5, 2, seed=43)
    QU, QV = random_orthogonal(2, rng), random_orthogonal(2, rng)
    eta = random_horizontal(X, rng)
    H = hess_vec(X, problem, eta)
    H_rot = hess_vec(X.rotate(QU, QV), problem, rotated(eta, QU, QV))
    assert_triples_close(H_rot, rotated(H, QU, QV), rtol=1e-7, atol=1e-9)


def test_christoffel_is_symmetric(rng):
    X = random_point(5, 2, 3)
    eta, xi = random_tangent(X, rng), random_tangent(X, rng)
    assert_triples_close(christoffel(X, eta, xi), christoffel(X, xi, eta), atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_hessian_adds_connection_to_transported_gradient_derivative(seed, rng):
    # differences of transported gradients measure the projected derivative only;
    # the connection term is what makes the operator self-adjoint
    problem, X = random_instance(8, 3, seed)
    eta = random_horizontal(X, rng)
    grad = egrad_to_rgrad(X, problem)
    t = 1e-5
    fd = (transport(X, egrad_to_rgrad(retract(X, eta, t), problem))
          - transport(X, egrad_to_rgrad(retract(X, eta, -t), problem))) / (2 * t)
    H = hess_vec(X, problem, eta)
    expected = fd + project_horizontal(X, project_tangent(X, christoffel(X, eta, grad)))
    assert norm(X, expected - H) <= 1e-6 * norm(X, H)


def test_hessian_reuses_gradient(rng):
    problem, X = random_instance(6, 2, seed=47)
    eta = random_horizontal(X, rng)
    grad = egrad_to_rgrad(X, problem)
    assert_triples_close(hess_vec(X, problem, eta, grad), hess_vec(X, problem, eta), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_first_order_model_error_is_quadratic(seed, rng):
    problem, X = random_instance(8, 2, seed)
    eta = random_horizontal(X, rng)
    eta = eta / norm(X, eta)
    f0 = lrmc.cost(problem, X)
    slope = metric(X, egrad_to_rgrad(X, problem), eta)
    ts = np.logspace(-2, -6, 9)
    errors = [abs(lrmc.cost(problem, retract(X, eta, t)) - f0 - t * slope) for t in ts]
    order, _ = np.polyfit(np.log10(ts), np.log10(errors), 1)
    assert order >= 1.9


# ==================== AUGMENT ====================
def test_augment_adds_one_singular_direction(rng):
    X = random_point(6, 2, 13)
    u = rng.standard_normal(6)
    u -= X.U @ (X.U.T @ u)
    u /= np.linalg.norm(u)
    v = rng.standard_normal(6)
    v -= X.V @ (X.V.T @ v)
    v /= np.linalg.norm(v)
    s = SINGULAR_FLOOR * np.linalg.norm(X.Sigma, 2)
    Y = augment(X, u, v, s)
    assert Y.r == 3
    check_point(Y)
    np.testing.assert_allclose(Y.embed(), X.embed() + s * np.outer(u, v), atol=1e-12)


def test_augment_at_full_rank_rejected():
    with pytest.raises(ManifoldError, match="augment"):
        augment(identity_point(3), np.ones(3), np.ones(3), 1.0)


def test_metric_weights_are_cached_per_point():
    X = random_point(5, 3, 2)
    assert X.weights is X.weights
    np.testing.assert_allclose(X.weights.P, X.Sigma @ X.Sigma.T)
    np.testing.assert_allclose(X.weights.Q @ X.weights.Q_inv, np.eye(3), atol=1e-10)
    assert random_point(5, 3, 2).weights is not X.weights


# ==================== PYMANOPT VIEW ====================
def test_quotient_manifold_dimension():
    manifold = FixedRankQuotient(7, 3)
    assert manifold.dim == (2 * 7 - 3) * 3
    assert manifold.typical_dist == manifold.dim
    with pytest.raises(ManifoldError):
        FixedRankQuotient(3, 4)


def test_quotient_manifold_matches_module_geometry(rng):
    manifold = FixedRankQuotient(6, 2, seed=5)
    X = manifold.random_point()
    check_point(X)
    assert X.r == 2

    xi = manifold.random_tangent_vector(X)
    zeta = manifold.projection(X, random_ambient(X, rng))
    assert isinstance(zeta, HorizontalTriple)
    assert manifold.norm(X, xi) == pytest.approx(1.0)
    assert manifold.inner_product(X, xi, zeta) == pytest.approx(metric(X, xi, zeta))
    assert_triples_close(manifold.projection(X, zeta), zeta, atol=1e-10)
    assert manifold.norm(X, manifold.zero_vector(X)) == 0.0

    Y = manifold.retraction(X, xi)
    np.testing.assert_allclose(Y.embed(), retract(X, xi).embed())
    assert_triples_close(manifold.transport(X, Y, zeta), transport(Y, zeta))


def test_quotient_manifold_gradient_and_hessian(rng):
    problem, X = random_instance(6, 2, seed=53)
    manifold = FixedRankQuotient(6, 2)
    eta = random_horizontal(X, rng)
    A = lrmc.euclidean_gradient(problem, X)
    dA = lrmc.masked(problem, tangent_to_ambient(X, eta))
    assert_triples_close(manifold.euclidean_to_riemannian_gradient(X, A), egrad_to_rgrad(X, problem))
    assert_triples_close(manifold.euclidean_to_riemannian_hessian(X, A, dA, eta), hess_vec(X, problem, eta))
    assert_triples_close(riemannian_hessian(X, A, dA, eta), hess_vec(X, problem, eta))
