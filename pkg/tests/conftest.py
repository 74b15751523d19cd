import numpy as np
import pytest

from timrp.manifold import (
    FixedRankPoint,
    Triple,
    project_horizontal,
    project_tangent,
    random_point,
)
from timrp.topology import (
    build_problem,
    cycle_topology,
    direct_only,
    fully_connected,
    random_topology,
)

CYCLE_COMPLETION = np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, -1.0, 1.0]])


def random_ambient(X: FixedRankPoint, rng) -> Triple:
    return Triple(rng.standard_normal(X.U.shape), rng.standard_normal(X.Sigma.shape),
                  rng.standard_normal(X.V.shape))


def random_tangent(X: FixedRankPoint, rng):
    return project_tangent(X, random_ambient(X, rng))


def random_horizontal(X: FixedRankPoint, rng):
    return project_horizontal(X, random_tangent(X, rng))


def random_skew(r: int, rng) -> np.ndarray:
    A = rng.standard_normal((r, r))
    return A - A.T


def random_orthogonal(r: int, rng) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((r, r)))
    return Q * np.sign(np.diag(R))


def identity_point(M: int) -> FixedRankPoint:
    return FixedRankPoint(np.eye(M), np.eye(M), np.eye(M))


def random_instance(M: int, r: int, seed: int):
    """Random partially connected problem (roughly a third of the off-diagonal links) and point."""
    problem = build_problem(random_topology(M, M * (M - 1) // 3, seed))
    return problem, random_point(M, r, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def cycle_problem():
    return build_problem(cycle_topology(3))


@pytest.fixture
def diagonal_problem():
    return build_problem(direct_only(10))


@pytest.fixture
def full5_problem():
    return build_problem(fully_connected(5))
