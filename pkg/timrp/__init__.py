"""
Linear transceivers for partially connected interference networks from the
smallest-rank completion of the identity, found by a rank-increasing solver
on the quotient manifold of fixed-rank matrices.
"""
from .lrmc import ObjectiveValue, cost, euclidean_gradient, evaluate, residual
from .manifold import (
    FixedRankPoint,
    FixedRankQuotient,
    HorizontalTriple,
    ManifoldError,
    TangentTriple,
    egrad_to_rgrad,
    embed,
    hess_vec,
    metric,
    project_horizontal,
    project_tangent,
    random_point,
    retract,
    solve_coupled_skew,
    solve_lyapunov_sym,
    transport,
)
from .pursuit import (
    CriticalPointReached,
    PursuitOptions,
    PursuitResult,
    rank_increase,
    riemannian_pursuit,
    simple_rank_one_update,
)
from .solvers import SolverOptions, SolverResult, TraceRecord, solve_als, solve_rcg, solve_rtr
from .tim import ExtractionError, TimSolution, attach_dof, extract_transceivers, verify_alignment
from .topology import (
    CompletionProblem,
    NetworkTopology,
    StreamAllocation,
    TopologyError,
    build_problem,
    parse_topology,
    random_topology,
    serialize_topology,
)

__all__ = [
    "CompletionProblem", "CriticalPointReached", "ExtractionError", "FixedRankPoint", "FixedRankQuotient",
    "HorizontalTriple",
    "ManifoldError", "NetworkTopology", "ObjectiveValue", "PursuitOptions", "PursuitResult", "SolverOptions",
    "SolverResult", "StreamAllocation", "TangentTriple", "TimSolution", "TopologyError", "TraceRecord",
    "attach_dof", "build_problem", "cost", "egrad_to_rgrad", "embed", "euclidean_gradient", "evaluate",
    "extract_transceivers", "hess_vec", "metric", "parse_topology", "project_horizontal", "project_tangent",
    "random_point", "random_topology", "rank_increase", "residual", "retract", "riemannian_pursuit",
    "serialize_topology", "simple_rank_one_update", "solve_als", "solve_coupled_skew", "solve_lyapunov_sym",
    "solve_rcg", "solve_rtr", "transport", "verify_alignment",
]
