"""
Turn a recovered completion into transceivers for the interference network.

X* = U_x Sigma V_x^T is split as X* = D^T P with decoders D = U_x^T and
precoders P = Sigma V_x^T, both N x M where N is the rank (channel uses).
User i owns columns G_i of both stacks.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import lrmc
from .manifold import FixedRankPoint
from .pursuit import PursuitResult
from .topology import CompletionProblem, NetworkTopology, StreamAllocation

logger = logging.getLogger(__name__)


class ExtractionError(ValueError):
    """The completion is not accurate enough to read transceivers from it"""


@dataclass(frozen=True, eq=False)
class TimSolution:
    decoders: np.ndarray
    precoders: np.ndarray
    N: int
    dof: Tuple[float, ...]
    streams: StreamAllocation

    def decoder(self, i: int) -> np.ndarray:
        """N x M_i block of receiver i."""
        return self.decoders[:, self.streams.block(i)]

    def precoder(self, j: int) -> np.ndarray:
        """N x M_j block of transmitter j."""
        return self.precoders[:, self.streams.block(j)]

    @property
    def symmetric_dof(self) -> float:
        return min(self.dof)

    @property
    def sum_dof(self) -> float:
        return float(sum(self.dof))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "streams": list(self.streams.m),
            "dof": list(self.dof),
            "symmetric_dof": self.symmetric_dof,
            "sum_dof": self.sum_dof,
            "decoders": self.decoders.tolist(),
            "precoders": self.precoders.tolist(),
        }


def extract_transceivers(X: FixedRankPoint, problem: CompletionProblem, eps: float = 1e-6) -> TimSolution:
    value = lrmc.evaluate(problem, X)
    if value.residual > eps:
        raise ExtractionError(f"residual {value.residual:.3e} above tolerance {eps:.1e}; refusing extraction")

    streams = problem.streams or StreamAllocation.uniform(problem.M)
    N = X.r
    decoders = X.U.T.copy()
    precoders = X.Sigma @ X.V.T
    dof = tuple(m / N for m in streams.m)
    logger.info(f"[TIM] extracted transceivers over N={N} channel uses, symmetric DoF {min(dof):.4f}")
    return TimSolution(decoders, precoders, N, dof, streams)


@dataclass(frozen=True)
class AlignmentCheck:
    kind: str  # "interference" or "desired"
    receiver: int
    transmitter: int
    violation: float
    passed: bool


@dataclass
class AlignmentReport:
    tol: float
    checks: List[AlignmentCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def _worst(self, kind: str) -> Optional[AlignmentCheck]:
        pool = [c for c in self.checks if c.kind == kind]
        return max(pool, key=lambda c: c.violation) if pool else None

    @property
    def worst_interference(self) -> Optional[AlignmentCheck]:
        return self._worst("interference")

    @property
    def worst_desired(self) -> Optional[AlignmentCheck]:
        return self._worst("desired")

    @property
    def failures(self) -> List[AlignmentCheck]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict:
        def brief(c: Optional[AlignmentCheck]):
            return None if c is None else {"receiver": c.receiver, "transmitter": c.transmitter, "violation": c.violation}

        return {
            "tol": self.tol,
            "passed": self.passed,
            "checks": len(self.checks),
            "failures": len(self.failures),
            "worst_interference": brief(self.worst_interference),
            "worst_desired": brief(self.worst_desired),
        }


def verify_alignment(sol: TimSolution, topo: NetworkTopology, streams: Optional[StreamAllocation] = None,
                     tol: float = 1e-5) -> AlignmentReport:
    """
    Interference from every connected transmitter j != i must vanish at receiver i,
    and the desired block U_i^T V_i must be the identity. Unconnected pairs are not checked.
    """
    streams = streams or sol.streams
    report = AlignmentReport(tol)
    for i, j in topo.sorted_links():
        block = sol.decoder(i).T @ sol.precoder(j)
        if i == j:
            violation = float(np.abs(block - np.eye(streams.m[i])).max())
            kind = "desired"
        else:
            violation = float(np.abs(block).max())
            kind = "interference"
        report.checks.append(AlignmentCheck(kind, i, j, violation, violation <= tol))

    if report.passed:
        logger.info(f"[TIM] alignment verified on {len(report.checks)} links (tol {tol:.0e})")
    else:
        worst = max(report.failures, key=lambda c: c.violation)
        logger.warning(f"[TIM] {len(report.failures)} alignment checks failed; worst {worst.kind} "
                       f"({worst.receiver},{worst.transmitter}) = {worst.violation:.3e}")
    return report


def attach_dof(result: PursuitResult, sol: TimSolution) -> PursuitResult:
    return replace(result, dof=sol.dof)
