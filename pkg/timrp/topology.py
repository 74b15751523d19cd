"""
Partially connected K-user interference networks and the masked completion
problem they induce.

Indices are 0-based everywhere, in code and in topology files. A link (i, j)
means receiver i hears transmitter j; every direct link (i, i) must be present.
"""
import json
import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Link = Tuple[int, int]


class TopologyError(ValueError):
    """Malformed topology, stream allocation or topology file"""


def _as_index(value, what: str) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
        raise TopologyError(f"{what} must be an integer, got {value!r}")
    return int(value)


# ==================== DOMAIN TYPES ====================
@dataclass(frozen=True)
class NetworkTopology:
    """User count K and the set of (receiver, transmitter) links"""

    K: int
    links: FrozenSet[Link]

    def __post_init__(self):
        K = _as_index(self.K, "K")
        if K < 1:
            raise TopologyError(f"K must be positive, got {K}")

        raw = list(self.links)
        pairs = []
        for link in raw:
            if len(tuple(link)) != 2:
                raise TopologyError(f"link must be a pair [i, j], got {link!r}")
            i, j = (_as_index(v, "link index") for v in link)
            if not (0 <= i < K and 0 <= j < K):
                raise TopologyError(f"link ({i},{j}) out of range for K={K}")
            pairs.append((i, j))

        links = frozenset(pairs)
        if len(links) != len(pairs):
            seen, dups = set(), set()
            for p in pairs:
                (dups if p in seen else seen).add(p)
            raise TopologyError(f"duplicate links: {sorted(dups)}")

        for k in range(K):
            if (k, k) not in links:
                raise TopologyError(f"missing direct link ({k},{k})")

        object.__setattr__(self, "K", K)
        object.__setattr__(self, "links", links)

    @property
    def interference_links(self) -> List[Link]:
        return sorted((i, j) for i, j in self.links if i != j)

    @property
    def num_interference_links(self) -> int:
        return len(self.links) - self.K

    def sorted_links(self) -> List[Link]:
        return sorted(self.links)

    def adjacency(self) -> np.ndarray:
        """Boolean K x K matrix, entry (i, j) set when receiver i hears transmitter j."""
        adj = np.zeros((self.K, self.K), dtype=bool)
        for i, j in self.links:
            adj[i, j] = True
        return adj

    def relabel(self, perm: Sequence[int]) -> "NetworkTopology":
        """User k becomes user perm[k]."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.K)):
            raise TopologyError(f"relabel needs a permutation of range({self.K}), got {perm}")
        return NetworkTopology(self.K, frozenset((perm[i], perm[j]) for i, j in self.links))


@dataclass(frozen=True)
class StreamAllocation:
    """Per-user stream counts M_1..M_K"""

    m: Tuple[int, ...]

    def __post_init__(self):
        m = tuple(_as_index(v, "stream count") for v in self.m)
        if not m:
            raise TopologyError("stream allocation must cover at least one user")
        bad = [(i, v) for i, v in enumerate(m) if v < 1]
        if bad:
            raise TopologyError(f"stream counts must be >= 1, got {bad}")
        object.__setattr__(self, "m", m)

    @classmethod
    def uniform(cls, K: int, streams: int = 1) -> "StreamAllocation":
        return cls((streams,) * K)

    @property
    def K(self) -> int:
        return len(self.m)

    @property
    def M(self) -> int:
        return sum(self.m)

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate(([0], np.cumsum(self.m)[:-1])))

    def block(self, i: int) -> slice:
        """Row/column range of user i's streams in the M x M matrix."""
        start = self.offsets[i]
        return slice(start, start + self.m[i])

    def blocks(self) -> List[slice]:
        return [self.block(i) for i in range(self.K)]


@dataclass(frozen=True, eq=False)
class CompletionProblem:
    """
    Mask Omega on an M x M matrix with the identity target.
    The mask is stored read-only so the problem can be shared across concurrent runs.
    """

    M: int
    mask: np.ndarray
    streams: Optional[StreamAllocation] = None
    topology: Optional[NetworkTopology] = None

    def __post_init__(self):
        M = _as_index(self.M, "M")
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != (M, M):
            raise TopologyError(f"mask shape {mask.shape} does not match M={M}")
        if not np.all(np.diag(mask)):
            missing = [int(k) for k in np.flatnonzero(~np.diag(mask))]
            raise TopologyError(f"diagonal entries missing from omega: {missing}")
        if self.streams is not None and self.streams.M != M:
            raise TopologyError(f"streams total {self.streams.M} does not match M={M}")
        mask.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_omega(cls, M: int, omega: Iterable[Tuple[int, int]]) -> "CompletionProblem":
        mask = np.zeros((M, M), dtype=bool)
        for i, j in omega:
            if not (0 <= i < M and 0 <= j < M):
                raise TopologyError(f"omega entry ({i},{j}) out of range for M={M}")
            mask[i, j] = True
        return cls(M, mask)

    @property
    def omega(self) -> FrozenSet[Tuple[int, int]]:
        rows, cols = np.nonzero(self.mask)
        return frozenset(zip(rows.tolist(), cols.tolist()))

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def target(self) -> np.ndarray:
        # identity restricted to omega; omega always holds the diagonal
        return np.eye(self.M)


# ==================== CONSTRUCTION ====================
def build_problem(topo: NetworkTopology, streams: Optional[StreamAllocation] = None) -> CompletionProblem:
    """Omega is the union of the blocks G_i x G_j over all links (i, j)."""
    if streams is None:
        streams = StreamAllocation.uniform(topo.K)
    if streams.K != topo.K:
        raise TopologyError(f"stream allocation covers {streams.K} users, topology has K={topo.K}")

    mask = np.zeros((streams.M, streams.M), dtype=bool)
    for i, j in topo.links:
        mask[streams.block(i), streams.block(j)] = True
    return CompletionProblem(streams.M, mask, streams=streams, topology=topo)


def fully_connected(K: int) -> NetworkTopology:
    return NetworkTopology(K, frozenset((i, j) for i in range(K) for j in range(K)))


def direct_only(K: int) -> NetworkTopology:
    return NetworkTopology(K, frozenset((k, k) for k in range(K)))


def cycle_topology(K: int) -> NetworkTopology:
    """Receiver i hears its own transmitter and transmitter (i + 1) mod K."""
    links = {(k, k) for k in range(K)} | {(k, (k + 1) % K) for k in range(K)}
    return NetworkTopology(K, frozenset(links))


def five_user_example() -> NetworkTopology:
    """Fixed five-user partially connected network used in docs and tests."""
    interference = [(0, 1), (0, 3), (1, 2), (2, 0), (2, 4), (3, 2), (4, 1), (4, 3)]
    return NetworkTopology(5, frozenset([(k, k) for k in range(5)] + interference))


def random_topology(K: int, L: int, seed: int) -> NetworkTopology:
    """K direct links plus L distinct off-diagonal links drawn uniformly without replacement."""
    K = _as_index(K, "K")
    L = _as_index(L, "L")
    if K < 1:
        raise TopologyError(f"K must be positive, got {K}")
    max_links = K * (K - 1)
    if not 0 <= L <= max_links:
        raise TopologyError(f"L={L} out of range [0, {max_links}] for K={K}")

    candidates = [(i, j) for i in range(K) for j in range(K) if i != j]
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(candidates), size=L, replace=False) if L else []
    links = [(k, k) for k in range(K)] + [candidates[int(p)] for p in picked]
    return NetworkTopology(K, frozenset(links))


# ==================== FILE FORMAT ====================
def parse_topology_document(text: str) -> Tuple[NetworkTopology, Optional[StreamAllocation]]:
    """Parse `{"K": int, "links": [[i, j], ...], "streams": [...]?}`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TopologyError(f"malformed topology JSON: {e.msg} at line {e.lineno} column {e.colno}") from e

    if not isinstance(doc, dict):
        raise TopologyError("topology document must be a JSON object")
    if "K" not in doc:
        raise TopologyError('topology document is missing "K"')
    if "links" not in doc:
        raise TopologyError('topology document is missing "links"')
    if not isinstance(doc["links"], list):
        raise TopologyError('"links" must be a list of [i, j] pairs')
    for link in doc["links"]:
        if not isinstance(link, list) or len(link) != 2:
            raise TopologyError(f"link must be a pair [i, j], got {link!r}")

    topo = NetworkTopology(doc["K"], doc["links"])

    streams = None
    if doc.get("streams") is not None:
        if not isinstance(doc["streams"], list):
            raise TopologyError('"streams" must be a list of per-user stream counts')
        streams = StreamAllocation(tuple(doc["streams"]))
        if streams.K != topo.K:
            raise TopologyError(f'"streams" has {streams.K} entries, expected K={topo.K}')
    return topo, streams


def parse_topology(text: str) -> NetworkTopology:
    return parse_topology_document(text)[0]


def serialize_topology(topo: NetworkTopology, streams: Optional[StreamAllocation] = None) -> str:
    doc = {"K": topo.K, "links": [list(link) for link in topo.sorted_links()]}
    if streams is not None:
        doc["streams"] = list(streams.m)
    return json.dumps(doc)


def load_topology(path: str) -> Tuple[NetworkTopology, Optional[StreamAllocation]]:
    with open(path, "r", encoding="utf-8") as f:
        topo, streams = parse_topology_document(f.read())
    logger.info(f"[TOPOLOGY] loaded {path}: K={topo.K}, {topo.num_interference_links} interference links")
    return topo, streams


def save_topology(path: str, topo: NetworkTopology, streams: Optional[StreamAllocation] = None) -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_topology(topo, streams))
        f.write("\n")
    return path
