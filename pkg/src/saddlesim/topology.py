"""Network graphs, graph-Laplacian gossip matrices, and their spectra.

The gossip matrix W is the weighted graph Laplacian: symmetric PSD with the
constant vector spanning its kernel and support restricted to the edges.  The
spectral condition number chi = lambda_1 / lambda_{M-1} governs how fast
decentralized consensus mixes; the mixing matrix is W~ = I - W / lambda_1.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np

__all__ = [
    "Topology",
    "GossipMatrix",
    "build_topology",
    "path_topology",
    "ring_topology",
    "star_topology",
    "complete_topology",
    "weighted_path_topology",
    "weighted_triangle_topology",
    "laplacian",
    "diameter",
    "distance_from_set",
    "tune_chi",
    "topology_to_text",
    "topology_from_text",
]


@dataclass(frozen=True)
class Topology:
    """Undirected weighted graph over the node set {0, ..., num_nodes - 1}."""

    num_nodes: int
    edges: tuple
    kind: str = "custom"

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("a network needs at least 2 nodes")
        seen = set()
        for i, j, w in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) out of range")
            if w <= 0:
                raise ValueError(f"edge ({i}, {j}) has non-positive weight {w}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(
            self, "edges", tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        )
        if not nx.is_connected(self.graph()):
            raise ValueError("graph is not connected")

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.num_nodes))
        g.add_weighted_edges_from(self.edges)
        return g


def path_topology(num_nodes: int) -> Topology:
    edges = [(i, i + 1, 1.0) for i in range(num_nodes - 1)]
    return Topology(num_nodes, tuple(edges), kind="path")


def ring_topology(num_nodes: int) -> Topology:
    if num_nodes < 3:
        raise ValueError("a ring needs at least 3 nodes")
    edges = [(i, (i + 1) % num_nodes, 1.0) for i in range(num_nodes)]
    return Topology(num_nodes, tuple(edges), kind="ring")


def star_topology(num_nodes: int) -> Topology:
    edges = [(0, i, 1.0) for i in range(1, num_nodes)]
    return Topology(num_nodes, tuple(edges), kind="star")


def complete_topology(num_nodes: int) -> Topology:
    edges = [(i, j, 1.0) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
    return Topology(num_nodes, tuple(edges), kind="complete")


def weighted_path_topology(num_nodes: int, a: float) -> Topology:
    """Path whose first edge has weight 1 - a; a in [0, 1).

    Raising a toward 1 chokes the first link and drives chi to infinity.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"weight parameter a={a} outside [0, 1]")
    edges = []
    if a < 1.0:
        edges.append((0, 1, 1.0 - a))
    edges.extend((i, i + 1, 1.0) for i in range(1, num_nodes - 1))
    return Topology(num_nodes, tuple(edges), kind="weighted_path")


def weighted_triangle_topology(a: float) -> Topology:
    """Triangle with the (0, 2) edge weighted a; a = 0 degenerates to a path
    (chi = 3) and a = 1 is the complete triangle (chi = 1)."""
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"weight parameter a={a} outside [0, 1]")
    edges = [(0, 1, 1.0), (1, 2, 1.0)]
    if a > 0.0:
        edges.append((0, 2, a))
    return Topology(3, tuple(edges), kind="weighted_triangle")


_BUILDERS = {
    "path": lambda m, **kw: path_topology(m),
    "ring": lambda m, **kw: ring_topology(m),
    "star": lambda m, **kw: star_topology(m),
    "complete": lambda m, **kw: complete_topology(m),
    "weighted_path": lambda m, a=0.0, **kw: weighted_path_topology(m, a),
    "weighted_triangle": lambda m, a=0.0, **kw: weighted_triangle_topology(a),
}


def build_topology(kind: str, num_nodes: int, **params) -> Topology:
    """Construct a named topology; weighted kinds take the parameter `a`."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown topology kind {kind!r}; valid: {sorted(_BUILDERS)}") from None
    if kind == "weighted_triangle" and num_nodes != 3:
        raise ValueError("weighted_triangle fixes num_nodes = 3")
    return builder(num_nodes, **params)


def diameter(topology: Topology) -> int:
    """Hop diameter; edge weights only affect the gossip matrix."""
    return int(nx.diameter(topology.graph()))


def distance_from_set(topology: Topology, sources, target: int) -> int:
    """Hop distance from a set of source nodes to the target node."""
    lengths = nx.multi_source_dijkstra_path_length(
        topology.graph(), set(sources), weight=None
    )
    return int(lengths[target])


@dataclass(frozen=True)
class GossipMatrix:
    """Graph Laplacian with its cached spectrum and mixing matrix."""

    matrix: np.ndarray
    lambda_max: float
    lambda_second_smallest: float
    chi: float
    mixing: np.ndarray
    lambda2_mixing: float

    def __post_init__(self):
        for name in ("matrix", "mixing"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def laplacian(topology: Topology) -> GossipMatrix:
    """Weighted graph Laplacian of the topology with cached spectrum."""
    m = topology.num_nodes
    w = np.zeros((m, m))
    for i, j, weight in topology.edges:
        w[i, i] += weight
        w[j, j] += weight
        w[i, j] -= weight
        w[j, i] -= weight
    eigenvalues = np.linalg.eigvalsh(w)
    lambda_max = float(eigenvalues[-1])
    lambda_second = float(eigenvalues[1])
    if lambda_second <= 1e-12 * max(lambda_max, 1.0):
        raise ValueError("graph is effectively disconnected (lambda_{M-1} ~ 0)")
    chi = lambda_max / lambda_second
    mixing = np.eye(m) - w / lambda_max
    return GossipMatrix(
        matrix=w,
        lambda_max=lambda_max,
        lambda_second_smallest=lambda_second,
        chi=chi,
        mixing=mixing,
        lambda2_mixing=1.0 - 1.0 / chi,
    )


def _chi_of(kind: str, num_nodes: int, a: float) -> float:
    return laplacian(build_topology(kind, num_nodes, a=a)).chi


def tune_chi(kind: str, num_nodes: int, target_chi: float, tol: float = 1e-6):
    """Bisect the weight parameter of a tunable family until chi hits target.

    Returns the tuned (Topology, GossipMatrix) pair.  weighted_path reaches
    any chi at or above the plain path's; weighted_triangle covers (1, 3].
    """
    if kind not in ("weighted_path", "weighted_triangle"):
        raise ValueError("tune_chi supports weighted_path and weighted_triangle")
    if kind == "weighted_triangle":
        num_nodes = 3
        chi_lo, chi_hi = _chi_of(kind, 3, 1.0), _chi_of(kind, 3, 0.0)
        if not chi_lo * (1 - tol) <= target_chi <= chi_hi * (1 + tol):
            raise ValueError(
                f"target chi {target_chi} outside achievable range "
                f"[{chi_lo:.6g}, {chi_hi:.6g}] for weighted_triangle"
            )
        # chi decreases in a
        lo_a, hi_a = 0.0, 1.0
        increasing = False
    else:
        chi_min = _chi_of(kind, num_nodes, 0.0)
        if target_chi < chi_min * (1 - tol):
            raise ValueError(
                f"target chi {target_chi} below the minimum {chi_min:.6g} achievable "
                f"by weighted_path on {num_nodes} nodes (range [{chi_min:.6g}, inf))"
            )
        lo_a, hi_a = 0.0, 0.5
        while _chi_of(kind, num_nodes, hi_a) < target_chi and hi_a < 1.0 - 1e-12:
            hi_a = 0.5 + 0.5 * hi_a  # approach 1 geometrically; chi -> inf there
        increasing = True

    for _ in range(200):
        mid = 0.5 * (lo_a + hi_a)
        chi_mid = _chi_of(kind, num_nodes, mid)
        if abs(chi_mid - target_chi) <= tol * target_chi:
            topo = build_topology(kind, num_nodes, a=mid)
            return topo, laplacian(topo)
        if (chi_mid < target_chi) == increasing:
            lo_a = mid
        else:
            hi_a = mid
    # Bracket endpoints may themselves satisfy the tolerance (flat families).
    for a in (lo_a, hi_a):
        chi_a = _chi_of(kind, num_nodes, a)
        if abs(chi_a - target_chi) <= tol * target_chi:
            topo = build_topology(kind, num_nodes, a=a)
            return topo, laplacian(topo)
    raise ValueError(f"bisection failed to reach chi={target_chi} within tolerance")


def topology_to_text(topology: Topology) -> str:
    """Serialize as an edge list: a node-count header then `i j weight` lines."""
    lines = [str(topology.num_nodes)]
    lines.extend(f"{i} {j} {w!r}" for i, j, w in topology.edges)
    return "\n".join(lines) + "\n"


def topology_from_text(text: str) -> Topology:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    num_nodes = int(lines[0])
    edges = []
    for ln in lines[1:]:
        i, j, w = ln.split()
        edges.append((int(i), int(j), float(w)))
    return Topology(num_nodes, tuple(edges))
