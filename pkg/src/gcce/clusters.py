"""Connected bath-spin clusters under a pairwise distance cutoff."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_CLUSTER_CAP = 5_000_000


class EnumerationOverflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class Cluster:
    members: tuple

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if not members or list(members) != sorted(set(members)):
            raise ValueError("cluster members must be unique and sorted")
        object.__setattr__(self, "members", members)

    @property
    def order(self) -> int:
        return len(self.members)


class Graph:
    """Undirected graph stored as sorted neighbour arrays."""

    def __init__(self, n: int, edges):
        self.n = int(n)
        edges = np.asarray(sorted(tuple(sorted(e)) for e in edges), dtype=int).reshape(-1, 2)
        self.edges = edges
        adj = [[] for _ in range(self.n)]
        for i, j in edges:
            adj[i].append(j)
            adj[j].append(i)
        self.adjacency = [np.array(sorted(a), dtype=int) for a in adj]
        self._sets = [frozenset(a.tolist()) for a in self.adjacency]

    def neighbors(self, i) -> frozenset:
        return self._sets[i]

    def has_edge(self, i, j) -> bool:
        return j in self._sets[i]

    @property
    def edge_set(self) -> set:
        return {tuple(e) for e in self.edges.tolist()}

    def is_connected(self, members) -> bool:
        members = list(members)
        if len(members) <= 1:
            return True
        remaining = set(members[1:])
        frontier = [members[0]]
        while frontier:
            v = frontier.pop()
            hit = remaining & self._sets[v]
            remaining -= hit
            frontier.extend(hit)
        return not remaining


def build_connectivity(positions, r_dipole: float) -> Graph:
    """Graph with an edge between every pair closer than ``r_dipole``.

    ``positions`` may be an ``(N, 3)`` array or a sequence of objects with a
    ``position`` attribute.
    """
    if r_dipole <= 0:
        raise ValueError("r_dipole must be positive")
    pos = _positions(positions)
    if len(pos) < 2:
        return Graph(len(pos), [])
    pairs = cKDTree(pos).query_pairs(r_dipole, output_type="ndarray")
    return Graph(len(pos), pairs)


def _positions(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items.reshape(-1, 3).astype(float)
    items = list(items)
    if items and hasattr(items[0], "position"):
        return np.array([b.position for b in items], dtype=float).reshape(-1, 3)
    return np.asarray(items, dtype=float).reshape(-1, 3)


class ClusterSet:
    """All connected clusters up to order ``M`` grouped by order.

    ``by_order[k]`` is an ``(n_k, k)`` integer array, rows sorted
    lexicographically.
    """

    def __init__(self, graph: Graph, by_order: dict, max_order: int):
        self.graph = graph
        self.max_order = max_order
        self.by_order = {k: np.asarray(v, dtype=int).reshape(-1, k) for k, v in by_order.items()}
        self._lookup = {k: {tuple(r) for r in v.tolist()} for k, v in self.by_order.items()}

    def __len__(self):
        return sum(len(v) for v in self.by_order.values())

    def __contains__(self, cluster) -> bool:
        members = cluster.members if isinstance(cluster, Cluster) else tuple(cluster)
        return tuple(members) in self._lookup.get(len(members), ())

    def __iter__(self):
        for k in sorted(self.by_order):
            for row in self.by_order[k].tolist():
                yield Cluster(tuple(row))

    def count(self, order: int) -> int:
        return len(self.by_order.get(order, ()))

    def subclusters(self, cluster) -> list:
        return subclusters(cluster, self)

    def is_downward_closed(self) -> bool:
        for c in self:
            for k in range(1, c.order):
                for sub in combinations(c.members, k):
                    if self.graph.is_connected(sub) and sub not in self:
                        return False
        return True


def enumerate_clusters(graph: Graph, max_order: int, cap: int = DEFAULT_CLUSTER_CAP) -> ClusterSet:
    """Every connected vertex subset of size ``<= max_order``.

    Uses the ESU scheme: each subgraph is grown from its smallest vertex and
    only extended by vertices larger than that root that are exclusive
    neighbours of the newest member, so every connected set is produced
    exactly once.
    """
    if max_order < 1:
        raise ValueError("max_order must be at least 1")
    found = {k: [] for k in range(1, max_order + 1)}
    count = 0

    def overflow():
        degree = 2 * len(graph.edges) / max(graph.n, 1)
        return EnumerationOverflowError(
            f"more than {cap} clusters: {graph.n} spins with mean degree {degree:.1f}; "
            "reduce r_dipole, the order or the bath density"
        )

    def extend(sub, closed, ext, root):
        nonlocal count
        found[len(sub)].append(tuple(sorted(sub)))
        count += 1
        if count > cap:
            raise overflow()
        if len(sub) == max_order:
            return
        ext = sorted(ext)
        while ext:
            w = ext.pop(0)
            new = [u for u in graph.neighbors(w) if u > root and u not in closed]
            extend(sub + [w], closed | set(new), ext + new, root)

    for v in range(graph.n):
        first = [u for u in graph.neighbors(v) if u > v]
        extend([v], {v} | set(first), first, v)
    by_order = {k: sorted(v) for k, v in found.items()}
    return ClusterSet(graph, by_order, max_order)


def subclusters(cluster, cluster_set: ClusterSet) -> list:
    """Proper non-empty subsets of ``cluster`` present in ``cluster_set``."""
    members = cluster.members if isinstance(cluster, Cluster) else tuple(cluster)
    out = []
    for k in range(1, len(members)):
        for sub in combinations(members, k):
            if sub in cluster_set:
                out.append(Cluster(sub))
    return out
