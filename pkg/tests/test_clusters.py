from itertools import combinations

import numpy as np
import pytest

from gcce.clusters import (
    Cluster,
    EnumerationOverflowError,
    Graph,
    build_connectivity,
    enumerate_clusters,
    subclusters,
)


def brute_force(graph, max_order):
    out = {}
    for k in range(1, max_order + 1):
        out[k] = sorted(c for c in combinations(range(graph.n), k) if graph.is_connected(c))
    return out


def test_cluster_validation():
    assert Cluster((1, 4)).order == 2
    for bad in ((), (3, 1), (2, 2)):
        with pytest.raises(ValueError):
            Cluster(bad)


def test_connectivity_matches_pairwise_distances():
    rng = np.random.default_rng(0)
    pos = rng.random((40, 3)) * 10
    g = build_connectivity(pos, 3.0)
    d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
    ref = {(i, j) for i in range(40) for j in range(i + 1, 40) if d[i, j] < 3.0}
    assert g.edge_set == ref
    assert build_connectivity(pos[:1], 3.0).n == 1
    with pytest.raises(ValueError):
        build_connectivity(pos, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_esu_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pos = rng.random((14, 3)) * 6
    g = build_connectivity(pos, 2.5)
    cs = enumerate_clusters(g, 4)
    ref = brute_force(g, 4)
    for k in range(1, 5):
        assert [tuple(r) for r in cs.by_order[k].tolist()] == ref[k]
    assert len(cs) == sum(len(v) for v in ref.values())
    assert cs.is_downward_closed()


def test_path_and_complete_graph_counts():
    path = Graph(6, [(i, i + 1) for i in range(5)])
    cs = enumerate_clusters(path, 3)
    assert [cs.count(k) for k in (1, 2, 3)] == [6, 5, 4]
    complete = Graph(6, list(combinations(range(6), 2)))
    cs = enumerate_clusters(complete, 4)
    assert [cs.count(k) for k in (1, 2, 3, 4)] == [6, 15, 20, 15]


def test_isolated_spins_only_singletons():
    cs = enumerate_clusters(Graph(5, []), 3)
    assert cs.count(1) == 5 and cs.count(2) == 0 and cs.count(3) == 0


def test_subclusters_are_connected_members():
    path = Graph(4, [(0, 1), (1, 2), (2, 3)])
    cs = enumerate_clusters(path, 4)
    subs = {c.members for c in subclusters(Cluster((0, 1, 2)), cs)}
    # (0, 2) is disconnected and therefore absent
    assert subs == {(0,), (1,), (2,), (0, 1), (1, 2)}
    assert Cluster((0, 1, 2, 3)) in cs
    assert (0, 2) not in cs


def test_overflow_raises_with_diagnostic():
    complete = Graph(12, list(combinations(range(12), 2)))
    with pytest.raises(EnumerationOverflowError, match="r_dipole"):
        enumerate_clusters(complete, 4, cap=100)
    with pytest.raises(ValueError):
        enumerate_clusters(complete, 0)
