"""Epsilon graphs, components, tau-connectivity, and k-NN voting.

Every randomized check is paired with an independent oracle: BFS for
components, a Floyd-Warshall style closure for tau-connectivity, and a
per-query full sort for k-NN.
"""

import numpy as np
import pytest

from bsclust.graph import (
    EpsGraph,
    connected_components,
    eps_graph,
    knn_classify,
    tau_components,
)
from bsclust.partition import InvalidInputError


# ---------------------------------------------------------------------------
# oracles


def bfs_components(n, edges):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    labels = np.full(n, -1, dtype=int)
    current = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        stack = [start]
        labels[start] = current
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if labels[w] < 0:
                    labels[w] = current
                    stack.append(w)
        current += 1
    return labels, current


def closure_components(points, tau):
    # transitive closure of the pairwise relation ||x_i - x_j|| < tau
    n = len(points)
    reach = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            reach[i, j] = i == j or np.linalg.norm(points[i] - points[j]) < tau
    for k in range(n):
        for i in range(n):
            if reach[i, k]:
                reach[i] |= reach[k]
    labels = np.full(n, -1, dtype=int)
    current = 0
    for i in range(n):
        if labels[i] < 0:
            labels[reach[i]] = current
            current += 1
    return labels


def knn_oracle(queries, refs, ref_labels, kN):
    keys = (ref_labels,) + tuple(refs[:, j] for j in range(refs.shape[1] - 1, -1, -1))
    order = np.lexsort(keys)
    refs, ref_labels = refs[order], ref_labels[order]
    out = np.empty(len(queries), dtype=ref_labels.dtype)
    for qi, q in enumerate(queries):
        d2 = np.sum((refs - q) ** 2, axis=1)
        nearest = np.argsort(d2, kind="stable")[:kN]
        votes, counts = np.unique(ref_labels[nearest], return_counts=True)
        out[qi] = votes[np.argmax(counts == counts.max())]
    return out


def same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


# ---------------------------------------------------------------------------
# eps_graph


def test_line_points_strict_inequality():
    pts = np.array([[0.0], [1.0], [3.0]])
    g = eps_graph(pts, 1.5)
    assert g.edges.tolist() == [[0, 1]]


def test_large_eps_complete_graph():
    pts = np.random.default_rng(0).uniform(size=(20, 2))
    g = eps_graph(pts, 1e9)
    assert len(g.edges) == 20 * 19 // 2


def test_eps_nonpositive_rejected():
    with pytest.raises(InvalidInputError):
        eps_graph(np.zeros((3, 2)), 0.0)


def test_bucketed_equals_bruteforce():
    rng = np.random.default_rng(1)
    for trial in range(50):
        n = int(rng.integers(10, 500))
        d = int(rng.integers(1, 4))
        pts = rng.uniform(-2, 2, size=(n, d))
        eps = float(rng.uniform(0.05, 1.0))
        brute = eps_graph(pts, eps, method="bruteforce")
        grid = eps_graph(pts, eps, method="grid")
        assert np.array_equal(brute.edges, grid.edges)


def test_boundary_distance_excluded():
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert len(eps_graph(pts, 1.0).edges) == 0
    assert len(eps_graph(pts, 1.0 + 1e-9).edges) == 1


# ---------------------------------------------------------------------------
# connected_components


def test_edgeless_graph():
    g = EpsGraph(4, np.zeros((0, 2), dtype=np.int64), 1.0)
    comp = connected_components(g)
    assert comp.M == 4
    assert comp.labels.tolist() == [0, 1, 2, 3]


def test_path_graph_single_component():
    edges = np.array([[0, 1], [1, 2], [2, 3]], dtype=np.int64)
    comp = connected_components(EpsGraph(4, edges, 1.0))
    assert comp.M == 1


def test_labels_ordered_by_smallest_node():
    edges = np.array([[2, 3], [0, 4]], dtype=np.int64)
    comp = connected_components(EpsGraph(5, edges, 1.0))
    # node 0's component gets label 0, node 1 label 1, node 2 label 2
    assert comp.labels.tolist() == [0, 1, 2, 2, 0]


def test_components_match_bfs_oracle():
    rng = np.random.default_rng(2)
    for trial in range(200):
        n = int(rng.integers(1, 60))
        n_edges = int(rng.integers(0, 3 * n))
        edges = rng.integers(0, n, size=(n_edges, 2))
        edges = edges[edges[:, 0] != edges[:, 1]]
        edges = np.sort(edges, axis=1).astype(np.int64)
        comp = connected_components(EpsGraph(n, edges, 1.0))
        oracle_labels, oracle_m = bfs_components(n, edges)
        assert comp.M == oracle_m
        assert same_partition(comp.labels, oracle_labels)


# ---------------------------------------------------------------------------
# tau_components


def test_two_clusters_gap():
    pts = np.concatenate([np.zeros((5, 2)), np.full((5, 2), 3.0)])
    assert tau_components(pts, 1.0).M == 2
    assert tau_components(pts, 5.0).M == 1


def test_tau_nonpositive_rejected():
    with pytest.raises(InvalidInputError):
        tau_components(np.zeros((3, 2)), -0.1)


def test_tau_matches_closure_oracle():
    rng = np.random.default_rng(3)
    for trial in range(20):
        pts = rng.uniform(0, 4, size=(int(rng.integers(5, 40)), 2))
        tau = float(rng.uniform(0.1, 2.0))
        got = tau_components(pts, tau)
        assert same_partition(got.labels, closure_components(pts, tau))


def test_tau_monotone_refinement():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 5, size=(300, 2))
    prev = None
    prev_m = None
    for tau in (0.2, 0.4, 0.8, 1.6):
        comp = tau_components(pts, tau)
        if prev is not None:
            # each fine cluster maps into exactly one coarse cluster
            for lab in range(prev_m):
                assert len(set(comp.labels[prev == lab])) == 1
            assert comp.M <= prev_m
        prev, prev_m = comp.labels, comp.M


# ---------------------------------------------------------------------------
# knn_classify


def test_knn_single_neighbor():
    refs = np.array([[0.0, 0.0], [5.0, 5.0]])
    labels = np.array([1, 2])
    assert knn_classify(np.array([[4.8, 5.1]]), refs, labels, 1).tolist() == [2]


def test_knn_single_label():
    refs = np.random.default_rng(0).uniform(size=(10, 2))
    labels = np.full(10, 7)
    out = knn_classify(np.random.default_rng(1).uniform(size=(20, 2)), refs, labels, 3)
    assert np.all(out == 7)


def test_knn_empty_refs_rejected():
    with pytest.raises(InvalidInputError):
        knn_classify(np.zeros((1, 2)), np.zeros((0, 2)), np.zeros(0, int), 1)


def test_knn_kN_bounds():
    refs = np.zeros((3, 2))
    with pytest.raises(InvalidInputError):
        knn_classify(np.zeros((1, 2)), refs, np.zeros(3, int), 0)
    with pytest.raises(InvalidInputError):
        knn_classify(np.zeros((1, 2)), refs, np.zeros(3, int), 4)


def test_knn_matches_full_sort_oracle():
    rng = np.random.default_rng(5)
    for trial in range(50):
        n_refs = int(rng.integers(5, 80))
        n_q = int(rng.integers(1, 120))
        d = int(rng.integers(1, 4))
        # integer coordinates force distance ties to exercise tie rules
        refs = rng.integers(0, 5, size=(n_refs, d)).astype(float)
        queries = rng.integers(0, 5, size=(n_q, d)).astype(float)
        labels = rng.integers(0, 4, size=n_refs)
        kN = int(rng.integers(1, n_refs + 1))
        got = knn_classify(queries, refs, labels, kN)
        assert np.array_equal(got, knn_oracle(queries, refs, labels, kN))


def test_knn_invariant_under_ref_permutation():
    rng = np.random.default_rng(6)
    refs = rng.integers(0, 4, size=(30, 2)).astype(float)
    labels = rng.integers(0, 3, size=30)
    queries = rng.integers(0, 4, size=(15, 2)).astype(float)
    base = knn_classify(queries, refs, labels, 5)
    for _ in range(10):
        perm = rng.permutation(30)
        assert np.array_equal(knn_classify(queries, refs[perm], labels[perm], 5), base)
