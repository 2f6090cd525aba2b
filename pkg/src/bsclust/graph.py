"""Epsilon similarity graphs, connected components, and k-NN voting.

All neighbourhoods use the strict rule ``||x_i - x_j||_2 < eps``; the
chain definition of tau-connectivity is realised as connectivity of the
radius graph at radius tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .partition import InvalidInputError


@dataclass
class EpsGraph:
    """Undirected radius graph: edge (i, j) iff ``||x_i - x_j|| < eps``."""

    n: int
    edges: np.ndarray  # (E, 2) int array, i < j
    eps: float

    def adjacency_csr(self):
        """Symmetric CSR adjacency (indptr, indices) over node indices."""
        if self.edges.size == 0:
            return np.zeros(self.n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return indptr, dst.astype(np.int64)


@dataclass
class ComponentLabels:
    labels: np.ndarray
    M: int


def _pairwise_sq(points):
    X = np.asarray(points, dtype=float)
    sq = np.sum(X ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def eps_graph(points, eps: float, method: str = "auto") -> EpsGraph:
    """Build the strict radius graph on ``points``.

    ``method`` is one of ``"bruteforce"`` (dense pairwise distances),
    ``"grid"`` (exact cell bucketing, same edge set), or ``"auto"``.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be > 0")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(X)
    if method == "auto":
        method = "bruteforce" if n <= 3000 else "grid"
    if method == "bruteforce":
        d2 = _pairwise_sq(X)
        ii, jj = np.nonzero(np.triu(d2 < eps * eps, k=1))
        edges = np.column_stack([ii, jj]).astype(np.int64)
    elif method == "grid":
        edges = _eps_edges_bucketed(X, eps)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return EpsGraph(n, edges, float(eps))


def _eps_edges_bucketed(X, eps):
    # Exact: candidates restricted to the 3^d neighbouring buckets of side
    # eps, then filtered with the same strict comparison as brute force.
    n, d = X.shape
    keys = np.floor(X / eps).astype(np.int64)
    buckets: dict = {}
    for i, key in enumerate(map(tuple, keys)):
        buckets.setdefault(key, []).append(i)
    shifts = np.stack(np.meshgrid(*([[-1, 0, 1]] * d), indexing="ij"), axis=-1).reshape(-1, d)
    out = []
    for key, members in buckets.items():
        mem = np.asarray(members)
        cands = []
        for sh in shifts:
            other = buckets.get(tuple(np.asarray(key) + sh))
            if other is not None:
                cands.extend(other)
        cands = np.asarray(cands)
        d2 = np.sum((X[mem][:, None, :] - X[cands][None, :, :]) ** 2, axis=-1)
        ii, jj = np.nonzero(d2 < eps * eps)
        a, b = mem[ii], cands[jj]
        keep = a < b
        if keep.any():
            out.append(np.column_stack([a[keep], b[keep]]))
    if not out:
        return np.zeros((0, 2), dtype=np.int64)
    edges = np.concatenate(out)
    # deterministic canonical order
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return np.unique(edges[order], axis=0).astype(np.int64)


class UnionFind:
    """Array union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.n_components = n

    def find(self, i: int) -> int:
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.n_components -= 1
        return True


def _component_roots_py(n, edges):
    # Union by smaller root index, so each component's root is its minimum
    # node index and the final roots are already in first-occurrence order.
    parent = np.arange(n)
    for e in range(edges.shape[0]):
        a = edges[e, 0]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = edges[e, 1]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a != b:
            if a < b:
                parent[b] = a
            else:
                parent[a] = b
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        parent[i] = r
    return parent


try:  # pragma: no cover - exercised indirectly
    import numba

    _component_roots = numba.njit(cache=True)(_component_roots_py)
except Exception:  # pragma: no cover
    _component_roots = _component_roots_py


def connected_components(graph: EpsGraph) -> ComponentLabels:
    """Union-find components; labels ordered by smallest contained node index."""
    edges = np.ascontiguousarray(graph.edges, dtype=np.int64).reshape(-1, 2)
    roots = _component_roots(graph.n, edges)
    uniq, labels = np.unique(roots, return_inverse=True)
    return ComponentLabels(labels.astype(np.int64), len(uniq))


def tau_components(points, tau: float) -> ComponentLabels:
    """Components under the chain relation with consecutive gaps < tau."""
    if tau <= 0:
        raise InvalidInputError("tau must be > 0")
    return connected_components(eps_graph(points, tau))


def _canonical_ref_order(refs, ref_labels=None):
    # coordinate-lexicographic order; the label is the last tie key so
    # exactly coincident references with different labels still sort the
    # same way under any input permutation
    keys = tuple(refs[:, j] for j in range(refs.shape[1] - 1, -1, -1))
    if ref_labels is not None:
        keys = (ref_labels,) + keys
    return np.lexsort(keys)


def _knn_vote(d2, ref_labels, kN):
    # Vote among the kN nearest columns of a squared-distance matrix whose
    # columns are already in canonical reference order.  Selection keeps
    # the (distance, column) lexicographic rule: a partition threshold
    # admits all boundary ties, the rare rows with extras are trimmed by a
    # stable sort, and vote ties resolve to the smallest label via argmax.
    nq, nr = d2.shape
    uniq, inv = np.unique(ref_labels, return_inverse=True)
    kth = np.partition(d2, kN - 1, axis=1)[:, kN - 1]
    mask = d2 <= kth[:, None]
    onehot = np.zeros((nr, uniq.size))
    onehot[np.arange(nr), inv] = 1.0
    counts = mask @ onehot
    for qi in np.nonzero(mask.sum(axis=1) > kN)[0]:
        cand = np.nonzero(mask[qi])[0]
        cand = cand[np.argsort(d2[qi, cand], kind="stable")[:kN]]
        counts[qi] = np.bincount(inv[cand], minlength=uniq.size)
    return uniq[np.argmax(counts, axis=1)]


def knn_classify(queries, refs, ref_labels, kN: int) -> np.ndarray:
    """Majority label among the ``kN`` nearest references of each query.

    Ties are deterministic: equal distances are broken by the reference's
    rank in the canonical coordinate order, and vote ties by the smaller
    label, so the result is invariant under permutations of ``refs``.
    """
    refs = np.atleast_2d(np.asarray(refs, dtype=float))
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    ref_labels = np.asarray(ref_labels)
    if len(refs) == 0:
        raise InvalidInputError("knn_classify requires non-empty references")
    if kN < 1 or kN > len(refs):
        raise InvalidInputError("kN must satisfy 1 <= kN <= len(refs)")
    order = _canonical_ref_order(refs, ref_labels)
    refs, ref_labels = refs[order], ref_labels[order]

    d2 = np.sum((queries[:, None, :] - refs[None, :, :]) ** 2, axis=-1)
    return _knn_vote(d2, ref_labels, kN)
