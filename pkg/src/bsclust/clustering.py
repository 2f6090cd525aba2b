"""Level-scan clustering on top of the forest density estimator.

Two entry points:

- :func:`algorithm1_scan`: the generic scan over a decreasing family of
  level sets with a 2-epsilon persistence check, returning the level at
  which more than one persistent component appears.
- :func:`cluster_forest`: the practical pipeline -- fit a forest, drop
  low-density background points, build an epsilon graph on the rest and
  raise the level until exactly ``k_c`` components remain, then assign
  background points by k-NN voting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .density import DensityForest, ForestParams, eval_forest, fit_forest
from .graph import EpsGraph, connected_components, eps_graph, knn_classify, tau_components
from .partition import InvalidInputError

BACKGROUND = -1


class NoValidLevelError(RuntimeError):
    """No level in the scan produced the requested component count.

    Carries the scan log (level, component count per level) so callers
    can adjust ``q_eps`` or ``q``.
    """

    def __init__(self, scan_log):
        super().__init__("no level in the scan reached the requested number of components")
        self.scan_log = scan_log


class InvalidStateError(RuntimeError):
    pass


@dataclass
class LevelSetPoints:
    """Sample-supported level set: data indices with density >= rho."""

    rho: float
    foreground: np.ndarray
    sigma: float = 0.0


@dataclass
class ClusterResult:
    labels: np.ndarray
    rho_out: float
    scan_log: list = field(default_factory=list)
    single_cluster: bool = False
    params: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("index,label\n")
            for i, lab in enumerate(self.labels):
                fh.write(f"{i},{int(lab)}\n")

    def to_json(self) -> str:
        return json.dumps({
            "rho_out": self.rho_out,
            "scan_log": [[float(a), int(b)] for a, b in self.scan_log],
            "single_cluster": self.single_cluster,
            "params": self.params,
        }, indent=2, sort_keys=True)


def level_points(data, forest: DensityForest, rho: float, sigma: float = 0.0) -> LevelSetPoints:
    """Indices of the data points whose forest value is at least ``rho``.

    The dilation radius ``sigma`` is carried along; downstream it is
    absorbed into the graph radii rather than materialised as a set.
    """
    if rho < 0:
        raise InvalidInputError("rho must be >= 0")
    vals = eval_forest(forest, data)
    return LevelSetPoints(float(rho), np.nonzero(vals >= rho)[0], float(sigma))


# ---------------------------------------------------------------------------
# Algorithm 1: generic scan with persistence check


class PointLevelFamily:
    """Decreasing family over a fixed finite point set with per-point scores.

    ``mask(rho)`` is the boolean indicator of ``scores >= rho``; since the
    scores are fixed, the family is decreasing in ``rho`` by construction.
    """

    def __init__(self, points, scores):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.scores = np.asarray(scores, dtype=float)
        if len(self.scores) != len(self.points):
            raise InvalidInputError("scores must align with points")

    def mask(self, rho: float) -> np.ndarray:
        return self.scores >= rho


def forest_level_family(data, forest: DensityForest) -> PointLevelFamily:
    """The plug-in family of sample level sets of a fitted forest."""
    return PointLevelFamily(data, eval_forest(forest, data))


def _persisting_components(family, rho, tau, eps):
    idx = np.nonzero(family.mask(rho))[0]
    if idx.size == 0:
        return 0, []
    comp = tau_components(family.points[idx], tau)
    survivor = family.mask(rho + 2.0 * eps)
    comps = []
    for label in range(comp.M):
        members = idx[comp.labels == label]
        if survivor[members].any():
            comps.append(members)
    return len(comps), comps


def algorithm1_scan(family, tau: float, eps: float, rho0: float = 0.0,
                    max_steps: int = 100000) -> ClusterResult:
    """Raise the level until more than one persistent component appears.

    At each level, tau-connected components that vanish at level
    ``rho + 2 eps`` are discarded.  While exactly one component persists
    the level advances by ``eps``; once the count differs, the level is
    raised by ``2 eps`` and the persistent components there are the
    answer.  If the family runs out with a single component throughout,
    the start level and its full level set are returned instead.
    """
    if tau <= 0 or eps <= 0 or rho0 < 0:
        raise InvalidInputError("algorithm1_scan requires tau > 0, eps > 0, rho0 >= 0")
    rho = float(rho0)
    scan_log = []
    for _ in range(max_steps):
        m, _ = _persisting_components(family, rho, tau, eps)
        scan_log.append((rho, m))
        if m != 1:
            break
        rho += eps
    else:
        raise RuntimeError("level scan did not terminate")

    rho += 2.0 * eps
    m, comps = _persisting_components(family, rho, tau, eps)
    scan_log.append((rho, m))

    n = len(family.points)
    labels = np.full(n, BACKGROUND, dtype=np.int64)
    if m > 1:
        comps.sort(key=lambda members: int(members.min()))
        for lab, members in enumerate(comps):
            labels[members] = lab
        return ClusterResult(labels, float(rho), scan_log)
    labels[family.mask(rho0)] = 0
    return ClusterResult(labels, float(rho0), scan_log, single_cluster=True)


# ---------------------------------------------------------------------------
# Algorithm 2: forest pipeline


def nearest_rank_quantile(values, q: float) -> float:
    """Empirical quantile with the nearest-rank (ceiling) convention."""
    vals = np.sort(np.asarray(values, dtype=float).ravel())
    if vals.size == 0:
        raise InvalidInputError("quantile of empty sample")
    if not 0.0 < q <= 1.0:
        raise InvalidInputError("q must lie in (0, 1]")
    rank = max(1, int(np.ceil(q * vals.size)))
    return float(vals[rank - 1])


def _sweep_py(order, rank, indptr, indices):
    # Add vertices in decreasing score order, union with already-present
    # neighbours, and record the live component count after each prefix.
    nv = order.size
    parent = np.full(nv, -1, dtype=np.int64)
    m_prefix = np.empty(nv, dtype=np.int64)
    m = 0
    for pos in range(nv):
        v = order[pos]
        parent[v] = v
        m += 1
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if rank[w] < pos:
                a = v
                while parent[a] != a:
                    parent[a] = parent[parent[a]]
                    a = parent[a]
                b = w
                while parent[b] != b:
                    parent[b] = parent[parent[b]]
                    b = parent[b]
                if a != b:
                    parent[b] = a
                    m -= 1
        m_prefix[pos] = m
    return m_prefix


try:  # pragma: no cover - exercised indirectly
    import numba

    _sweep = numba.njit(cache=True)(_sweep_py)
except Exception:  # pragma: no cover
    _sweep = _sweep_py


def level_scan_profile(scores, graph: EpsGraph):
    """Component count of the induced subgraph at every distinct level.

    Returns ``(levels, counts)`` with levels in ascending order; the
    vertex set at ``levels[j]`` is ``{i : scores[i] >= levels[j]}``.
    """
    scores = np.asarray(scores, dtype=float)
    nv = scores.size
    if nv == 0:
        raise InvalidInputError("level_scan_profile requires at least one vertex")
    order = np.lexsort((np.arange(nv), -scores)).astype(np.int64)
    rank = np.empty(nv, dtype=np.int64)
    rank[order] = np.arange(nv)
    indptr, indices = graph.adjacency_csr()
    m_prefix = _sweep(order, rank, indptr.astype(np.int64), indices.astype(np.int64))
    levels = np.unique(scores)  # ascending
    sorted_asc = scores[order][::-1]
    counts_ge = nv - np.searchsorted(sorted_asc, levels, side="left")
    return levels, m_prefix[counts_ge - 1]


def _labels_at_level(graph: EpsGraph, scores, level):
    keep = np.nonzero(scores >= level)[0]
    pos = np.full(len(scores), -1, dtype=np.int64)
    pos[keep] = np.arange(keep.size)
    if graph.edges.size:
        e = graph.edges
        ok = (pos[e[:, 0]] >= 0) & (pos[e[:, 1]] >= 0)
        edges = np.column_stack([pos[e[ok, 0]], pos[e[ok, 1]]])
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    comp = connected_components(EpsGraph(keep.size, edges, graph.eps))
    return keep, comp.labels, comp.M


def pairwise_distance_quantile(points, q_eps: float) -> float:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    sq = np.sum(X ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    tri = d2[np.triu_indices(len(X), k=1)]
    return float(np.sqrt(nearest_rank_quantile(tri, q_eps)))


def cluster_forest(data, m: int = 100, r_ratio: float = 0.3, q: float = 0.1,
                   k: int = 1, kN: int = 5, k_c: int = 2, q_eps: float = 0.05,
                   seed: int = 0, mode: str = "adaptive",
                   holdout_fraction: float = 0.3,
                   forest: DensityForest | None = None) -> ClusterResult:
    """Forest-based clustering into exactly ``k_c`` clusters.

    Pipeline: fit a best-scored forest with ``floor(n * r_ratio)`` splits
    per tree; keep the points strictly above the ``q``-quantile of the
    fitted density values; build the epsilon graph at the ``q_eps``
    pairwise-distance quantile; raise the level through the distinct
    density values until the induced subgraph has ``k_c`` components;
    finally allocate background points by ``kN``-nearest-neighbour
    voting.

    Raises :class:`NoValidLevelError` (with the scan log attached) when
    no level yields ``k_c`` components.  Deterministic given
    ``(data, parameters, seed)``.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n = len(X)
    if not 0.0 < q < 1.0:
        raise InvalidInputError("q must lie in (0, 1)")
    if k_c < 1 or r_ratio <= 0:
        raise InvalidInputError("k_c must be >= 1 and r_ratio > 0")

    if forest is None:
        params = ForestParams(m=m, k=k, p=int(np.floor(n * r_ratio)), mode=mode,
                              holdout_fraction=holdout_fraction, seed=seed)
        forest = fit_forest(X, params)
    fvals = eval_forest(forest, X)

    threshold = nearest_rank_quantile(fvals, q)
    fg_idx = np.nonzero(fvals > threshold)[0]
    if fg_idx.size == 0:
        raise NoValidLevelError([])

    eps = pairwise_distance_quantile(X, q_eps)
    graph = eps_graph(X[fg_idx], eps)
    fg_scores = fvals[fg_idx]

    levels, counts = level_scan_profile(fg_scores, graph)
    hits = np.nonzero(counts == k_c)[0]
    if hits.size == 0:
        raise NoValidLevelError([(float(l), int(c)) for l, c in zip(levels, counts)])
    j = int(hits[0])
    scan_log = [(float(l), int(c)) for l, c in zip(levels[: j + 1], counts[: j + 1])]

    keep, comp_labels, m_found = _labels_at_level(graph, fg_scores, levels[j])
    labels = np.full(n, BACKGROUND, dtype=np.int64)
    labels[fg_idx[keep]] = comp_labels
    result = ClusterResult(labels, float(levels[j]), scan_log,
                           params={"m": m, "r_ratio": r_ratio, "q": q, "k": k,
                                   "kN": kN, "k_c": k_c, "q_eps": q_eps,
                                   "seed": seed, "mode": mode, "eps": eps})
    return assign_background(X, result, kN)


def assign_background(data, result: ClusterResult, kN: int) -> ClusterResult:
    """Replace every background label by the k-NN vote of the labelled points."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    labels = result.labels.copy()
    fg = labels >= 0
    if not fg.any():
        raise InvalidStateError("no labelled foreground point to vote from")
    bg = ~fg
    if bg.any():
        kN_eff = min(kN, int(fg.sum()))
        labels[bg] = knn_classify(X[bg], X[fg], labels[fg], kN_eff)
    return ClusterResult(labels, result.rho_out, result.scan_log,
                         result.single_cluster, result.params)


class ForestLevelClustering(BaseEstimator, ClusterMixin):
    """Scikit-learn style front end for :func:`cluster_forest`.

    After ``fit``, cluster assignments are in ``labels_``, the stopping
    level in ``rho_out_`` and the level scan in ``scan_log_``.
    """

    def __init__(self, m=100, r_ratio=0.3, q=0.1, k=1, kN=5, k_c=2,
                 q_eps=0.05, seed=0, mode="adaptive", holdout_fraction=0.3):
        self.m = m
        self.r_ratio = r_ratio
        self.q = q
        self.k = k
        self.kN = kN
        self.k_c = k_c
        self.q_eps = q_eps
        self.seed = seed
        self.mode = mode
        self.holdout_fraction = holdout_fraction

    def fit(self, X, y=None):
        result = cluster_forest(
            np.asarray(X, dtype=float), m=self.m, r_ratio=self.r_ratio, q=self.q,
            k=self.k, kN=self.kN, k_c=self.k_c, q_eps=self.q_eps, seed=self.seed,
            mode=self.mode, holdout_fraction=self.holdout_fraction)
        self.labels_ = result.labels
        self.rho_out_ = result.rho_out
        self.scan_log_ = result.scan_log
        self.result_ = result
        return self
