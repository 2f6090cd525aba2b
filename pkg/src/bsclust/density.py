"""Histogram density trees on random partitions and best-scored forests.

A density tree assigns each partition cell the empirical mass of the
training points it contains divided by its volume.  A forest averages
``m`` trees, where each tree's partition is the winner (by held-out
average negative log-likelihood) among ``k`` random candidates, refit on
the full sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .data import AffineTransform, scale_to_box
from .partition import (
    Box,
    InvalidInputError,
    Partition,
    build_partition,
    init_partition,
    locate,
    locate_many,
    substream,
)

# Floor for log-likelihood terms of points that fall in zero-mass regions.
ANLL_FLOOR = 1e-12

FOREST_FORMAT = "bsclust-forest"
FOREST_VERSION = 1


@dataclass
class DensityTree:
    """Piecewise-constant density over the cells of one partition.

    The estimator is defined to be 0 outside the root box; the sample
    fraction falling outside is kept in ``outside_mass`` so the masses
    always add up to 1.
    """

    partition: Partition
    cell_mass: np.ndarray
    cell_density: np.ndarray
    n_fit: int
    outside_mass: float = 0.0


@dataclass
class DensityForest:
    """Average of ``m`` best-scored density trees sharing one root box.

    ``scale_transform`` maps raw data space into the root; it is applied
    on every evaluation so callers always work in raw coordinates.
    """

    trees: list
    root: Box
    scale_transform: AffineTransform
    n_fit: int = 0

    @property
    def m(self) -> int:
        return len(self.trees)

    def eval(self, X):
        return eval_forest(self, X)

    def density(self, X):
        """Data-space density: forest value times the transform Jacobian.

        Unlike :func:`eval_forest`, which is a density with respect to
        root-box coordinates, this integrates to (in-box mass) over raw
        data space.
        """
        return eval_forest(self, X) * self.scale_transform.jacobian

    def median_leaf_diameter(self, data_space: bool = True) -> float:
        """Median Euclidean cell diameter across all trees."""
        scale = 1.0 / self.scale_transform.scale if data_space else None
        diams = np.concatenate([t.partition.cell_diameters(scale) for t in self.trees])
        return float(np.median(diams))

    def to_json(self) -> str:
        """Serialize to the documented JSON schema.

        Schema (version 1): ``format``, ``version``, ``d``, ``n_fit``,
        ``root`` (lower/upper), ``transform`` (scale/offset), ``trees``:
        a list of ``{"splits": [[cell_id, dim, ratio], ...],
        "cell_mass": [...], "outside_mass": x}``.  Cut coordinates are
        reconstructed deterministically when loading.
        """
        return json.dumps({
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "d": self.root.d,
            "n_fit": self.n_fit,
            "root": {"lower": self.root.lower.tolist(), "upper": self.root.upper.tolist()},
            "transform": self.scale_transform.to_dict(),
            "trees": [
                {
                    "splits": [[rec.cell_id, rec.dim, rec.ratio] for rec in t.partition.splits],
                    "cell_mass": t.cell_mass.tolist(),
                    "outside_mass": t.outside_mass,
                    "n_fit": t.n_fit,
                }
                for t in self.trees
            ],
        })

    @classmethod
    def from_json(cls, text: str) -> "DensityForest":
        doc = json.loads(text)
        if doc.get("format") != FOREST_FORMAT:
            raise InvalidInputError("not a serialized density forest")
        root = Box(np.asarray(doc["root"]["lower"]), np.asarray(doc["root"]["upper"]))
        transform = AffineTransform.from_dict(doc["transform"])
        trees = []
        for td in doc["trees"]:
            part = init_partition(root)
            for cell_id, dim, ratio in td["splits"]:
                part.apply_split(int(cell_id), int(dim), float(ratio))
            mass = np.asarray(td["cell_mass"], dtype=float)
            trees.append(DensityTree(part, mass, mass / part.cell_volumes(),
                                     int(td["n_fit"]), float(td["outside_mass"])))
        return cls(trees, root, transform, int(doc["n_fit"]))


@dataclass(frozen=True)
class ForestParams:
    m: int = 100
    k: int = 1
    p: int = 100
    mode: str = "adaptive"
    holdout_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.k < 1 or self.p < 0:
            raise InvalidInputError("ForestParams requires m >= 1, k >= 1, p >= 0")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise InvalidInputError("holdout_fraction must lie in (0, 1)")
        if self.mode not in ("pure", "adaptive"):
            raise InvalidInputError("mode must be 'pure' or 'adaptive'")


def fit_tree(partition: Partition, data) -> DensityTree:
    """Fit the histogram density on a fixed partition.

    ``cell_mass[j]`` is the fraction of points in cell ``j``; density is
    mass over cell volume and 0 outside the root.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.size == 0:
        raise InvalidInputError("fit_tree requires non-empty data")
    assign = locate_many(partition, X)
    n = len(X)
    counts = np.bincount(assign[assign >= 0], minlength=partition.n_cells)
    mass = counts / n
    outside = float((assign < 0).sum() / n)
    return DensityTree(partition, mass, mass / partition.cell_volumes(), n, outside)


def eval_tree(tree: DensityTree, x) -> float:
    """Tree density at a single point (0 outside the root box)."""
    cell = locate(tree.partition, x)
    return 0.0 if cell < 0 else float(tree.cell_density[cell])


def eval_tree_many(tree: DensityTree, X) -> np.ndarray:
    assign = locate_many(tree.partition, np.atleast_2d(np.asarray(X, dtype=float)))
    out = np.zeros(len(assign))
    inside = assign >= 0
    out[inside] = tree.cell_density[assign[inside]]
    return out


def anll(eval_fn, points) -> float:
    """Average negative log-likelihood of a density on validation points.

    ``eval_fn`` maps an ``(n, d)`` array to ``n`` density values; values
    below :data:`ANLL_FLOOR` are floored before taking the log.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.size == 0:
        raise InvalidInputError("anll requires a non-empty validation set")
    vals = np.maximum(np.asarray(eval_fn(X), dtype=float), ANLL_FLOOR)
    return float(np.mean(-np.log(vals)))


def best_scored_tree(data, k: int, p: int, mode: str = "pure",
                     rng: int | np.random.Generator = 0,
                     holdout_fraction: float = 0.3,
                     root: Box | None = None,
                     tree_index: int = 0) -> DensityTree:
    """Pick the best of ``k`` random partitions by held-out ANLL, refit on all data.

    All ``k`` candidates are fit on the same train split and scored on
    the same holdout split, so their scores are comparable; the winning
    partition is then refit on the full sample.

    When ``rng`` is an integer it is treated as the master seed and the
    candidate streams are derived from ``(seed, tree_index, candidate)``,
    which makes forests reproducible tree by tree.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n = len(X)
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if n < 2:
        raise InvalidInputError("best_scored_tree requires at least 2 points")
    if root is None:
        d = X.shape[1]
        root = Box(np.full(d, -1.0), np.full(d, 1.0))
    if isinstance(rng, (int, np.integer)):
        holdout_rng = substream(rng, tree_index, k)
        cand_rngs = [substream(rng, tree_index, c) for c in range(k)]
    else:
        holdout_rng = rng
        cand_rngs = rng.spawn(k)

    if k == 1:
        # a single candidate always wins; skip the holdout round-trip
        part = build_partition(root, p, mode, data=X, rng=cand_rngs[0])
        return fit_tree(part, X)

    n_val = max(1, int(np.floor(n * holdout_fraction)))
    n_val = min(n_val, n - 1)
    perm = holdout_rng.permutation(n)
    train, val = X[perm[n_val:]], X[perm[:n_val]]

    best_part, best_score = None, np.inf
    for cand_rng in cand_rngs:
        part = build_partition(root, p, mode, data=train, rng=cand_rng)
        tree = fit_tree(part, train)
        score = anll(lambda pts: eval_tree_many(tree, pts), val)
        if score < best_score:
            best_part, best_score = part, score
    return fit_tree(best_part, X)


def fit_forest(data, params: ForestParams) -> DensityForest:
    """Fit ``m`` best-scored trees on data scaled into the unit root box."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.size == 0:
        raise InvalidInputError("fit_forest requires non-empty data")
    scaled, transform = scale_to_box(X, margin=0.05)
    d = X.shape[1]
    root = Box(np.full(d, -1.0), np.full(d, 1.0))
    trees = [
        best_scored_tree(scaled, params.k, params.p, params.mode,
                         rng=params.seed, holdout_fraction=params.holdout_fraction,
                         root=root, tree_index=t)
        for t in range(params.m)
    ]
    return DensityForest(trees, root, transform, n_fit=len(X))


def eval_forest(forest: DensityForest, X):
    """Average tree density at raw-space point(s) ``X``.

    The stored scale transform is applied internally; the result is a
    density with respect to root-box coordinates (it integrates to the
    in-box mass over the root).
    """
    arr = np.asarray(X, dtype=float)
    single = arr.ndim == 1
    pts = forest.scale_transform(np.atleast_2d(arr))
    total = np.zeros(len(pts))
    for tree in forest.trees:
        total += eval_tree_many(tree, pts)
    total /= forest.m
    return float(total[0]) if single else total


class ForestDensity(BaseEstimator):
    """Scikit-learn style wrapper around :func:`fit_forest`.

    Parameters mirror :class:`ForestParams`.  After ``fit``, the fitted
    forest is available as ``forest_``.
    """

    def __init__(self, m=100, k=1, p=100, mode="adaptive", holdout_fraction=0.3, seed=0):
        self.m = m
        self.k = k
        self.p = p
        self.mode = mode
        self.holdout_fraction = holdout_fraction
        self.seed = seed

    def fit(self, X, y=None):
        params = ForestParams(self.m, self.k, self.p, self.mode,
                              self.holdout_fraction, self.seed)
        self.forest_ = fit_forest(np.asarray(X, dtype=float), params)
        return self

    def density(self, X):
        """Data-space density values (Jacobian corrected)."""
        return self.forest_.density(X)

    def score_samples(self, X):
        """Log of the data-space density, floored at :data:`ANLL_FLOOR`."""
        return np.log(np.maximum(self.forest_.density(X), ANLL_FLOOR))

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))
