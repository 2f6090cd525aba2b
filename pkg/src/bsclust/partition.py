"""Axis-parallel random partitions of a hypercube.

A partition is grown by repeatedly splitting one leaf cell along one
coordinate axis.  Two split modes are supported:

- ``pure``: the cell to split is chosen uniformly among all leaves,
- ``adaptive``: the cell to split is the leaf containing a training point
  drawn uniformly at random, which steers refinement toward data-dense
  regions.

In both modes the split dimension is uniform over ``d`` and the cut
position is a uniform fraction of the cell's side length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTSIDE = -1

# Cut ratios are redrawn if either child would be thinner than this
# fraction of the root side, so every cell keeps positive volume.
MIN_SIDE_FRACTION = 1e-9


class InvalidInputError(ValueError):
    """Raised when an operation receives arguments violating its contract."""


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator for stream ``(seed, *key)``.

    Forests derive one stream per (tree, candidate) pair from the master
    seed, so trees are reproducible independently of build order.
    """
    parts = [int(seed), *(int(k) for k in key)]
    if any(p < 0 for p in parts):
        raise InvalidInputError("seed and stream keys must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(parts))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its lower and upper corner."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise InvalidInputError("box corners must be 1-d vectors of equal length")
        if not np.all(lower < upper):
            raise InvalidInputError("box is degenerate: lower >= upper in some dimension")

    @property
    def d(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x) -> bool:
        """Membership with closed faces (used for the root box only)."""
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class SplitRecord:
    """One split step: which cell, which dimension, at which ratio.

    ``cut`` is the resulting absolute coordinate, recorded so that a
    partition can be replayed without re-deriving cell geometry.
    """

    cell_id: int
    dim: int
    ratio: float
    cut: float


@dataclass
class Partition:
    """A recursive axis-parallel subdivision of ``root`` into ``p + 1`` cells.

    Cells follow the half-open convention ``[lo, hi)`` in every dimension,
    except on the root's upper faces, which are closed.  This makes
    :func:`locate` unambiguous on split boundaries.
    """

    root: Box
    _cells_lo: list = field(default_factory=list, repr=False)
    _cells_hi: list = field(default_factory=list, repr=False)
    splits: list = field(default_factory=list)
    # binary locate tree; leaves reference cell ids
    _node_dim: list = field(default_factory=list, repr=False)
    _node_cut: list = field(default_factory=list, repr=False)
    _node_left: list = field(default_factory=list, repr=False)
    _node_right: list = field(default_factory=list, repr=False)
    _node_cell: list = field(default_factory=list, repr=False)
    _cell_node: list = field(default_factory=list, repr=False)

    @property
    def p(self) -> int:
        return len(self.splits)

    @property
    def n_cells(self) -> int:
        return len(self._cells_lo)

    @property
    def cells(self) -> list:
        return [Box(lo.copy(), hi.copy()) for lo, hi in zip(self._cells_lo, self._cells_hi)]

    def cell_volumes(self) -> np.ndarray:
        lo = np.asarray(self._cells_lo)
        hi = np.asarray(self._cells_hi)
        return np.prod(hi - lo, axis=1)

    def cell_diameters(self, scale=None) -> np.ndarray:
        """Euclidean diameter of every cell, optionally rescaled per axis."""
        lo = np.asarray(self._cells_lo)
        hi = np.asarray(self._cells_hi)
        side = hi - lo
        if scale is not None:
            side = side * np.asarray(scale, dtype=float)
        return np.sqrt(np.sum(side ** 2, axis=1))

    def copy(self) -> "Partition":
        return Partition(
            self.root,
            list(self._cells_lo), list(self._cells_hi), list(self.splits),
            list(self._node_dim), list(self._node_cut),
            list(self._node_left), list(self._node_right),
            list(self._node_cell), list(self._cell_node),
        )

    def apply_split(self, cell_id: int, dim: int, ratio: float) -> int:
        """Split ``cell_id`` at fraction ``ratio`` of its side in ``dim``.

        The lower child keeps ``cell_id``; the upper child gets a fresh id,
        which is returned.
        """
        lo = self._cells_lo[cell_id]
        hi = self._cells_hi[cell_id]
        cut = lo[dim] + ratio * (hi[dim] - lo[dim])
        left_hi = hi.copy()
        left_hi[dim] = cut
        right_lo = lo.copy()
        right_lo[dim] = cut
        new_id = self.n_cells
        self._cells_hi[cell_id] = left_hi
        self._cells_lo.append(right_lo)
        self._cells_hi.append(hi)
        self.splits.append(SplitRecord(cell_id, dim, float(ratio), float(cut)))

        node = self._cell_node[cell_id]
        left = len(self._node_dim)
        right = left + 1
        for cell, _ in ((cell_id, left), (new_id, right)):
            self._node_dim.append(-1)
            self._node_cut.append(0.0)
            self._node_left.append(-1)
            self._node_right.append(-1)
            self._node_cell.append(cell)
        self._node_dim[node] = dim
        self._node_cut[node] = float(cut)
        self._node_left[node] = left
        self._node_right[node] = right
        self._node_cell[node] = -1
        self._cell_node[cell_id] = left
        self._cell_node.append(right)
        return new_id


def init_partition(root: Box) -> Partition:
    """Trivial partition: a single cell equal to ``root``."""
    part = Partition(root)
    part._cells_lo.append(root.lower.copy())
    part._cells_hi.append(root.upper.copy())
    part._node_dim.append(-1)
    part._node_cut.append(0.0)
    part._node_left.append(-1)
    part._node_right.append(-1)
    part._node_cell.append(0)
    part._cell_node.append(0)
    return part


def _pick_cell(partition: Partition, mode: str, data, rng: np.random.Generator) -> int:
    if mode == "pure":
        return int(rng.integers(partition.n_cells))
    if mode == "adaptive":
        if data is None or len(data) == 0:
            raise InvalidInputError("adaptive mode requires data")
        for _ in range(10000):
            i = int(rng.integers(len(data)))
            cell_id = locate(partition, data[i])
            if cell_id != OUTSIDE:
                return cell_id
        raise InvalidInputError("adaptive mode: no data point inside the root box")
    raise InvalidInputError(f"unknown split mode {mode!r}")


def _draw_split(partition: Partition, mode: str, data, rng: np.random.Generator):
    d = partition.root.d
    root_side = partition.root.upper - partition.root.lower
    if mode == "adaptive" and data is not None:
        data = np.asarray(data, dtype=float)
    # adaptive steering can get stuck when every occupied leaf has shrunk
    # to the minimum width; falling back to a uniform leaf keeps the
    # invariant that a partition of bounded p is always splittable
    for pick_mode in (mode, "pure"):
        for _ in range(1000):
            cell_id = _pick_cell(partition, pick_mode, data, rng)
            dim = int(rng.integers(d))
            side = partition._cells_hi[cell_id][dim] - partition._cells_lo[cell_id][dim]
            min_side = MIN_SIDE_FRACTION * root_side[dim]
            # a cell thinner than two minimum widths cannot host a valid
            # cut in this dimension; redraw cell and dimension instead
            if side < 2.0 * min_side:
                continue
            for _ in range(1000):
                ratio = float(rng.uniform())
                if ratio * side >= min_side and (1.0 - ratio) * side >= min_side:
                    return cell_id, dim, ratio
    raise InvalidInputError("no cell can be split without degenerate children")


def split_once(partition: Partition, mode: str, data=None, rng: np.random.Generator | None = None) -> Partition:
    """Return a new partition with one additional split drawn from ``rng``."""
    if rng is None:
        raise InvalidInputError("split_once requires a seeded random generator")
    out = partition.copy()
    cell_id, dim, ratio = _draw_split(out, mode, data, rng)
    out.apply_split(cell_id, dim, ratio)
    return out


def build_partition(root: Box, p: int, mode: str = "pure", data=None,
                    rng: np.random.Generator | None = None) -> Partition:
    """Grow a partition by ``p`` successive random splits.

    Deterministic given the generator state; identical seeds yield
    bit-identical partitions.
    """
    if p < 0:
        raise InvalidInputError("p must be >= 0")
    if p > 0 and rng is None:
        raise InvalidInputError("build_partition requires a seeded random generator")
    part = init_partition(root)
    for _ in range(p):
        cell_id, dim, ratio = _draw_split(part, mode, data, rng)
        part.apply_split(cell_id, dim, ratio)
    return part


def locate(partition: Partition, x) -> int:
    """Cell index of ``x``, or :data:`OUTSIDE` when ``x`` is not in the root."""
    x = np.asarray(x, dtype=float)
    root = partition.root
    lo, hi = root.lower, root.upper
    for j in range(x.size):
        if x[j] < lo[j] or x[j] > hi[j]:
            return OUTSIDE
    node = 0
    node_dim = partition._node_dim
    node_cut = partition._node_cut
    node_left = partition._node_left
    node_right = partition._node_right
    dim = node_dim[0]
    while dim >= 0:
        node = node_right[node] if x[dim] >= node_cut[node] else node_left[node]
        dim = node_dim[node]
    return partition._node_cell[node]


def locate_many(partition: Partition, X) -> np.ndarray:
    """Vectorised :func:`locate` replaying the split history."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("locate_many expects an (n, d) array")
    root = partition.root
    inside = np.all(X >= root.lower, axis=1) & np.all(X <= root.upper, axis=1)
    assign = np.where(inside, 0, OUTSIDE)
    next_id = 1
    for rec in partition.splits:
        in_cell = assign == rec.cell_id
        goes_right = in_cell & (X[:, rec.dim] >= rec.cut)
        assign[goes_right] = next_id
        next_id += 1
    return assign
