"""Grid-based geometric oracles for level sets of known densities.

Fields live on a regular lattice of cell-centred nodes over a box:
``resolution`` cells per axis, node ``i`` at ``lower + (i + 1/2) * h``.
Set membership is decided at nodes and measures are node counts times
the cell volume.  Distances are exact Euclidean lattice distances
(scipy's exact distance transform, no chamfer approximation), which is
what keeps these functions usable as oracles for the sample-based
estimators.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .density import ForestParams, fit_forest
from .partition import Box, InvalidInputError


class InvalidStateError(RuntimeError):
    """Raised when a geometric precondition fails (e.g. wrong component count)."""


def _check_resolution(shape):
    if any(s < 2 for s in shape):
        raise InvalidInputError("grid resolution must be >= 2 per axis")


@dataclass
class GridDensity:
    """Non-negative density values sampled at the lattice nodes of ``box``."""

    box: Box
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.box.d:
            raise InvalidInputError("values array rank must equal the box dimension")
        _check_resolution(self.values.shape)
        if np.any(self.values < 0):
            raise InvalidInputError("density values must be non-negative")

    @property
    def resolution(self):
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.upper - self.box.lower) / np.asarray(self.values.shape)

    def node_axes(self):
        return [self.box.lower[i] + (np.arange(s) + 0.5) * self.spacing[i]
                for i, s in enumerate(self.values.shape)]

    def node_coords(self) -> np.ndarray:
        """All node coordinates as an (N, d) array in row-major order."""
        mesh = np.meshgrid(*self.node_axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def from_function(cls, box: Box, resolution, fn) -> "GridDensity":
        res = [int(resolution)] * box.d if np.isscalar(resolution) else [int(r) for r in resolution]
        axes = [box.lower[i] + (np.arange(r) + 0.5) * (box.upper[i] - box.lower[i]) / r
                for i, r in enumerate(res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.asarray(fn(pts), dtype=float).reshape(res)
        return cls(box, vals)

    def max(self) -> float:
        return float(self.values.max())


@dataclass
class GridSet:
    """Boolean field over the same lattice convention as :class:`GridDensity`."""

    box: Box
    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.ndim != self.box.d:
            raise InvalidInputError("mask rank must equal the box dimension")
        _check_resolution(self.mask.shape)

    @property
    def resolution(self):
        return self.mask.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.upper - self.box.lower) / np.asarray(self.mask.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def measure(self) -> float:
        return float(self.mask.sum()) * self.cell_volume

    def is_empty(self) -> bool:
        return not self.mask.any()


@dataclass
class GridLabels:
    """Face-adjacency component labelling of a grid set (0 = background)."""

    box: Box
    labels: np.ndarray
    M: int


def _same_lattice(a, b):
    return (a.mask.shape == b.mask.shape
            and np.allclose(a.box.lower, b.box.lower)
            and np.allclose(a.box.upper, b.box.upper))


def grid_level_set(gd: GridDensity, rho: float) -> GridSet:
    """Nodes where the density is at least ``rho``."""
    if rho < 0:
        raise InvalidInputError("rho must be >= 0")
    return GridSet(gd.box, gd.values >= rho)


def distance_to(set_: GridSet) -> np.ndarray:
    """Exact Euclidean distance from every node to the nearest set node.

    Infinite everywhere when the set is empty.
    """
    if set_.is_empty():
        return np.full(set_.mask.shape, np.inf)
    return ndimage.distance_transform_edt(~set_.mask, sampling=set_.spacing)


def tube(set_: GridSet, delta: float, sign: str) -> GridSet:
    """Dilation (``"plus"``) or erosion (``"minus"``) by radius ``delta``.

    ``plus`` is ``{x : d(x, A) <= delta}``; ``minus`` is defined by
    duality as the complement of the dilated complement, bit-exactly.
    """
    if delta <= 0:
        raise InvalidInputError("delta must be > 0")
    if sign == "plus":
        return GridSet(set_.box, distance_to(set_) <= delta)
    if sign == "minus":
        complement = GridSet(set_.box, ~set_.mask)
        return GridSet(set_.box, ~tube(complement, delta, "plus").mask)
    raise InvalidInputError("sign must be 'plus' or 'minus'")


def psi_star(set_: GridSet, delta: float) -> float:
    """Worst-case distance from a set node to its ``delta``-erosion.

    Returns infinity when the erosion is empty.  Large values flag thin
    bridges and cusps.
    """
    if delta <= 0:
        raise InvalidInputError("delta must be > 0")
    if set_.is_empty():
        return 0.0
    eroded = tube(set_, delta, "minus")
    if eroded.is_empty():
        return np.inf
    dist = distance_to(eroded)
    return float(dist[set_.mask].max())


def grid_components(set_: GridSet) -> GridLabels:
    """Connected components under face adjacency (2d neighbours)."""
    structure = ndimage.generate_binary_structure(set_.mask.ndim, 1)
    labels, m = ndimage.label(set_.mask, structure=structure)
    return GridLabels(set_.box, labels, int(m))


def tau_star(gd: GridDensity, rho_star: float, eps: float) -> float:
    """A third of the gap between the two components at level ``rho_star + eps``."""
    level = grid_level_set(gd, rho_star + eps)
    comp = grid_components(level)
    if comp.M != 2:
        raise InvalidStateError(f"expected 2 components at level {rho_star + eps}, found {comp.M}")
    first = GridSet(gd.box, comp.labels == 1)
    dist = distance_to(first)
    return float(dist[comp.labels == 2].min()) / 3.0


def sym_diff_measure(a: GridSet, b: GridSet) -> float:
    """Lebesgue measure of the symmetric difference of two grid sets."""
    if not _same_lattice(a, b):
        raise InvalidInputError("grid sets live on different lattices")
    return float(np.logical_xor(a.mask, b.mask).sum()) * a.cell_volume


def rasterize_points(box: Box, resolution, points) -> GridSet:
    """Mark the lattice node nearest to each point (points outside are ignored)."""
    res = np.asarray([resolution] * box.d if np.isscalar(resolution) else resolution, dtype=int)
    mask = np.zeros(tuple(res), dtype=bool)
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if len(X):
        h = (box.upper - box.lower) / res
        idx = np.floor((X - box.lower) / h).astype(int)
        ok = np.all((idx >= 0) & (idx < res), axis=1)
        mask[tuple(idx[ok].T)] = True
    return GridSet(box, mask)


@dataclass
class UncertaintyReport:
    """Empirical check of the erosion/dilation sandwich around a level set."""

    rho: float
    eps: float
    sigma: float
    inner_violation: float   # fraction of nodes in the eroded set missing from the estimate
    outer_violation: float   # fraction of estimate nodes outside the dilated set
    total_violation: float   # union of both, over all grid nodes
    n_foreground: int

    def as_dict(self) -> dict:
        return {
            "rho": self.rho, "eps": self.eps, "sigma": self.sigma,
            "inner_violation": self.inner_violation,
            "outer_violation": self.outer_violation,
            "total_violation": self.total_violation,
            "n_foreground": self.n_foreground,
        }


def check_uncertainty_control(gd: GridDensity, data, forest_params: ForestParams,
                              rho: float, eps: float, sigma: float,
                              forest=None) -> UncertaintyReport:
    """Test the sandwich  eroded(rho+eps)  ⊆  estimate  ⊆  dilated(rho-eps).

    The sample level set is the set of data points whose (data-space,
    Jacobian-corrected) forest density is at least ``rho``, dilated by
    ``sigma``; the true level sets are eroded/dilated by ``2 * sigma`` on
    the grid.  Reported are the node fractions violating either
    inclusion.  ``forest`` may be passed to reuse one fit across levels.
    """
    if forest is None:
        forest = fit_forest(data, forest_params)
    fvals = forest.density(data)
    fg = np.atleast_2d(np.asarray(data, dtype=float))[fvals >= rho]

    inner = tube(grid_level_set(gd, rho + eps), 2.0 * sigma, "minus")
    lo = max(rho - eps, 0.0)
    outer = tube(grid_level_set(gd, lo), 2.0 * sigma, "plus") if lo > 0 \
        else GridSet(gd.box, np.ones_like(gd.values, dtype=bool))

    seeds = rasterize_points(gd.box, gd.resolution, fg)
    estimate = distance_to(seeds) <= sigma if not seeds.is_empty() \
        else np.zeros_like(gd.values, dtype=bool)

    n_nodes = estimate.size
    inner_bad = np.count_nonzero(inner.mask & ~estimate)
    outer_bad = np.count_nonzero(estimate & ~outer.mask)
    return UncertaintyReport(
        rho=rho, eps=eps, sigma=sigma,
        inner_violation=inner_bad / n_nodes,
        outer_violation=outer_bad / n_nodes,
        total_violation=np.count_nonzero((inner.mask & ~estimate) | (estimate & ~outer.mask)) / n_nodes,
        n_foreground=int(len(fg)),
    )


def gaussian_mixture(means, stds, weights=None):
    """Isotropic Gaussian mixture: returns ``(density_fn, sampler)``.

    ``density_fn`` maps an (n, d) array to density values; ``sampler``
    takes ``(n, rng)`` and returns n i.i.d. draws.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    stds = np.asarray(stds, dtype=float)
    n_comp, d = means.shape
    if stds.shape != (n_comp,) or np.any(stds <= 0):
        raise InvalidInputError("stds must be positive, one per component")
    w = np.full(n_comp, 1.0 / n_comp) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    def density(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts))
        for mu, s, wi in zip(means, stds, w):
            sq = np.sum((pts - mu) ** 2, axis=1)
            out += wi * np.exp(-sq / (2.0 * s * s)) / ((2.0 * np.pi * s * s) ** (d / 2.0))
        return out

    def sample(n, rng):
        comp = rng.choice(n_comp, size=n, p=w)
        return means[comp] + rng.normal(size=(n, d)) * stds[comp, None]

    return density, sample


# ---------------------------------------------------------------------------
# serialization: flat binary (header + row-major payload) and CSV for plotting

_MAGIC = b"BSCG"


def _write_header(fh, kind: int, box: Box, shape):
    fh.write(_MAGIC)
    fh.write(struct.pack("<BI", kind, box.d))
    fh.write(struct.pack(f"<{box.d}I", *shape))
    fh.write(struct.pack(f"<{box.d}d", *box.lower))
    fh.write(struct.pack(f"<{box.d}d", *box.upper))


def _read_header(fh):
    if fh.read(4) != _MAGIC:
        raise InvalidInputError("not a bsclust grid file")
    kind, d = struct.unpack("<BI", fh.read(5))
    shape = struct.unpack(f"<{d}I", fh.read(4 * d))
    lower = struct.unpack(f"<{d}d", fh.read(8 * d))
    upper = struct.unpack(f"<{d}d", fh.read(8 * d))
    return kind, Box(np.asarray(lower), np.asarray(upper)), shape


def save_grid(path, obj) -> None:
    """Write a :class:`GridDensity` (float64) or :class:`GridSet` (uint8)."""
    with open(path, "wb") as fh:
        if isinstance(obj, GridDensity):
            _write_header(fh, 1, obj.box, obj.values.shape)
            fh.write(np.ascontiguousarray(obj.values, dtype="<f8").tobytes())
        elif isinstance(obj, GridSet):
            _write_header(fh, 0, obj.box, obj.mask.shape)
            fh.write(np.ascontiguousarray(obj.mask, dtype=np.uint8).tobytes())
        else:
            raise InvalidInputError("save_grid expects a GridDensity or GridSet")


def load_grid(path):
    with open(path, "rb") as fh:
        kind, box, shape = _read_header(fh)
        raw = fh.read()
    if kind == 1:
        values = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        return GridDensity(box, values)
    mask = np.frombuffer(raw, dtype=np.uint8).reshape(shape).astype(bool)
    return GridSet(box, mask)


def grid_to_csv(path, obj) -> None:
    """Dump node coordinates and values as ``x1,...,xd,value`` rows."""
    values = obj.values if isinstance(obj, GridDensity) else obj.mask.astype(float)
    gd = obj if isinstance(obj, GridDensity) else GridDensity(obj.box, np.zeros(obj.mask.shape))
    coords = gd.node_coords()
    d = obj.box.d
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(d)) + ",value\n")
        for point, v in zip(coords, values.ravel()):
            fh.write(",".join(repr(float(c)) for c in point) + f",{float(v)!r}\n")
