"""Synthetic dataset generators, scaling into the root box, and CSV I/O."""

from __future__ import annotations

import csv
import importlib.resources
from dataclasses import dataclass

import numpy as np

from .partition import InvalidInputError

SYNTHETIC_KINDS = ("circles", "moons", "varied", "aniso")

# Fixed blob layout for the "varied" / "aniso" generators.  The shapes are
# conventional toy-suite choices; noise magnitudes are flags, not constants.
_BLOB_CENTERS = np.array([[-6.0, -7.0], [0.0, 0.0], [7.0, 6.0]])
_VARIED_STDS = (1.0, 2.5, 0.5)
_ANISO_SHEAR = np.array([[0.6, -0.6], [-0.4, 0.8]])


@dataclass(frozen=True)
class AffineTransform:
    """Per-axis map ``x -> scale * x + offset`` with exact inverse."""

    scale: np.ndarray
    offset: np.ndarray
    degenerate_dims: tuple = ()

    def __call__(self, X):
        return np.asarray(X, dtype=float) * self.scale + self.offset

    def inverse(self, Y):
        return (np.asarray(Y, dtype=float) - self.offset) / self.scale

    @property
    def jacobian(self) -> float:
        """Volume scaling factor |det| of the linear part."""
        return float(np.prod(np.abs(self.scale)))

    def to_dict(self) -> dict:
        return {
            "scale": self.scale.tolist(),
            "offset": self.offset.tolist(),
            "degenerate_dims": list(self.degenerate_dims),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineTransform":
        return cls(np.asarray(d["scale"], dtype=float),
                   np.asarray(d["offset"], dtype=float),
                   tuple(d.get("degenerate_dims", ())))


@dataclass
class Dataset:
    points: np.ndarray
    truth: np.ndarray | None = None
    name: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=int)
            if len(self.truth) != len(self.points):
                raise InvalidInputError("truth labels must match the number of points")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return self.points.shape[1]


def _two_halves(n):
    n_out = n // 2
    return n_out, n - n_out


def gen_synthetic(kind: str, n: int = 1500, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Generate one of the four 2-d toy datasets with ground-truth labels.

    ``circles``: two concentric circles with radius ratio 0.5.
    ``moons``: two interleaving half circles.
    ``varied``: three isotropic Gaussian blobs with stds (1.0, 2.5, 0.5).
    ``aniso``: three Gaussian blobs mapped through a fixed shear.

    Pure function of ``(kind, n, noise, seed)``.
    """
    if kind not in SYNTHETIC_KINDS:
        raise InvalidInputError(f"unknown kind {kind!r}; valid kinds: {', '.join(SYNTHETIC_KINDS)}")
    if n < 4:
        raise InvalidInputError("n must be >= 4")
    rng = np.random.default_rng(seed)

    if kind == "circles":
        n_out, n_in = _two_halves(n)
        t_out = rng.uniform(0.0, 2.0 * np.pi, n_out)
        t_in = rng.uniform(0.0, 2.0 * np.pi, n_in)
        pts = np.concatenate([
            np.column_stack([np.cos(t_out), np.sin(t_out)]),
            0.5 * np.column_stack([np.cos(t_in), np.sin(t_in)]),
        ])
        labels = np.concatenate([np.zeros(n_out, int), np.ones(n_in, int)])
        pts = pts + rng.normal(scale=noise, size=pts.shape) if noise > 0 else pts
    elif kind == "moons":
        n_a, n_b = _two_halves(n)
        t_a = rng.uniform(0.0, np.pi, n_a)
        t_b = rng.uniform(0.0, np.pi, n_b)
        pts = np.concatenate([
            np.column_stack([np.cos(t_a), np.sin(t_a)]),
            np.column_stack([1.0 - np.cos(t_b), 0.5 - np.sin(t_b)]),
        ])
        labels = np.concatenate([np.zeros(n_a, int), np.ones(n_b, int)])
        pts = pts + rng.normal(scale=noise, size=pts.shape) if noise > 0 else pts
    else:
        sizes = [n // 3] * 3
        for i in range(n - sum(sizes)):
            sizes[i] += 1
        stds = _VARIED_STDS if kind == "varied" else (1.0, 1.0, 1.0)
        blocks = []
        labels = []
        for i, (size, std) in enumerate(zip(sizes, stds)):
            blocks.append(_BLOB_CENTERS[i] + rng.normal(scale=std, size=(size, 2)))
            labels.append(np.full(size, i, int))
        pts = np.concatenate(blocks)
        labels = np.concatenate(labels)
        if kind == "aniso":
            pts = pts @ _ANISO_SHEAR
    return Dataset(pts, labels, name=f"noisy {kind}" if kind in ("circles", "moons") else f"{kind} blob",
                   seed=seed)


def scale_to_box(points, margin: float = 0.05):
    """Min-max map into ``[-1, 1]^d`` shrunk by ``margin`` per side.

    Returns the scaled points and the (invertible) transform.  Dimensions
    with zero range are mapped to 0 and flagged in the transform.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if len(X) < 1:
        raise InvalidInputError("scale_to_box requires at least one point")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    target = 1.0 - margin
    degenerate = tuple(int(i) for i in np.nonzero(span == 0)[0])
    safe_span = np.where(span == 0, 1.0, span)
    scale = 2.0 * target / safe_span
    offset = -target - lo * scale
    # collapse zero-range axes onto 0
    scale = np.where(span == 0, 1.0, scale)
    offset = np.where(span == 0, -lo, offset)
    tf = AffineTransform(scale, offset, degenerate)
    return tf(X), tf


def write_csv(path, dataset: Dataset) -> None:
    """Write ``x1,...,xd[,label]`` rows; UTF-8, no index column."""
    d = dataset.d
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = [f"x{i + 1}" for i in range(d)]
        if dataset.truth is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.points[i]]
            if dataset.truth is not None:
                row.append(str(int(dataset.truth[i])))
            writer.writerow(row)


def read_csv(path, name: str = "") -> Dataset:
    """Read a dataset written by :func:`write_csv`; the label column is optional."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_label = header and header[-1].strip().lower() == "label"
        d = len(header) - (1 if has_label else 0)
        pts, labels = [], []
        for row in reader:
            if not row:
                continue
            pts.append([float(v) for v in row[:d]])
            if has_label:
                labels.append(int(float(row[d])))
    return Dataset(np.asarray(pts), np.asarray(labels, int) if has_label else None,
                   name=name or str(path))


def load_iris() -> Dataset:
    """The bundled iris dataset (150 x 4, three classes)."""
    ref = importlib.resources.files("bsclust") / "datasets" / "iris.csv"
    with importlib.resources.as_file(ref) as path:
        ds = read_csv(path, name="iris")
    return ds
