"""Discrete spaces, region masks and measures.

A :class:`DiscreteSpace` is a finite point set with positive cell weights.
Measures are stored as coefficient vectors over the cells: coefficient
``a[i]`` stands for a uniform density ``a[i]`` over cell ``i``, so the mass
carried by the cell is ``a[i] * cell_weights[i]``.  With unit cell weights
the two notions coincide.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, GeometryError, SpaceMismatchError, UnsupportedDimensionError

FORMAT_VERSION = 1
DISTINCT_RTOL = 1e-9


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Finite stand-in for the underlying locally compact space.

    ``cell_dim`` is the intrinsic dimension of the cells the weights measure
    (``dim`` for volume grids, ``dim - 1`` for sphere samplings); the kernel
    diagonal rule needs it to turn a weight into a cell radius.
    """

    points: np.ndarray
    cell_weights: np.ndarray
    cell_dim: int | None = None
    id: str = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise GeometryError("points must be a non-empty (N, n) array")
        w = np.array(self.cell_weights, dtype=float).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise GeometryError(f"{pts.shape[0]} points but {w.shape[0]} cell weights")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(w))):
            raise GeometryError("points and cell weights must be finite")
        if np.any(w <= 0):
            raise GeometryError("cell weights must be strictly positive")
        cell_dim = pts.shape[1] if self.cell_dim is None else int(self.cell_dim)
        if not 1 <= cell_dim <= pts.shape[1]:
            raise GeometryError(f"cell_dim must lie in [1, {pts.shape[1]}]")
        _check_distinct(pts)
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "cell_weights", _frozen(w))
        object.__setattr__(self, "cell_dim", cell_dim)
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.cell_weights).tobytes())
        h.update(str(cell_dim).encode())
        object.__setattr__(self, "id", h.hexdigest()[:16])

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size

    def full_mask(self) -> RegionMask:
        return RegionMask(self.id, range(self.size))

    def empty_mask(self) -> RegionMask:
        return RegionMask(self.id, ())

    def mask(self, indices: Iterable[int]) -> RegionMask:
        m = RegionMask(self.id, indices)
        if len(m) and m.indices[-1] >= self.size:
            raise GeometryError(f"mask index {m.indices[-1]} out of range for N={self.size}")
        return m

    def measure(self, weights) -> DiscreteMeasure:
        m = DiscreteMeasure(weights, self.id)
        if m.size != self.size:
            raise SpaceMismatchError(f"measure has {m.size} weights, space has {self.size} points")
        return m

    def total_mass(self, measure) -> float:
        w = measure.weights if isinstance(measure, DiscreteMeasure) else np.asarray(measure, dtype=float)
        return float(np.dot(w, self.cell_weights))

    def point_mass(self, index: int, mass: float = 1.0) -> DiscreteMeasure:
        """Measure carrying ``mass`` on cell ``index`` alone."""
        a = np.zeros(self.size)
        a[index] = mass / self.cell_weights[index]
        return self.measure(a)


def _check_distinct(pts):
    n = pts.shape[0]
    if n < 2:
        return
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    dist, _ = cKDTree(pts).query(pts, k=2)
    dmin = float(dist[:, 1].min())
    if dmin <= DISTINCT_RTOL * diam or dmin == 0.0:
        raise DegenerateGeometryError(
            f"points not distinct: minimum pairwise distance {dmin:.3g} vs diameter {diam:.3g}"
        )


@dataclass(frozen=True, eq=False)
class RegionMask:
    """Sorted, duplicate-free index subset of a space."""

    space_id: str | None
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(list(self.indices) if not isinstance(self.indices, np.ndarray) else self.indices,
                                   dtype=np.int64))
        if idx.size and idx[0] < 0:
            raise GeometryError("mask indices must be non-negative")
        object.__setattr__(self, "indices", _frozen(idx, dtype=np.int64))

    def __len__(self):
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, i):
        return bool(np.any(self.indices == i))

    def __eq__(self, other):
        if not isinstance(other, RegionMask):
            return NotImplemented
        return self.space_id == other.space_id and np.array_equal(self.indices, other.indices)

    def __hash__(self):
        return hash((self.space_id, self.indices.tobytes()))

    def issubset(self, other: RegionMask) -> bool:
        return bool(np.all(np.isin(self.indices, other.indices)))

    def union(self, other: RegionMask) -> RegionMask:
        return RegionMask(self.space_id, np.union1d(self.indices, other.indices))

    def intersection(self, other: RegionMask) -> RegionMask:
        return RegionMask(self.space_id, np.intersect1d(self.indices, other.indices))

    def complement(self, size: int) -> RegionMask:
        return RegionMask(self.space_id, np.setdiff1d(np.arange(size), self.indices))

    def indicator(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=bool)
        out[self.indices] = True
        return out


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative coefficient vector over the cells of a space."""

    weights: np.ndarray
    space_id: str | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise GeometryError("measure weights must be finite")
        if np.any(w < 0):
            raise GeometryError("measure weights must be nonnegative")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def support(self) -> RegionMask:
        return RegionMask(self.space_id, np.flatnonzero(self.weights > 0))

    def scaled(self, factor: float) -> DiscreteMeasure:
        return DiscreteMeasure(self.weights * factor, self.space_id)

    def __add__(self, other):
        if isinstance(other, DiscreteMeasure):
            _same_space(self.space_id, other.space_id)
            return DiscreteMeasure(self.weights + other.weights, self.space_id or other.space_id)
        return NotImplemented


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Hahn-Jordan pair: ``plus`` and ``minus`` with disjoint supports."""

    plus: DiscreteMeasure
    minus: DiscreteMeasure

    def __post_init__(self):
        if self.plus.size != self.minus.size:
            raise GeometryError("plus and minus parts differ in length")
        _same_space(self.plus.space_id, self.minus.space_id)
        if np.any((self.plus.weights > 0) & (self.minus.weights > 0)):
            raise GeometryError("plus and minus parts must have disjoint supports")

    @property
    def space_id(self):
        return self.plus.space_id or self.minus.space_id

    @property
    def size(self) -> int:
        return self.plus.size

    @property
    def weights(self) -> np.ndarray:
        return self.plus.weights - self.minus.weights

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> SignedMeasure:
        return cls(mu, DiscreteMeasure(np.zeros(mu.size), mu.space_id))


def _same_space(a, b):
    if a is not None and b is not None and a != b:
        raise SpaceMismatchError(f"space mismatch: {a} vs {b}")


def hahn_jordan(raw_weights, space_id: str | None = None) -> SignedMeasure:
    """Split a real vector into disjointly supported positive and negative parts."""
    x = np.asarray(raw_weights, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise GeometryError("hahn_jordan requires finite entries")
    plus = np.where(x > 0, x, 0.0)
    minus = np.where(x < 0, -x, 0.0)
    return SignedMeasure(DiscreteMeasure(plus, space_id), DiscreteMeasure(minus, space_id))


def build_grid(lower: Sequence[float], upper: Sequence[float], resolution) -> DiscreteSpace:
    """Cell-centred uniform grid on the box ``[lower, upper]``.

    ``resolution`` is an int (same count on every axis) or one count per axis.
    Each cell weight is the cell volume.
    """
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if lo.shape != hi.shape or lo.ndim != 1:
        raise GeometryError("box corners must be vectors of equal length")
    res = np.broadcast_to(np.asarray(resolution, dtype=np.int64), lo.shape)
    if np.any(res < 1):
        raise GeometryError("resolution must be >= 1 on every axis")
    side = hi - lo
    if np.any(~np.isfinite(side)) or np.any(side <= 0):
        raise DegenerateGeometryError(f"box has zero or negative extent along axes {np.flatnonzero(side <= 0).tolist()}")
    h = side / res
    axes = [lo[k] + h[k] * (np.arange(res[k]) + 0.5) for k in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    vol = float(np.prod(h))
    return DiscreteSpace(pts, np.full(pts.shape[0], vol))


def build_sphere(center: Sequence[float], radius: float, count: int) -> DiscreteSpace:
    """Fibonacci-lattice sampling of a 2-sphere in R^3, equal area weights."""
    c = np.asarray(center, dtype=float).reshape(-1)
    if c.size != 3:
        raise UnsupportedDimensionError(f"sphere sampling needs n = 3, got n = {c.size}")
    if not radius > 0:
        raise DegenerateGeometryError("sphere radius must be positive")
    if count < 4:
        raise GeometryError("sphere sampling needs count >= 4")
    k = np.arange(count, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / count
    rho = np.sqrt(1.0 - z * z)
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    unit = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    unit /= np.linalg.norm(unit, axis=1, keepdims=True)
    pts = c + radius * unit
    return DiscreteSpace(pts, np.full(count, 4.0 * math.pi * radius**2 / count), cell_dim=2)


def mask_from_predicate(space: DiscreteSpace, predicate: Callable[[np.ndarray], bool]) -> RegionMask:
    idx = [i for i, p in enumerate(space.points) if predicate(p)]
    return RegionMask(space.id, idx)


def ball_mask(space: DiscreteSpace, center, radius: float) -> RegionMask:
    d = np.linalg.norm(space.points - np.asarray(center, dtype=float), axis=1)
    return RegionMask(space.id, np.flatnonzero(d <= radius))


def box_mask(space: DiscreteSpace, lower, upper) -> RegionMask:
    p = space.points
    inside = np.all((p >= np.asarray(lower, dtype=float)) & (p <= np.asarray(upper, dtype=float)), axis=1)
    return RegionMask(space.id, np.flatnonzero(inside))


# -- JSON documents -----------------------------------------------------------

def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x!r}")
    s = "%.17g" % x
    if not any(ch in s for ch in ".eEn"):
        s += ".0"
    return s


def dumps(obj, indent: int | None = 1) -> str:
    """JSON text with every float written to 17 significant digits."""

    def enc(o, level):
        pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
        end = "" if indent is None else "\n" + " " * (indent * level)
        sep = "," if indent is None else ","
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, (float, np.floating)):
            return format_float(float(o))
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, np.ndarray):
            return enc(o.tolist(), level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(str(k)) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{" + sep.join(items) + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in o):
                return "[" + ", ".join(enc(v, level) for v in o) + "]"
            return "[" + sep.join(pad + enc(v, level + 1) for v in o) + end + "]"
        raise TypeError(f"cannot serialise {type(o).__name__}")

    return enc(obj, 0)


def space_to_dict(space: DiscreteSpace) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "dim": space.dim,
        "points": space.points.tolist(),
        "cell_weights": space.cell_weights.tolist(),
    }
    if space.cell_dim != space.dim:
        doc["cell_dim"] = space.cell_dim
    return doc


def space_from_dict(doc: dict) -> DiscreteSpace:
    if doc.get("version") != FORMAT_VERSION:
        raise GeometryError(f"unsupported space document version {doc.get('version')!r}")
    pts = np.asarray(doc["points"], dtype=float)
    if pts.ndim != 2 or pts.shape[1] != doc["dim"]:
        raise GeometryError("points do not match the declared dimension")
    return DiscreteSpace(pts, doc["cell_weights"], doc.get("cell_dim"))


def measure_to_dict(measure: DiscreteMeasure) -> dict:
    return {"space": measure.space_id, "weights": measure.weights.tolist()}


def measure_from_dict(doc: dict, space: DiscreteSpace | None = None) -> DiscreteMeasure:
    if space is not None:
        _same_space(doc.get("space"), space.id)
        return space.measure(doc["weights"])
    return DiscreteMeasure(doc["weights"], doc.get("space"))
