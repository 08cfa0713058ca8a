"""Kernel families, Gram-matrix assembly and energy pairings."""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform
from scipy.special import beta as beta_fn

from .errors import EnergyPrincipleError, GeometryError, KernelDomainError, MatrixTooLargeError, SpaceMismatchError
from .geometry import DiscreteMeasure, DiscreteSpace, SignedMeasure

log = logging.getLogger(__name__)

MAX_POINTS = 20_000
FAMILIES = ("riesz", "newtonian", "green_ball")
DIAG_RULES = ("ball", "nearest", "fixed")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    ``riesz`` is ``|x-y|**(alpha-n)``; ``newtonian`` is riesz with alpha=2
    (needs n >= 3); ``green_ball`` is the Green function of the Laplacian
    on the ball ``|x - center| < radius`` (needs n >= 3).
    """

    family: str
    alpha: float | None = None
    center: tuple | None = None
    radius: float | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"kernel.family: unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "riesz":
            if self.alpha is None or not self.alpha > 0:
                raise ValueError("kernel.alpha: riesz kernel needs alpha > 0")
        elif self.family == "newtonian":
            if self.alpha not in (None, 2, 2.0):
                raise ValueError("kernel.alpha: newtonian kernel has alpha = 2")
            object.__setattr__(self, "alpha", 2.0)
        else:
            if self.radius is None or not self.radius > 0:
                raise ValueError("kernel.radius: green_ball needs radius > 0")
            object.__setattr__(self, "alpha", 2.0)
            if self.center is not None:
                object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.dim is not None:
            self.check_dim(self.dim)

    def check_dim(self, n: int):
        if self.family == "riesz":
            if not 0 < self.alpha < n:
                raise ValueError(f"kernel.alpha: riesz kernel needs 0 < alpha < n = {n}, got {self.alpha}")
            if self.alpha > 2:
                log.warning("riesz alpha = %g > 2: the domination principle is not guaranteed", self.alpha)
        elif n < 3:
            raise ValueError(f"kernel.family: {self.family} kernel needs n >= 3, got n = {n}")
        if self.family == "green_ball" and self.center is not None and len(self.center) != n:
            raise ValueError("kernel.center: dimension does not match the space")

    def exponent(self, n: int) -> float:
        """Singularity order s, the kernel behaving like ``|x-y|**(-s)``."""
        return n - self.alpha

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "riesz":
            d["alpha"] = float(self.alpha)
        if self.family == "green_ball":
            d["center"] = list(self.center) if self.center is not None else None
            d["radius"] = float(self.radius)
        return d


def _green_center(spec: KernelSpec, n: int) -> np.ndarray:
    return np.zeros(n) if spec.center is None else np.asarray(spec.center, dtype=float)


def _green_regular(spec: KernelSpec, x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    # Kelvin-image term written in a form symmetric in (x, y) and finite at the centre.
    r = spec.radius
    c = _green_center(spec, n)
    xs, ys = x - c, y - c
    s2 = np.sum(xs * xs, axis=-1) * np.sum(ys * ys, axis=-1) - 2 * r * r * np.sum(xs * ys, axis=-1) + r**4
    return (r / np.sqrt(np.maximum(s2, 0.0))) ** (n - 2)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Kernel value at a pair of points; ``inf`` on the diagonal."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.size
    if y.size != n:
        raise GeometryError("points have different dimensions")
    spec.check_dim(n)
    if spec.family == "green_ball":
        c = _green_center(spec, n)
        for p in (x, y):
            if np.linalg.norm(p - c) >= spec.radius:
                raise KernelDomainError(f"point {p.tolist()} is not inside the ball of radius {spec.radius}")
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        return math.inf
    val = d ** (-spec.exponent(n))
    if spec.family == "green_ball":
        val -= float(_green_regular(spec, x, y, n))
    return val


def ball_self_energy_constant(s: float, m: int) -> float:
    """Mean of ``|X-Y|**(-s)`` for X, Y independent uniform on the unit m-ball.

    A uniform mass ``w`` on an m-ball of radius ``rho`` has self-energy
    ``constant * rho**(-s) * w**2``.  Finite only for ``s < m``.
    """
    if not s < m:
        raise ValueError(f"self-energy of an {m}-dimensional cell is infinite for singularity order {s}")
    p = -s
    a = (m + 1) / 2
    return m / (m + p) * 2.0 ** (m + p) * beta_fn((m + p + 1) / 2, a) / beta_fn(a, 0.5)


def _unit_ball_volume(m: int) -> float:
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)


@dataclass(frozen=True, eq=False)
class EnergyForm:
    """Symmetric positive definite Gram matrix of a kernel on a space.

    ``gram[i, j]`` is the mutual energy of the unit-density cells ``i`` and
    ``j``; the potential of a measure with coefficient vector ``a`` sampled
    on cell ``i`` is ``(gram @ a)[i]`` (cell-weighted).
    """

    gram: np.ndarray
    space: DiscreteSpace | None = None
    spec: KernelSpec | None = None
    diag_rule: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.array(self.gram, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
            raise GeometryError("gram must be a non-empty square matrix")
        if self.space is not None and self.space.size != g.shape[0]:
            raise SpaceMismatchError("gram size does not match the space")
        if not np.all(np.isfinite(g)):
            raise GeometryError("gram entries must be finite")
        if not np.array_equal(g, g.T):
            raise GeometryError("gram must be exactly symmetric")
        if np.any(g < 0):
            raise GeometryError("gram entries must be nonnegative")
        _check_pd(g)
        g.flags.writeable = False
        object.__setattr__(self, "gram", g)
        if self.space is None:
            sid = "gram-" + hashlib.sha256(g.tobytes()).hexdigest()[:12]
        else:
            sid = self.space.id
        object.__setattr__(self, "_space_id", sid)

    @classmethod
    def from_gram(cls, gram) -> EnergyForm:
        """Energy form over an abstract space with unit cell weights."""
        g = np.asarray(gram, dtype=float)
        return cls(g, diag_rule={"rule": "explicit"})

    @property
    def space_id(self) -> str:
        return self._space_id

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    @property
    def cell_weights(self) -> np.ndarray:
        if self.space is None:
            return np.ones(self.size)
        return self.space.cell_weights

    def mass(self, measure) -> float:
        return float(np.dot(weights_of(self, measure), self.cell_weights))

    def measure(self, weights) -> DiscreteMeasure:
        m = DiscreteMeasure(weights, self.space_id)
        if m.size != self.size:
            raise SpaceMismatchError(f"measure has {m.size} weights, form has {self.size}")
        return m

    def mask(self, indices):
        from .geometry import RegionMask

        m = RegionMask(self.space_id, indices)
        if len(m) and m.indices[-1] >= self.size:
            raise GeometryError(f"mask index {m.indices[-1]} out of range for N={self.size}")
        return m


def _check_pd(g: np.ndarray):
    c, info = lapack.dpotrf(g, lower=1, clean=1)
    if info > 0:
        k = info - 1
        pivot = g[k, k] - float(np.dot(c[k, :k], c[k, :k]))
        raise EnergyPrincipleError(k, pivot)
    if info < 0:
        raise GeometryError("invalid argument to Cholesky factorisation")


def _diagonal(spec: KernelSpec, space: DiscreteSpace, rule: dict) -> np.ndarray:
    n, w = space.dim, space.cell_weights
    kind = rule.get("rule", "ball")
    s = spec.exponent(n)
    if kind == "fixed":
        return np.full(space.size, float(rule["value"]))
    if kind == "ball":
        m = space.cell_dim
        const = ball_self_energy_constant(s, m)
        rho = (w / _unit_ball_volume(m)) ** (1.0 / m)
        d = const * rho ** (-s) * w * w
    elif kind == "nearest":
        if space.size < 2:
            raise GeometryError("nearest-neighbour diagonal rule needs at least two points")
        factor = float(rule.get("factor", 0.5))
        dist, _ = cKDTree(space.points).query(space.points, k=2)
        d = (factor * dist[:, 1]) ** (-s) * w * w
    else:
        raise ValueError(f"kernel.diag_rule: unknown rule {kind!r}; expected one of {DIAG_RULES}")
    if spec.family == "green_ball":
        d = d - _green_regular(spec, space.points, space.points, n) * w * w
    return d


def assemble(spec: KernelSpec, space: DiscreteSpace, diag_rule: dict | None = None) -> EnergyForm:
    """Dense Gram matrix with off-diagonal ``k(x_i, x_j) w_i w_j``.

    Raises :class:`EnergyPrincipleError` if the result is not strictly
    positive definite.
    """
    rule = dict(diag_rule or {"rule": "ball"})
    n, N = space.dim, space.size
    if N > MAX_POINTS:
        raise MatrixTooLargeError(f"N = {N} exceeds the dense assembly limit {MAX_POINTS}")
    spec.check_dim(n)
    if spec.family == "green_ball":
        c = _green_center(spec, n)
        r = np.linalg.norm(space.points - c, axis=1)
        if np.any(r >= spec.radius):
            raise KernelDomainError(f"{int(np.sum(r >= spec.radius))} points are not strictly inside the ball")
    s = spec.exponent(n)
    w = space.cell_weights
    if N == 1:
        g = np.zeros((1, 1))
    else:
        dist = pdist(space.points)
        g = squareform(dist ** (-s))
        if spec.family == "green_ball":
            P = space.points
            reg = _green_regular(spec, P[:, None, :], P[None, :, :], n)
            g = g - reg
        g = g * np.outer(w, w)
        # mirror the upper triangle so the matrix is symmetric to the bit
        g = np.triu(g, 1)
        g = g + g.T
    np.fill_diagonal(g, _diagonal(spec, space, rule))
    record = dict(rule)
    record.setdefault("rule", "ball")
    if record["rule"] == "ball":
        record["constant"] = ball_self_energy_constant(s, space.cell_dim)
        record["cell_dim"] = space.cell_dim
    return EnergyForm(g, space, spec, record)


def weights_of(form: EnergyForm, measure) -> np.ndarray:
    """Coefficient vector of a measure, checked against the form's space."""
    if isinstance(measure, (DiscreteMeasure, SignedMeasure)):
        sid = measure.space_id
        if sid is not None and sid != form.space_id:
            raise SpaceMismatchError(f"measure lives on {sid}, form on {form.space_id}")
        w = measure.weights
    elif isinstance(measure, tuple) and len(measure) == 2:
        w = weights_of(form, measure[0]) - weights_of(form, measure[1])
    else:
        w = np.asarray(measure, dtype=float).reshape(-1)
    if w.size != form.size:
        raise SpaceMismatchError(f"measure has {w.size} weights, form has {form.size}")
    return w


def potential(form: EnergyForm, measure) -> np.ndarray:
    return form.gram @ weights_of(form, measure)


def inner_product(form: EnergyForm, mu, nu) -> float:
    """Mutual energy; bilinear, so signed measures expand across signs."""
    a = weights_of(form, mu)
    b = weights_of(form, nu)
    return float(a @ (form.gram @ b))


def energy_norm(form: EnergyForm, mu) -> float:
    return math.sqrt(max(inner_product(form, mu, mu), 0.0))
