"""Independent reference computations for the sweep solver.

``brute_sweep`` enumerates every candidate support and solves each
equality-constrained system with LU, so it shares no code path with the
active-set solver.  ``newtonian_sphere_mass`` sweeps an exterior point
mass onto a sampled sphere, where the classical answer is ``r / |y|``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import DiscreteMeasure, DiscreteSpace, build_sphere
from .kernel import EnergyForm, KernelSpec, assemble, weights_of
from .sweeping import SolveOptions, _mask_indices, sweep

EXACT_MAX_MASK = 24
EXACT_MAX_POINTS = 64
ITERATIVE_TOL = 1e-13
_BATCH = 1 << 14


@dataclass(frozen=True)
class OracleReport:
    oracle_value: object
    main_value: object
    discrepancy: float
    flagged: bool = False
    notes: str = ""

    def to_dict(self) -> dict:
        def plain(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "oracle_value": plain(self.oracle_value),
            "main_value": plain(self.main_value),
            "discrepancy": self.discrepancy,
            "flagged": self.flagged,
            "notes": self.notes,
        }


def _enumerate(H: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Best nonnegative candidate over all supports of ``min x.H.x/2 - b.x``.

    For a candidate solving ``H_SS x = b_S`` the objective is ``-x.b_S / 2``,
    so the winner maximises ``x.b_S``; ties go to the lexicographically
    smallest support.
    """
    m = b.size
    best_val, best_key, best_x = 0.0, (), np.zeros(m)
    for k in range(1, m + 1):
        combos = itertools.combinations(range(m), k)
        while True:
            chunk = np.array(list(itertools.islice(combos, _BATCH)), dtype=np.int64)
            if chunk.size == 0:
                break
            Hs = H[chunk[:, :, None], chunk[:, None, :]]
            bs = b[chunk]
            xs = np.linalg.solve(Hs, bs[..., None])[..., 0]
            floor = 1e-14 * np.maximum(np.max(np.abs(xs), axis=1), 1e-300)
            ok = np.all(xs > -floor[:, None], axis=1)
            if not ok.any():
                continue
            vals = np.where(ok, np.einsum("ij,ij->i", xs, bs), -np.inf)
            i = int(np.argmax(vals))
            key = tuple(chunk[i].tolist())
            if vals[i] > best_val or (vals[i] == best_val and key < best_key):
                best_val, best_key = float(vals[i]), key
                best_x = np.zeros(m)
                best_x[chunk[i]] = np.maximum(xs[i], 0.0)
    return best_x


def _fista(H: np.ndarray, b: np.ndarray, tol: float, max_iter: int = 500_000) -> np.ndarray:
    """Accelerated projected gradient with a fixed 1/L step."""
    L = float(np.linalg.eigvalsh(H)[-1])
    x = np.zeros_like(b)
    y, t = x.copy(), 1.0
    scale = max(float(np.max(np.abs(b))), 1e-300)
    for _ in range(max_iter):
        x_new = np.maximum(y - (H @ y - b) / L, 0.0)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
        g = H @ x - b
        res = max(float(np.max(np.abs(g[x > 0]), initial=0.0)), max(0.0, -float(np.min(g))))
        if res <= tol * scale:
            break
    return x


def brute_sweep(form: EnergyForm, mu, A) -> DiscreteMeasure:
    """Sweep by exhaustive support enumeration (slow, obviously correct).

    Falls back, with a warning, to a tight accelerated projected gradient
    run when the mask has more than 24 points or the space more than 64.
    """
    a = weights_of(form, mu)
    idx = _mask_indices(form, A)
    out = np.zeros(form.size)
    if idx.size:
        K = form.gram
        H = K[np.ix_(idx, idx)]
        b = (K @ a)[idx]
        if idx.size <= EXACT_MAX_MASK and form.size <= EXACT_MAX_POINTS:
            out[idx] = _enumerate(H, b)
        else:
            warnings.warn(
                f"brute_sweep: |A| = {idx.size}, N = {form.size} beyond the exact path; using iterative fallback",
                RuntimeWarning, stacklevel=2,
            )
            out[idx] = _fista(H, b, ITERATIVE_TOL)
    return DiscreteMeasure(out, form.space_id)


def compare(main, oracle, main_tolerance: float = 1e-10) -> OracleReport:
    """Relative max-norm gap ``|main - oracle|_inf / max(1, |oracle|_inf)``.

    Flagged when it exceeds ten times the main solver tolerance.
    """
    mv = main.weights if isinstance(main, DiscreteMeasure) else np.asarray(main, dtype=float)
    ov = oracle.weights if isinstance(oracle, DiscreteMeasure) else np.asarray(oracle, dtype=float)
    if mv.shape != ov.shape:
        raise ValueError(f"shape mismatch: {mv.shape} vs {ov.shape}")
    gap = float(np.max(np.abs(mv - ov), initial=0.0)) / max(1.0, float(np.max(np.abs(ov), initial=0.0)))
    return OracleReport(ov, mv, gap, gap > 10 * main_tolerance)


def sphere_source_space(radius: float, source_distance: float, count: int) -> DiscreteSpace:
    """Sphere sampling about the origin plus one exterior source point on the x axis.

    The source cell gets a small weight so the assembled gram stays
    positive definite however close it sits to the sphere; its potential on
    the sphere does not depend on that weight.
    """
    sph = build_sphere([0.0, 0.0, 0.0], radius, count)
    pts = np.vstack([sph.points, [[source_distance, 0.0, 0.0]]])
    w = np.append(sph.cell_weights, sph.cell_weights[0] * 1e-3)
    return DiscreteSpace(pts, w, cell_dim=2)


def newtonian_sphere_mass(radius: float, source_distance: float, count: int,
                          opts: SolveOptions | None = None) -> OracleReport:
    """Total mass of a unit exterior point mass swept onto a sampled sphere."""
    if not source_distance > radius:
        from .errors import KernelDomainError

        raise KernelDomainError(f"source distance {source_distance} must exceed the radius {radius}")
    space = sphere_source_space(radius, source_distance, count)
    form = assemble(KernelSpec("newtonian"), space)
    res = sweep(form, space.point_mass(count), range(count), opts)
    mass = space.total_mass(res.swept)
    classical = radius / source_distance
    return OracleReport(classical, mass, abs(mass - classical) / classical,
                        notes=f"count={count}; classical value r/|y|")


@dataclass(frozen=True)
class RefinementStudy:
    counts: list
    masses: list
    extrapolated: float
    convergent: bool
    classical: float

    def rows(self) -> list:
        return [{"count": c, "mass": m, "error": abs(m - self.classical)} for c, m in zip(self.counts, self.masses)]

    def to_csv(self) -> str:
        from .geometry import format_float

        lines = ["count,mass,error"]
        lines += [f"{r['count']},{format_float(r['mass'])},{format_float(r['error'])}" for r in self.rows()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"rows": self.rows(), "extrapolated": self.extrapolated, "convergent": self.convergent,
                "classical": self.classical}


def refinement_study(radius: float = 1.0, source_distance: float = 2.0, counts=(500, 2000, 8000),
                     opts: SolveOptions | None = None) -> RefinementStudy:
    """Swept masses over increasing sphere resolutions.

    ``convergent`` means successive differences shrink monotonically; the
    limit estimate is a Richardson extrapolation assuming first order in the
    mesh width (mesh width halves when the count quadruples).
    """
    counts = sorted(counts)
    masses = [float(newtonian_sphere_mass(radius, source_distance, c, opts).main_value) for c in counts]
    diffs = np.abs(np.diff(masses))
    convergent = bool(len(diffs) >= 2 and np.all(diffs[1:] < diffs[:-1]))
    if len(masses) >= 2:
        ratio = math.sqrt(counts[-1] / counts[-2])
        extrap = masses[-1] + (masses[-1] - masses[-2]) / (ratio - 1)
    else:
        extrap = masses[-1]
    return RefinementStudy(list(counts), masses, extrap, convergent, radius / source_distance)


@dataclass(frozen=True, eq=False)
class RandomInstance:
    form: EnergyForm
    mu: DiscreteMeasure
    mask: object
    seed: int
    params: dict = field(default_factory=dict)


def random_instance(seed: int, n_range=(2, 12), dims=(2, 3), alphas=(1.0, 1.5, 2.0),
                    support_fraction: float = 0.5, mask_fraction: float = 0.5) -> RandomInstance:
    """Random cloud in the unit cube with a random measure and mask.

    Cell weights are uniform (cube volume over N) and the diagonal uses the
    nearest-neighbour rule, which stays positive definite on clumpy clouds.
    """
    rng = np.random.default_rng(seed)
    N = int(rng.integers(n_range[0], n_range[1] + 1))
    n = int(rng.choice(dims))
    choices = [a for a in alphas if a < n]
    alpha = float(rng.choice(choices))
    pts = rng.random((N, n))
    space = DiscreteSpace(pts, np.full(N, 1.0 / N))
    form = assemble(KernelSpec("riesz", alpha=alpha), space, {"rule": "nearest", "factor": 0.5})
    supp = rng.random(N) < support_fraction
    if not supp.any():
        supp[rng.integers(N)] = True
    mu = np.where(supp, rng.random(N), 0.0)
    mask = form.mask(np.flatnonzero(rng.random(N) < mask_fraction))
    return RandomInstance(form, form.measure(mu), mask, seed, {"N": N, "dim": n, "alpha": alpha})
