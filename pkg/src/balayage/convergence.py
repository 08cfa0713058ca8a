"""Exhaustion experiments and pairing-based convergence checks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotNestedError
from .family import TestFamily, build_default_family
from .geometry import RegionMask
from .kernel import EnergyForm, weights_of
from .sweeping import SCALE_FLOOR, BalayageResult, SolveOptions, _mask_indices, sweep

__all__ = [
    "TestFamily", "build_default_family", "ExhaustionStage", "ExhaustionReport", "exhaust",
    "exhaustion_masks", "contraction_check", "vague_convergence_check", "measure_equality_check",
]


@dataclass(frozen=True, eq=False)
class ExhaustionStage:
    mask_size: int
    result: BalayageResult
    potential: np.ndarray
    step: float | None = None  # ||mu^{A_j} - mu^{A_{j+1}}||, None on the last stage

    @property
    def distance(self) -> float:
        return self.result.distance


@dataclass(frozen=True, eq=False)
class ExhaustionReport:
    stages: list
    direct: BalayageResult
    final_gap: float  # ||mu^{A_J} - mu^A|| against a cold solve onto A

    @property
    def distances(self) -> np.ndarray:
        return np.array([s.distance for s in self.stages])

    def distances_nonincreasing(self, slack: float = 1e-12) -> bool:
        d = self.distances
        return bool(np.all(np.diff(d) <= slack * max(1.0, float(d[0]) if d.size else 1.0)))

    def to_rows(self) -> list:
        rows = []
        for j, s in enumerate(self.stages):
            rows.append({
                "stage": j,
                "mask_size": s.mask_size,
                "distance": s.distance,
                "distance_sq": s.distance**2,
                "step": "" if s.step is None else s.step,
                "active_size": int(s.result.active_set.size),
                "domination_violations": s.result.domination_violations,
            })
        return rows

    def to_csv(self) -> str:
        from .geometry import format_float

        buf = io.StringIO()
        rows = self.to_rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: format_float(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "stages": [
                {**row, "step": None if row["step"] == "" else row["step"],
                 "swept": s.result.swept.weights.tolist(), "potential": s.potential.tolist()}
                for row, s in zip(self.to_rows(), self.stages)
            ],
            "final_gap": self.final_gap,
            "direct_distance": self.direct.distance,
        }


def _check_nested(form, masks):
    idx = [_mask_indices(form, m) for m in masks]
    for j in range(len(idx) - 1):
        if not np.all(np.isin(idx[j], idx[j + 1])):
            raise NotNestedError(f"mask {j} is not contained in mask {j + 1}")
    return idx


def exhaust(form: EnergyForm, mu, masks, opts: SolveOptions | None = None) -> ExhaustionReport:
    """Sweep ``mu`` onto an increasing sequence of masks ending at ``A``.

    Each stage is warm-started from the previous active set.  The final
    stage is compared against a cold sweep onto ``A``.
    """
    opts = opts or SolveOptions()
    if not masks:
        raise ValueError("exhaust needs at least one mask")
    idx = _check_nested(form, masks)
    K = form.gram
    results = []
    warm = None
    for m in idx:
        r = sweep(form, mu, m, opts, warm_start=warm)
        results.append(r)
        warm = r.active_set
    stages = []
    for j, r in enumerate(results):
        step = None
        if j + 1 < len(results):
            d = r.swept.weights - results[j + 1].swept.weights
            step = math.sqrt(max(float(d @ K @ d), 0.0))
        stages.append(ExhaustionStage(int(idx[j].size), r, K @ r.swept.weights, step))
    direct = sweep(form, mu, idx[-1], opts)
    gap = direct.swept.weights - results[-1].swept.weights
    return ExhaustionReport(stages, direct, math.sqrt(max(float(gap @ K @ gap), 0.0)))


def exhaustion_masks(form: EnergyForm, A, radii, center=None) -> list:
    """``A`` intersected with balls of increasing radius about ``center``.

    The centre defaults to the midpoint of the bounding box.  Repeated
    masks are dropped, so the result is strictly nested and ends at ``A``.
    """
    if form.space is None:
        raise ValueError("exhaustion_masks needs an energy form built on a space")
    pts = form.space.points
    if center is None:
        center = (pts.min(axis=0) + pts.max(axis=0)) / 2
    r = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=1)
    a = _mask_indices(form, A)
    out = []
    for rad in sorted(radii):
        m = RegionMask(form.space_id, a[r[a] <= rad])
        if not out or len(m) > len(out[-1]):
            out.append(m)
    full = RegionMask(form.space_id, a)
    if not out or len(out[-1]) < len(full):
        out.append(full)
    return out


def contraction_check(form: EnergyForm, mu, A_j, A_p, opts: SolveOptions | None = None, slack: float = 1e-10):
    """Return ``(lhs, rhs, holds)`` for the nested-projection inequality.

    ``lhs = ||mu^{A_j} - mu^{A_p}||**2`` and
    ``rhs = ||mu - mu^{A_j}||**2 - ||mu - mu^{A_p}||**2``; ``holds`` allows
    ``slack * ||mu||**2`` for rounding.
    """
    _check_nested(form, [A_j, A_p])
    rj = sweep(form, mu, A_j, opts)
    rp = sweep(form, mu, A_p, opts)
    K = form.gram
    d = rj.swept.weights - rp.swept.weights
    lhs = float(d @ K @ d)
    rhs = rj.distance**2 - rp.distance**2
    a = weights_of(form, mu)
    energy = max(float(a @ K @ a), SCALE_FLOOR)
    return lhs, rhs, bool(lhs <= rhs + slack * energy)


@dataclass(frozen=True)
class VagueVerdict:
    passed: bool
    residuals: np.ndarray = field(repr=False)
    worst: int
    worst_residual: float
    direct_residual: float
    direct_passed: bool
    span_deficient: bool

    @property
    def views_agree(self) -> bool:
        return self.passed == self.direct_passed

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_member": self.worst,
            "worst_residual": self.worst_residual,
            "direct_residual": self.direct_residual,
            "direct_passed": self.direct_passed,
            "span_deficient": self.span_deficient,
        }


def _family_potentials(form: EnergyForm, family: TestFamily) -> np.ndarray:
    if len(family) == 0:
        raise ValueError("test family is empty")
    return family.potentials(form)


def _span_deficient(P: np.ndarray) -> bool:
    return bool(np.linalg.matrix_rank(P) < P.shape[1])


def vague_convergence_check(form: EnergyForm, family: TestFamily, sequence, limit, tolerance: float) -> VagueVerdict:
    """Test ``int k lam d nu_k -> int k lam d nu_0`` for every family member.

    Residuals are taken at the last element of the sequence.  The direct
    view compares weight vectors in max-norm against
    ``tolerance / ||gram||_inf``; for a spanning family the two views agree
    except in a band set by the conditioning of the gram.
    """
    if not sequence:
        raise ValueError("sequence must be nonempty")
    P = _family_potentials(form, family)
    last = weights_of(form, sequence[-1])
    lim = weights_of(form, limit)
    res = np.abs(P @ (last - lim))
    worst = int(np.argmax(res))
    direct = float(np.max(np.abs(last - lim)))
    knorm = float(np.linalg.norm(form.gram, ord=np.inf))
    return VagueVerdict(
        passed=bool(res[worst] <= tolerance),
        residuals=res,
        worst=worst,
        worst_residual=float(res[worst]),
        direct_residual=direct,
        direct_passed=bool(direct <= tolerance / knorm),
        span_deficient=_span_deficient(P),
    )


@dataclass(frozen=True)
class EqualityVerdict:
    passed: bool
    worst: int
    worst_residual: float
    span_deficient: bool
    weight_error_bound: float  # max-norm bound on mu - nu implied by a pass; inf if not spanning

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def measure_equality_check(form: EnergyForm, family: TestFamily, mu, nu, tolerance: float) -> EqualityVerdict:
    """Test ``int k lam d mu = int k lam d nu`` for every family member."""
    P = _family_potentials(form, family)
    res = np.abs(P @ (weights_of(form, mu) - weights_of(form, nu)))
    worst = int(np.argmax(res))
    deficient = _span_deficient(P)
    bound = math.inf if deficient else tolerance * float(np.linalg.norm(np.linalg.pinv(P), ord=np.inf))
    return EqualityVerdict(bool(res[worst] <= tolerance), worst, float(res[worst]), deficient, bound)
