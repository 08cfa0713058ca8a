"""Inner and outer balayage as projection onto a cone in the energy metric.

The swept measure of ``mu`` onto a mask ``A`` minimises ``||mu - nu||``
over nonnegative ``nu`` carried by ``A``.  On the reduced variables
``x = nu[A]`` this is the bound-constrained quadratic program

    minimise  x.H.x / 2 - c.x   subject to  x >= 0,

with ``H = gram[A, A]`` and ``c = (gram @ mu)[A]``.  The gradient
``H x - c`` is the potential difference ``k(nu - mu)`` restricted to ``A``,
so the KKT conditions say: equal potentials where ``nu > 0`` and
``k nu >= k mu`` on the rest of ``A``.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import ConvergenceError, GeometryError
from .family import TestFamily, build_default_family
from .geometry import DiscreteMeasure, RegionMask, SignedMeasure, hahn_jordan
from .kernel import EnergyForm, weights_of

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-14
METHODS = ("active_set", "projected_gradient")


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-10
    max_iterations: int | None = None
    method: str = "active_set"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("solver.tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("solver.max_iterations must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"solver.method: unknown method {self.method!r}; expected one of {METHODS}")

    def iteration_limit(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else max(50 * n, 50)


@dataclass(frozen=True, eq=False)
class BalayageResult:
    """Swept measure with its optimality certificate.

    The ``kkt_*`` fields are raw residuals in potential units (the
    complementarity one in potential times weight units); :meth:`relative_kkt`
    divides them by ``scale = max(||gram @ mu||_inf, 1e-14)``.
    """

    swept: DiscreteMeasure
    active_set: np.ndarray
    kkt_stationarity: float
    kkt_feasibility: float
    kkt_complementarity: float
    distance: float
    iterations: int
    scale: float
    method: str = "active_set"
    outer: bool = False
    domination_violations: int = 0
    domination_worst: float = 0.0
    equality_defect: float = 0.0
    tolerance: float = 1e-10

    def relative_kkt(self) -> dict:
        xmax = float(np.max(self.swept.weights, initial=0.0))
        comp_scale = self.scale * xmax if xmax > 0 else 1.0
        return {
            "stationarity": self.kkt_stationarity / self.scale,
            "feasibility": self.kkt_feasibility / self.scale,
            "complementarity": self.kkt_complementarity / comp_scale,
        }

    def kkt_ok(self, tol: float | None = None) -> bool:
        tol = self.tolerance if tol is None else tol
        return all(v <= tol for v in self.relative_kkt().values())

    @property
    def domination_ok(self) -> bool:
        """No point off the mask where ``k swept > k mu`` beyond tolerance."""
        return self.domination_violations == 0

    @property
    def linear_regime(self) -> bool:
        """``k swept = k mu`` on the whole mask and ``<=`` off it.

        Only then does the discrete sweep act linearly on ``mu``; a positive
        ``equality_defect`` means zero-weight mask points where the
        potential strictly exceeds that of ``mu``.
        """
        return self.domination_ok and self.equality_defect <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "swept": self.swept.weights.tolist(),
            "active_set": self.active_set.tolist(),
            "kkt": self.relative_kkt(),
            "distance": self.distance,
            "iterations": self.iterations,
            "domination_violations": self.domination_violations,
            "domination_worst": self.domination_worst,
            "equality_defect": self.equality_defect,
            "linear_regime": self.linear_regime,
            "scale": self.scale,
            "method": self.method,
            "balayage": "outer" if self.outer else "inner",
        }


# -- reduced quadratic program --------------------------------------------------

def _solve_passive(H, c, P):
    idx = np.flatnonzero(P)
    if idx.size == 0:
        return np.zeros(0), idx
    Hp = H[np.ix_(idx, idx)]
    cp = c[idx]
    try:
        fac = cho_factor(Hp, lower=True, check_finite=False)
    except LinAlgError:
        z = np.linalg.lstsq(Hp, cp, rcond=None)[0]
        return z, idx
    z = cho_solve(fac, cp, check_finite=False)
    # one step of iterative refinement keeps stationarity near machine precision
    z = z + cho_solve(fac, cp - Hp @ z, check_finite=False)
    return z, idx


def _feasible_start(H, c, P):
    """Shrink ``P`` until the equality-constrained solution on it is positive."""
    while P.any():
        z, idx = _solve_passive(H, c, P)
        if np.all(z > 0):
            x = np.zeros_like(c)
            x[idx] = z
            return x, P
        P = P.copy()
        P[idx[z <= 0]] = False
    return np.zeros_like(c), P


def active_set_qp(H, c, tol_abs, max_iter, warm=None):
    """Lawson-Hanson active-set method in normal-equation form.

    Returns ``(x, iterations, converged)``.  The entering index is the one
    with the largest negative gradient; ``argmax`` returns the lowest index
    on ties, which keeps runs deterministic.
    """
    m = c.size
    if warm is None:
        warm = np.ones(m, dtype=bool)
    x, P = _feasible_start(H, c, np.asarray(warm, dtype=bool))
    blocked = np.zeros(m, dtype=bool)
    it = 0
    while True:
        w = c - H @ x
        cand = np.where(P | blocked, -np.inf, w)
        j = int(np.argmax(cand))
        if not cand[j] > tol_abs:
            return x, it, True
        if it >= max_iter:
            return x, it, False
        it += 1
        x_prev = x
        P = P.copy()
        P[j] = True
        while True:
            z, idx = _solve_passive(H, c, P)
            if np.all(z > 0):
                x = np.zeros(m)
                x[idx] = z
                break
            if it >= max_iter:
                return x, it, False
            it += 1
            xi = x[idx]
            neg = np.flatnonzero(z <= 0)
            ratios = xi[neg] / (xi[neg] - z[neg])
            alpha = float(np.min(ratios))
            step = xi + alpha * (z - xi)
            leave = idx[neg[ratios <= alpha]]
            x = np.zeros(m)
            x[idx] = np.maximum(step, 0.0)
            x[leave] = 0.0
            P[leave] = False
            P &= x > 0
            if not P.any():
                break
        if P[j]:
            blocked[:] = False
        elif np.array_equal(x, x_prev):
            # rejected on entry: its multiplier was rounding noise
            blocked[j] = True


def projected_gradient_qp(H, c, tol_abs, max_iter, warm=None):
    """Projected gradient with Barzilai-Borwein steps and support polishing."""
    m = c.size
    x = np.zeros(m) if warm is None else np.where(warm, np.maximum(c / np.diag(H), 0.0), 0.0)
    g = H @ x - c
    step = 1.0 / max(np.linalg.norm(H, ord=np.inf), 1e-300)
    best = x
    for it in range(1, max_iter + 1):
        x_new = np.maximum(x - step * g, 0.0)
        g_new = H @ x_new - c
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else step
        x, g = x_new, g_new
        if _qp_kkt_max(x, g) <= tol_abs:
            return x, it, True
        if it % 10 == 0:
            P = x > 0
            z, idx = _solve_passive(H, c, P)
            if np.all(z > 0):
                xp = np.zeros(m)
                xp[idx] = z
                gp = H @ xp - c
                if _qp_kkt_max(xp, gp) <= tol_abs:
                    return xp, it, True
        best = x
    return best, max_iter, False


def _qp_kkt_max(x, g):
    act = x > 0
    stat = np.max(np.abs(g[act]), initial=0.0)
    feas = max(0.0, -float(np.min(g, initial=0.0)))
    return max(stat, feas)


def _solve_qp(H, c, tol_abs, max_iter, method, warm=None):
    if method == "active_set":
        return active_set_qp(H, c, tol_abs, max_iter, warm)
    return projected_gradient_qp(H, c, tol_abs, max_iter, warm)


# -- public operations -----------------------------------------------------------

def _mask_indices(form: EnergyForm, A) -> np.ndarray:
    if isinstance(A, RegionMask):
        if A.space_id is not None and A.space_id != form.space_id:
            from .errors import SpaceMismatchError

            raise SpaceMismatchError(f"mask lives on {A.space_id}, form on {form.space_id}")
        idx = A.indices
    else:
        idx = np.unique(np.asarray(list(A), dtype=np.int64))
    if idx.size and (idx[0] < 0 or idx[-1] >= form.size):
        raise GeometryError("mask index out of range")
    return idx


def _positive_weights(form, mu) -> np.ndarray:
    a = weights_of(form, mu)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise GeometryError("sweep needs a nonnegative finite measure; use sweep_signed for signed ones")
    return a


def sweep(form: EnergyForm, mu, A, opts: SolveOptions | None = None, warm_start=None) -> BalayageResult:
    """Inner balayage of ``mu`` onto ``A`` (orthogonal projection onto the cone).

    ``warm_start`` is an optional index set believed to contain the support
    of the answer.  Raises :class:`ConvergenceError` when the KKT tolerance
    is not met within the iteration limit.
    """
    opts = opts or SolveOptions()
    a = _positive_weights(form, mu)
    idx = _mask_indices(form, A)
    K = form.gram
    pot_mu = K @ a
    scale = max(float(np.max(np.abs(pot_mu), initial=0.0)), SCALE_FLOOR)
    nu = np.zeros(form.size)
    iterations = 0
    if idx.size:
        H = K[np.ix_(idx, idx)]
        c = pot_mu[idx]
        warm = None
        if warm_start is not None:
            warm = np.isin(idx, _mask_indices(form, warm_start))
        x, iterations, converged = _solve_qp(H, c, opts.tolerance * scale, opts.iteration_limit(idx.size),
                                             opts.method, warm)
        nu[idx] = x
    result = _finish(form, a, nu, idx, pot_mu, scale, iterations, opts)
    if idx.size and not result.kkt_ok():
        raise ConvergenceError(
            f"sweep did not reach KKT tolerance {opts.tolerance:g} after {iterations} iterations "
            f"(method {opts.method}); residuals {result.relative_kkt()}",
            best=result, residuals=result.relative_kkt(), iterations=iterations,
        )
    return result


def _finish(form, a, nu, idx, pot_mu, scale, iterations, opts) -> BalayageResult:
    K = form.gram
    diff = nu - a
    g = K @ diff
    gA = g[idx]
    xA = nu[idx]
    act = xA > 0
    stat = float(np.max(np.abs(gA[act]), initial=0.0))
    feas = max(0.0, -float(np.min(gA, initial=0.0)))
    comp = float(np.max(np.abs(xA * gA), initial=0.0))
    off = np.ones(form.size, dtype=bool)
    off[idx] = False
    thresh = opts.tolerance * scale
    viol = g[off] > thresh
    worst = max(0.0, float(np.max(g[off], initial=0.0))) / scale
    eq_defect = max(0.0, float(np.max(gA, initial=0.0))) / scale
    dist = math.sqrt(max(float(diff @ g), 0.0))
    return BalayageResult(
        swept=DiscreteMeasure(nu, form.space_id),
        active_set=idx[act],
        kkt_stationarity=stat,
        kkt_feasibility=feas,
        kkt_complementarity=comp,
        distance=dist,
        iterations=int(iterations),
        scale=scale,
        method=opts.method,
        domination_violations=int(np.count_nonzero(viol)),
        domination_worst=worst,
        equality_defect=eq_defect,
        tolerance=opts.tolerance,
    )


def outer_sweep(form: EnergyForm, mu, A, opts: SolveOptions | None = None, warm_start=None) -> BalayageResult:
    """Outer balayage.  Every finite mask is Borel, so it coincides with the inner one."""
    return dataclasses.replace(sweep(form, mu, A, opts, warm_start), outer=True)


@dataclass(frozen=True, eq=False)
class SignedBalayageResult:
    plus: BalayageResult
    minus: BalayageResult

    @property
    def combined(self) -> np.ndarray:
        return self.plus.swept.weights - self.minus.swept.weights

    def combined_measure(self) -> SignedMeasure:
        return hahn_jordan(self.combined, self.plus.swept.space_id)

    def to_dict(self) -> dict:
        return {"combined": self.combined.tolist(), "plus": self.plus.to_dict(), "minus": self.minus.to_dict()}


def sweep_signed(form: EnergyForm, mu, A, opts: SolveOptions | None = None) -> SignedBalayageResult:
    """Sweep the positive and negative parts separately.

    ``mu`` is a :class:`SignedMeasure`, a ``(plus, minus)`` pair of
    nonnegative measures, or a raw real vector (split by Hahn-Jordan).
    """
    if isinstance(mu, SignedMeasure):
        plus, minus = mu.plus, mu.minus
    elif isinstance(mu, tuple) and len(mu) == 2:
        plus, minus = mu
    else:
        hj = hahn_jordan(weights_of(form, mu), form.space_id)
        plus, minus = hj.plus, hj.minus
    return SignedBalayageResult(sweep(form, plus, A, opts), sweep(form, minus, A, opts))


def swept_signed_weights(form: EnergyForm, lam, A, opts: SolveOptions | None = None) -> np.ndarray:
    if isinstance(lam, DiscreteMeasure) or (not isinstance(lam, (SignedMeasure, tuple))
                                            and np.all(np.asarray(lam) >= 0)):
        return sweep(form, lam, A, opts).swept.weights
    return sweep_signed(form, lam, A, opts).combined


def symmetry_residual(form: EnergyForm, mu, nu, A, opts: SolveOptions | None = None) -> float:
    """``|k(mu^A, nu) - k(mu, nu^A)| / max(1, |k(mu^A, nu)|)``."""
    mu_a = swept_signed_weights(form, mu, A, opts)
    nu_a = swept_signed_weights(form, nu, A, opts)
    # k(mu, nu^A) is evaluated as k(nu^A, mu) so that nu = mu gives identical expressions
    lhs = float(mu_a @ (form.gram @ weights_of(form, nu)))
    rhs = float(nu_a @ (form.gram @ weights_of(form, mu)))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


@dataclass(frozen=True)
class Certificate:
    certified: bool
    residual: float
    worst: int | None
    residuals: np.ndarray = field(repr=False, default=None)
    reason: str = ""
    linear_regime: bool = True  # every family sweep had equal potentials on all of A

    def to_dict(self) -> dict:
        return {"certified": self.certified, "residual": self.residual, "worst": self.worst,
                "reason": self.reason, "linear_regime": self.linear_regime}


def certify(form: EnergyForm, xi, mu, A, family: TestFamily | None = None,
            opts: SolveOptions | None = None, tolerance: float = 1e-8) -> Certificate:
    """Check ``k(xi, lam) = k(lam^A, mu)`` for every member of a test family.

    Residuals are normalised by ``||gram @ mu||_inf * ||lam||_1``.  With a
    family whose potentials span, a certified ``xi`` equals the sweep of
    ``mu`` up to the tolerance amplified by the conditioning of the gram.
    """
    family = build_default_family(form) if family is None else family
    if len(family) == 0:
        return Certificate(False, math.inf, None, np.zeros(0), "empty test family")
    xw = weights_of(form, xi)
    mw = weights_of(form, mu)
    scale = max(float(np.max(np.abs(form.gram @ mw), initial=0.0)), SCALE_FLOOR)
    pot_xi = form.gram @ xw
    pot_mu = form.gram @ mw
    res = np.empty(len(family))
    linear = True
    for k, lam in enumerate(family.members):
        lw = weights_of(form, lam)
        sr = sweep_signed(form, lam, A, opts)
        linear = linear and sr.plus.linear_regime and sr.minus.linear_regime
        lam_a = sr.combined
        lhs = float(lw @ pot_xi)
        rhs = float(lam_a @ pot_mu)
        res[k] = abs(lhs - rhs) / (scale * max(float(np.sum(np.abs(lw))), SCALE_FLOOR))
    worst = int(np.argmax(res))
    ok = bool(res[worst] <= tolerance)
    reason = "" if ok else f"pairing mismatch {res[worst]:.3g} at family member {worst}"
    return Certificate(ok, float(res[worst]), None if ok else worst, res, reason, linear)
