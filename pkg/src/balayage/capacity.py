"""Inner capacity and equilibrium measures of masked regions."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .geometry import DiscreteMeasure
from .kernel import EnergyForm
from .sweeping import SolveOptions, _mask_indices, _solve_qp

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CapacityResult:
    """Equilibrium measure of a mask.

    ``equilibrium`` has unit total mass (coefficients weighted by the cell
    weights); ``robin_constant`` is the common value of its potential on
    the support, which equals ``energy`` at the minimiser.
    """

    equilibrium: DiscreteMeasure
    energy: float
    capacity: float
    robin_constant: float
    robin_spread: float = 0.0
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "energy": self.energy,
            "robin_constant": self.robin_constant,
            "equilibrium": self.equilibrium.weights.tolist(),
        }


def equilibrium(form: EnergyForm, A, opts: SolveOptions | None = None) -> CapacityResult:
    """Minimise the energy over unit-mass measures carried by ``A``.

    Solved as the cone program ``min x.H.x/2 - w.x`` over ``x >= 0`` (``w``
    the cell weights on ``A``) followed by normalisation: at its solution
    ``H x = w`` on the support, so ``gamma = x / (w.x)`` has constant
    potential ``1 / (w.x)``, which is also its energy.
    """
    opts = opts or SolveOptions()
    idx = _mask_indices(form, A)
    N = form.size
    if idx.size == 0:
        return CapacityResult(DiscreteMeasure(np.zeros(N), form.space_id), float("inf"), 0.0, float("inf"))
    K = form.gram
    cw = form.cell_weights
    H = K[np.ix_(idx, idx)]
    c = cw[idx]
    scale = float(np.max(c))
    x, it, converged = _solve_qp(H, c, opts.tolerance * scale, opts.iteration_limit(idx.size), opts.method)
    s = float(c @ x)
    gamma = np.zeros(N)
    gamma[idx] = x / s
    gamma[idx] /= float(cw[idx] @ gamma[idx])
    pot = (K @ gamma) / cw
    energy = float(gamma @ (K @ gamma))
    supp = gamma > 0
    robin = float(np.mean(pot[supp]))
    spread = float(np.max(np.abs(pot[supp] - robin))) / robin
    below = max(0.0, robin - float(np.min(pot[idx]))) / robin
    if not converged or spread > opts.tolerance * 100 or below > opts.tolerance * 100:
        raise ConvergenceError(
            f"equilibrium problem not solved: spread {spread:.3g}, feasibility {below:.3g} after {it} iterations",
            best=gamma, residuals={"spread": spread, "feasibility": below}, iterations=it,
        )
    if abs(robin - energy) > 1e-10 * energy:
        log.warning("robin constant %.17g differs from energy %.17g", robin, energy)
    return CapacityResult(DiscreteMeasure(gamma, form.space_id), energy, 1.0 / energy, robin, spread, it)


def capacity(form: EnergyForm, A, opts: SolveOptions | None = None) -> float:
    return equilibrium(form, A, opts).capacity


def is_negligible(A) -> bool:
    """Zero inner capacity.  Every nonempty mask carries a finite-energy point mass."""
    return len(A) == 0
