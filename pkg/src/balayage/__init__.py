"""Balayage of discrete measures as projection in a kernel energy metric."""
from .capacity import CapacityResult, capacity, equilibrium, is_negligible
from .convergence import (
    ExhaustionReport,
    contraction_check,
    exhaust,
    exhaustion_masks,
    measure_equality_check,
    vague_convergence_check,
)
from .errors import (
    BalayageError,
    ConvergenceError,
    DegenerateGeometryError,
    EnergyPrincipleError,
    GeometryError,
    KernelDomainError,
    MatrixTooLargeError,
    NotNestedError,
    SpaceMismatchError,
    UnsupportedDimensionError,
)
from .family import TestFamily, build_default_family
from .geometry import (
    DiscreteMeasure,
    DiscreteSpace,
    RegionMask,
    SignedMeasure,
    ball_mask,
    box_mask,
    build_grid,
    build_sphere,
    hahn_jordan,
    mask_from_predicate,
)
from .kernel import EnergyForm, KernelSpec, assemble, energy_norm, eval_kernel, inner_product, potential
from .oracle import brute_sweep, compare, newtonian_sphere_mass, random_instance, refinement_study
from .sweeping import (
    BalayageResult,
    Certificate,
    SolveOptions,
    certify,
    outer_sweep,
    sweep,
    sweep_signed,
    symmetry_residual,
)
