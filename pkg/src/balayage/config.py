"""Run configuration: a versioned JSON document, unknown fields rejected."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import geometry
from .geometry import DiscreteSpace
from .kernel import EnergyForm, KernelSpec, assemble
from .sweeping import SolveOptions


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _exactly_one(model, names):
    given = [n for n in names if getattr(model, n) is not None]
    if len(given) != 1:
        raise ValueError(f"exactly one of {names} must be given, got {given or 'none'}")
    return given[0]


class GridSpec(Strict):
    lower: List[float]
    upper: List[float]
    resolution: Union[int, List[int]]


class SphereSpec(Strict):
    center: List[float]
    radius: float
    count: int


class PointsSpec(Strict):
    points: List[List[float]]
    cell_weights: Optional[List[float]] = None
    cell_dim: Optional[int] = None


class SpaceConfig(Strict):
    grid: Optional[GridSpec] = None
    sphere: Optional[SphereSpec] = None
    points: Optional[PointsSpec] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def _one(self):
        _exactly_one(self, ["grid", "sphere", "points", "file"])
        return self


class DiagRuleConfig(Strict):
    rule: Literal["ball", "nearest", "fixed"] = "ball"
    factor: Optional[float] = None
    value: Optional[float] = None

    @model_validator(mode="after")
    def _params(self):
        if self.rule == "fixed" and self.value is None:
            raise ValueError("diag_rule 'fixed' needs a value")
        return self


class KernelConfig(Strict):
    family: Literal["riesz", "newtonian", "green_ball", "explicit"]
    alpha: Optional[float] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None
    gram: Optional[List[List[float]]] = None
    diag_rule: Optional[DiagRuleConfig] = None

    @model_validator(mode="after")
    def _params(self):
        if (self.family == "explicit") != (self.gram is not None):
            raise ValueError("'gram' is given exactly when family is 'explicit'")
        return self


class PointMassSpec(Strict):
    index: int
    mass: float = 1.0


class RandomSpec(Strict):
    fraction: float = Field(0.5, gt=0, le=1)


class BallSpec(Strict):
    center: List[float]
    radius: float


class BoxSpec(Strict):
    lower: List[float]
    upper: List[float]


class MeasureConfig(Strict):
    weights: Optional[List[float]] = None
    signed: Optional[List[float]] = None
    point_mass: Optional[PointMassSpec] = None
    uniform_on: Optional[str] = None
    random: Optional[RandomSpec] = None

    @model_validator(mode="after")
    def _one(self):
        _exactly_one(self, ["weights", "signed", "point_mass", "uniform_on", "random"])
        return self


class MaskConfig(Strict):
    indices: Optional[List[int]] = None
    all: Optional[bool] = None
    ball: Optional[BallSpec] = None
    box: Optional[BoxSpec] = None
    random: Optional[RandomSpec] = None

    @model_validator(mode="after")
    def _one(self):
        _exactly_one(self, ["indices", "all", "ball", "box", "random"])
        return self


class SolverConfig(Strict):
    tolerance: float = Field(1e-10, gt=0)
    max_iterations: Optional[int] = Field(None, ge=1)
    method: Literal["active_set", "projected_gradient"] = "active_set"


class SweepExperiment(Strict):
    kind: Literal["sweep"]
    measure: str
    mask: str
    outer: bool = False


class CapacityExperiment(Strict):
    kind: Literal["capacity"]
    mask: str


class ExhaustExperiment(Strict):
    kind: Literal["exhaust"]
    measure: str
    masks: Optional[List[str]] = None
    mask: Optional[str] = None
    radii: Optional[List[float]] = None

    @model_validator(mode="after")
    def _shape(self):
        if (self.masks is None) == (self.mask is None):
            raise ValueError("give either 'masks' (explicit nested list) or 'mask' with 'radii'")
        if self.mask is not None and not self.radii:
            raise ValueError("'mask' needs 'radii' for the exhausting balls")
        return self


class VerifyExperiment(Strict):
    kind: Literal["verify"]
    suite: Literal["instance", "random"] = "instance"
    measure: Optional[str] = None
    mask: Optional[str] = None
    trials: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _shape(self):
        if self.suite == "instance" and (self.measure is None or self.mask is None):
            raise ValueError("suite 'instance' needs 'measure' and 'mask'")
        return self


class OracleExperiment(Strict):
    kind: Literal["oracle"]
    mode: Literal["compare", "sphere_mass"] = "compare"
    measure: Optional[str] = None
    mask: Optional[str] = None
    radius: float = 1.0
    source_distance: float = 2.0
    counts: List[int] = [500, 2000, 8000]

    @model_validator(mode="after")
    def _shape(self):
        if self.mode == "compare" and (self.measure is None or self.mask is None):
            raise ValueError("mode 'compare' needs 'measure' and 'mask'")
        return self


Experiment = Annotated[
    Union[SweepExperiment, CapacityExperiment, ExhaustExperiment, VerifyExperiment, OracleExperiment],
    Field(discriminator="kind"),
]


class RunConfig(Strict):
    version: Literal[1]
    space: Optional[SpaceConfig] = None
    kernel: Optional[KernelConfig] = None
    measures: Dict[str, MeasureConfig] = {}
    masks: Dict[str, MaskConfig] = {}
    solver: SolverConfig = SolverConfig()
    experiment: Experiment
    seed: int = 0
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _names_resolve(self):
        e = self.experiment
        needed_measures = [getattr(e, "measure", None)]
        needed_masks = [getattr(e, "mask", None)] + list(getattr(e, "masks", None) or [])
        for name in filter(None, needed_measures):
            if name not in self.measures:
                raise ValueError(f"experiment.measure: unknown measure {name!r}")
        for name in filter(None, needed_masks):
            if name not in self.masks:
                raise ValueError(f"experiment.mask: unknown mask {name!r}")
        for mname, m in self.measures.items():
            if m.uniform_on is not None and m.uniform_on not in self.masks:
                raise ValueError(f"measures.{mname}.uniform_on: unknown mask {m.uniform_on!r}")
        needs_space = not (isinstance(e, OracleExperiment) and e.mode == "sphere_mass") and not (
            isinstance(e, VerifyExperiment) and e.suite == "random")
        if needs_space and (self.space is None or self.kernel is None):
            raise ValueError(f"experiment {e.kind!r} needs 'space' and 'kernel'")
        return self


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return RunConfig.model_validate(json.loads(text))


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def solve_options(cfg: RunConfig) -> SolveOptions:
    s = cfg.solver
    return SolveOptions(tolerance=s.tolerance, max_iterations=s.max_iterations, method=s.method)


def build_space(cfg: RunConfig, base_dir: Path | None = None) -> DiscreteSpace:
    sc = cfg.space
    if sc.grid is not None:
        return geometry.build_grid(sc.grid.lower, sc.grid.upper, sc.grid.resolution)
    if sc.sphere is not None:
        return geometry.build_sphere(sc.sphere.center, sc.sphere.radius, sc.sphere.count)
    if sc.points is not None:
        pts = np.asarray(sc.points.points, dtype=float)
        w = sc.points.cell_weights if sc.points.cell_weights is not None else np.ones(len(pts))
        return DiscreteSpace(pts, w, sc.points.cell_dim)
    path = Path(sc.file)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return geometry.space_from_dict(json.loads(path.read_text()))


def build_form(cfg: RunConfig, space: DiscreteSpace) -> EnergyForm:
    kc = cfg.kernel
    if kc.family == "explicit":
        g = np.asarray(kc.gram, dtype=float)
        if g.shape != (space.size, space.size):
            raise ValueError(f"kernel.gram: shape {g.shape} does not match {space.size} points")
        return EnergyForm(g, space, None, {"rule": "explicit"})
    spec = KernelSpec(kc.family, alpha=kc.alpha, center=tuple(kc.center) if kc.center else None,
                      radius=kc.radius)
    rule = kc.diag_rule.model_dump(exclude_none=True) if kc.diag_rule else None
    return assemble(spec, space, rule)


def build_masks(cfg: RunConfig, form: EnergyForm, rng: np.random.Generator) -> dict:
    space = form.space
    out = {}
    for name in sorted(cfg.masks):
        m = cfg.masks[name]
        if m.indices is not None:
            out[name] = form.mask(m.indices)
        elif m.all is not None:
            out[name] = form.mask(range(form.size) if m.all else ())
        elif m.ball is not None:
            out[name] = geometry.ball_mask(space, m.ball.center, m.ball.radius)
        elif m.box is not None:
            out[name] = geometry.box_mask(space, m.box.lower, m.box.upper)
        else:
            out[name] = form.mask(np.flatnonzero(rng.random(form.size) < m.random.fraction))
    return out


def build_measures(cfg: RunConfig, form: EnergyForm, masks: dict, rng: np.random.Generator) -> dict:
    N = form.size
    out = {}
    for name in sorted(cfg.measures):
        m = cfg.measures[name]
        if m.weights is not None:
            out[name] = form.measure(m.weights)
        elif m.signed is not None:
            w = np.asarray(m.signed, dtype=float)
            if w.size != N:
                raise ValueError(f"measures.{name}.signed: {w.size} weights for {N} points")
            out[name] = geometry.hahn_jordan(w, form.space_id)
        elif m.point_mass is not None:
            a = np.zeros(N)
            if not 0 <= m.point_mass.index < N:
                raise ValueError(f"measures.{name}.point_mass.index out of range")
            a[m.point_mass.index] = m.point_mass.mass / form.cell_weights[m.point_mass.index]
            out[name] = form.measure(a)
        elif m.uniform_on is not None:
            a = np.zeros(N)
            a[masks[m.uniform_on].indices] = 1.0
            out[name] = form.measure(a)
        else:
            out[name] = form.measure(np.where(rng.random(N) < m.random.fraction, rng.random(N), 0.0))
    return out
