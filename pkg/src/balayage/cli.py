"""``balayage`` command line: one experiment per invocation, results in a run directory."""
from __future__ import annotations

import io
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import click
import numpy as np
import pydantic

from . import config as cfgmod
from .capacity import equilibrium
from .convergence import exhaust, exhaustion_masks
from .errors import BalayageError, ConvergenceError, EnergyPrincipleError
from .geometry import SignedMeasure, dumps, format_float
from .oracle import brute_sweep, compare, refinement_study
from .sweeping import outer_sweep, sweep, sweep_signed
from .verify import run_invariants, random_suite

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3


class RunFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def worker_count() -> int:
    raw = os.environ.get("BALAYAGE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise RunFailure(EXIT_CONFIG, f"BALAYAGE_THREADS: not an integer: {raw!r}")
    return os.cpu_count() or 1


def _format_validation(err: pydantic.ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def _load(path, seed, tolerance, method) -> cfgmod.RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise RunFailure(EXIT_CONFIG, f"config: cannot read {path}: {e}")
    if isinstance(raw, dict):
        solver = dict(raw.get("solver") or {})
        if tolerance is not None:
            solver["tolerance"] = tolerance
        if method is not None:
            solver["method"] = method
        if solver:
            raw["solver"] = solver
        if seed is not None:
            raw["seed"] = seed
    try:
        return cfgmod.RunConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        raise RunFailure(EXIT_CONFIG, _format_validation(e))


class Run:
    """Build state shared by all commands; collects log lines for log.txt."""

    def __init__(self, cfg: cfgmod.RunConfig, base_dir: Path):
        self.cfg = cfg
        self.opts = cfgmod.solve_options(cfg)
        self.rng = np.random.default_rng(cfg.seed)
        self.log_lines: list[str] = []
        self.form = None
        self.masks: dict = {}
        self.measures: dict = {}
        if cfg.space is not None and cfg.kernel is not None:
            space = cfgmod.build_space(cfg, base_dir)
            self.form = cfgmod.build_form(cfg, space)
            self.masks = cfgmod.build_masks(cfg, self.form, self.rng)
            self.measures = cfgmod.build_measures(cfg, self.form, self.masks, self.rng)
            self.log(f"space: N={self.form.size} id={self.form.space_id}")
            self.log(f"diag_rule: {json.dumps(self.form.diag_rule, sort_keys=True)}")

    def log(self, msg: str):
        self.log_lines.append(msg)

    def metadata(self) -> dict:
        diag = self.form.diag_rule if self.form is not None else None
        return {
            "tool_version": tool_version(),
            "config_hash": cfgmod.config_hash(self.cfg),
            "seed": self.cfg.seed,
            "diag_rule": diag,
            "solver": {
                "tolerance": self.opts.tolerance,
                "max_iterations": self.opts.max_iterations,
                "method": self.opts.method,
            },
        }


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(format_float(v) if isinstance(v, float) else str(v) for v in r) + "\n")
    return buf.getvalue()


# -- experiments -----------------------------------------------------------------

def _do_sweep(run: Run):
    e = run.cfg.experiment
    form, mu, A = run.form, run.measures[e.measure], run.masks[e.mask]
    if isinstance(mu, SignedMeasure) and np.any(mu.minus.weights > 0):
        res = sweep_signed(form, mu, A, run.opts)
        doc = {"kind": "sweep_signed", **res.to_dict()}
        swept = res.combined
        mu_w = mu.weights
    else:
        if isinstance(mu, SignedMeasure):
            mu = mu.plus
        res = (outer_sweep if e.outer else sweep)(form, mu, A, run.opts)
        doc = {"kind": "sweep", **res.to_dict()}
        swept = res.swept.weights
        mu_w = mu.weights
        run.log(f"sweep: iterations={res.iterations} active={res.active_set.size} distance={res.distance:.6g}")
        if not res.domination_ok:
            run.log(f"domination diagnostic: {res.domination_violations} points off the mask exceed the potential")
    on = A.indicator(form.size)
    pot, pot_mu = form.gram @ swept, form.gram @ mu_w
    rows = [(i, float(swept[i]), float(pot[i]), float(pot_mu[i]), int(on[i])) for i in range(form.size)]
    return doc, _csv(["index", "swept", "potential", "mu_potential", "on_mask"], rows), EXIT_OK


def _do_capacity(run: Run):
    e = run.cfg.experiment
    res = equilibrium(run.form, run.masks[e.mask], run.opts)
    doc = {"kind": "capacity", **res.to_dict(), "robin_spread": res.robin_spread, "iterations": res.iterations}
    if not np.isfinite(res.energy):
        doc["energy"] = None
        doc["robin_constant"] = None
    run.log(f"capacity: {res.capacity:.17g}")
    g = res.equilibrium.weights
    pot = (run.form.gram @ g) / run.form.cell_weights
    rows = [(i, float(g[i]), float(pot[i])) for i in range(run.form.size)]
    return doc, _csv(["index", "equilibrium", "potential"], rows), EXIT_OK


def _do_exhaust(run: Run):
    e = run.cfg.experiment
    if e.masks is not None:
        masks = [run.masks[n] for n in e.masks]
    else:
        masks = exhaustion_masks(run.form, run.masks[e.mask], e.radii)
    rep = exhaust(run.form, run.measures[e.measure], masks, run.opts)
    doc = {"kind": "exhaust", **rep.to_dict(), "distances_nonincreasing": rep.distances_nonincreasing()}
    run.log(f"exhaust: {len(masks)} stages, final gap {rep.final_gap:.3e}")
    return doc, rep.to_csv(), EXIT_OK


def _verify_report(run: Run, tagged):
    failed = [(s, c) for s, c in tagged if not c.passed and not c.skipped]
    for s, c in tagged:
        run.log(("" if s is None else f"[seed {s}] ") + c.line())
    for s, c in failed:
        click.echo(f"FAILED {c.name}" + ("" if s is None else f" (seed {s})") + f": residual {c.residual:.3e}",
                   err=True)
    rows = [("" if s is None else s, c.name, "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL"),
             float(c.residual), float(c.tolerance)) for s, c in tagged]
    doc = {
        "kind": "verify",
        "passed": not failed,
        "checks": [{"seed": s, **c.to_dict()} for s, c in tagged],
        "failed": [{"seed": s, "name": c.name, "residual": c.residual} for s, c in failed],
    }
    return doc, _csv(["seed", "check", "status", "residual", "tolerance"], rows), (EXIT_VERIFY if failed else EXIT_OK)


def _do_verify(run: Run):
    e = run.cfg.experiment
    if e.suite == "random":
        tagged = random_suite(run.cfg.seed, e.trials, run.opts, workers=min(worker_count(), e.trials))
    else:
        checks = run_invariants(run.form, run.measures[e.measure], run.masks[e.mask], run.rng, run.opts)
        tagged = [(None, c) for c in checks]
    return _verify_report(run, tagged)


def _do_oracle(run: Run):
    e = run.cfg.experiment
    if e.mode == "sphere_mass":
        study = refinement_study(e.radius, e.source_distance, e.counts, run.opts)
        doc = {"kind": "oracle_sphere_mass", **study.to_dict()}
        run.log(f"sphere mass: {study.masses} extrapolated {study.extrapolated:.6g}")
        return doc, study.to_csv(), (EXIT_OK if study.convergent else EXIT_VERIFY)
    form, mu, A = run.form, run.measures[e.measure], run.masks[e.mask]
    if isinstance(mu, SignedMeasure):
        mu = mu.plus
    res = sweep(form, mu, A, run.opts)
    rep = compare(res.swept, brute_sweep(form, mu, A), run.opts.tolerance)
    doc = {"kind": "oracle_compare", **rep.to_dict()}
    rows = [(i, float(rep.main_value[i]), float(rep.oracle_value[i])) for i in range(form.size)]
    if rep.flagged:
        click.echo(f"FAILED oracle_agreement: residual {rep.discrepancy:.3e}", err=True)
    return doc, _csv(["index", "main", "oracle"], rows), (EXIT_VERIFY if rep.flagged else EXIT_OK)


EXPERIMENTS = {
    "sweep": _do_sweep,
    "capacity": _do_capacity,
    "exhaust": _do_exhaust,
    "verify": _do_verify,
    "oracle": _do_oracle,
}


def execute(command: str, config_path, out=None, seed=None, tolerance=None, method=None) -> int:
    """Run one command and write its run directory; returns the exit code."""
    try:
        cfg = _load(config_path, seed, tolerance, method)
        if cfg.experiment.kind != command:
            raise RunFailure(EXIT_CONFIG, f"experiment.kind: config declares {cfg.experiment.kind!r}, "
                                          f"command is {command!r}")
        base = Path(config_path).resolve().parent
        try:
            run = Run(cfg, base)
            doc, report, code = EXPERIMENTS[command](run)
        except ConvergenceError as e:
            raise RunFailure(EXIT_NONCONVERGED, f"solver did not converge: {e}")
        except (EnergyPrincipleError, BalayageError, ValueError, OSError) as e:
            raise RunFailure(EXIT_CONFIG, f"{type(e).__name__}: {e}")
    except RunFailure as f:
        click.echo(f"error: {f}", err=True)
        return f.code

    doc = {**doc, "metadata": run.metadata(), "exit_code": code}
    text = dumps(doc) + "\n"
    out_dir = Path(out or cfg.output_dir or f"balayage-run-{cfgmod.config_hash(cfg)[:12]}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "result.json").write_text(text)
    (out_dir / "report.csv").write_text(report)
    meta = run.metadata()
    header = [f"command: {command}", f"tool_version: {meta['tool_version']}", f"config_hash: {meta['config_hash']}",
              f"seed: {cfg.seed}", f"exit_code: {code}"]
    (out_dir / "log.txt").write_text("\n".join(header + run.log_lines) + "\n")
    click.echo(text, nl=False)
    return code


def _common(f):
    f = click.option("--method", type=click.Choice(["active_set", "projected_gradient"]), default=None,
                     help="Override solver.method.")(f)
    f = click.option("--tolerance", type=float, default=None, help="Override solver.tolerance.")(f)
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the config seed.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Run directory.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True,
                     help="JSON run configuration.")(f)
    return f


@click.group()
@click.version_option(tool_version(), prog_name="balayage")
@click.option("-v", "--verbose", is_flag=True, help="Log solver diagnostics to stderr.")
def main(verbose):
    """Balayage, capacity and convergence experiments on discretised kernels."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _make(name, doc):
    @main.command(name=name, help=doc)
    @_common
    def cmd(config_path, out, seed, tolerance, method):
        sys.exit(execute(name, config_path, out, seed, tolerance, method))

    return cmd


cmd_sweep = _make("sweep", "Sweep a measure onto a mask.")
cmd_capacity = _make("capacity", "Equilibrium measure and capacity of a mask.")
cmd_exhaust = _make("exhaust", "Sweep onto an increasing sequence of masks.")
cmd_verify = _make("verify", "Run the invariant suite; exit 3 on any failure.")
cmd_oracle = _make("oracle", "Compare against brute force or run the sphere mass study.")


if __name__ == "__main__":
    main()
