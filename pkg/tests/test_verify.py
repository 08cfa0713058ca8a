import numpy as np

from balayage import random_instance
from balayage.verify import Check, random_suite, run_invariants


def test_two_point_instance_passes_everything(two):
    checks = run_invariants(two, [0, 1.0], [0], np.random.default_rng(0))
    assert all(c.passed and not c.skipped for c in checks), [c.line() for c in checks if not c.passed]


def test_clipping_instance_skips_linear_laws(clip):
    checks = {c.name: c for c in run_invariants(clip, [0, 0, 1.0], [0, 1], np.random.default_rng(0))}
    assert checks["symmetry"].skipped and checks["certify_true_sweep"].skipped
    assert all(c.passed for c in checks.values())


def test_random_suite_is_reproducible():
    a = random_suite(42, 5)
    b = random_suite(42, 5, workers=2)
    assert [(s, c.name, c.passed, c.residual) for s, c in a] == [(s, c.name, c.passed, c.residual) for s, c in b]
    assert all(c.passed for _, c in a)


def test_check_line_format():
    assert Check("x", False, 0.5, 1e-10).line().startswith("FAIL x: residual=5.000e-01")
    assert Check("x", True, 0.0, 1e-10, skipped=True, note="why").line().endswith("why")


def test_oracle_check_runs_on_small_instances():
    inst = random_instance(3)
    names = [c.name for c in run_invariants(inst.form, inst.mu, inst.mask, np.random.default_rng(1))]
    assert "oracle_agreement" in names
