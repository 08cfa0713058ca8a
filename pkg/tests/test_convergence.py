import numpy as np
import pytest

from balayage import (
    KernelSpec,
    NotNestedError,
    TestFamily,
    assemble,
    build_default_family,
    build_grid,
    contraction_check,
    exhaust,
    exhaustion_masks,
    measure_equality_check,
    sweep,
    vague_convergence_check,
)
from balayage.geometry import DiscreteMeasure, SignedMeasure


def test_three_point_exhaustion(tri):
    rep = exhaust(tri, [0, 0, 1.0], [tri.mask([0]), tri.mask([0, 1])])
    s0, s1 = rep.stages
    np.testing.assert_allclose(s0.result.swept.weights, [0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(s1.result.swept.weights, [1 / 3, 1 / 3, 0], atol=1e-15)
    assert s0.distance**2 == pytest.approx(0.75, abs=1e-12)
    assert s1.distance**2 == pytest.approx(2 / 3, abs=1e-12)
    np.testing.assert_allclose(s0.potential, [0.5, 0.25, 0.25], atol=1e-15)
    np.testing.assert_allclose(s1.potential, [0.5, 0.5, 1 / 3], atol=1e-15)
    assert np.all(s0.potential <= s1.potential)
    assert s0.step**2 == pytest.approx(1 / 12, abs=1e-12)
    assert rep.distances_nonincreasing()
    assert rep.final_gap <= 1e-15
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("stage,mask_size,distance,distance_sq")
    assert float(lines[1].split(",")[3]) == pytest.approx(0.75, abs=1e-12)
    assert float(lines[2].split(",")[3]) == pytest.approx(2 / 3, abs=1e-12)


def test_single_stage_equals_sweep(clip):
    rep = exhaust(clip, [0, 0, 1.0], [clip.mask([0, 1])])
    assert np.array_equal(rep.stages[0].result.swept.weights, sweep(clip, [0, 0, 1.0], [0, 1]).swept.weights)


def test_support_in_first_mask_is_fixed(tri):
    rep = exhaust(tri, [0.4, 0, 0], [tri.mask([0]), tri.mask([0, 1]), tri.mask([0, 1, 2])])
    for s in rep.stages:
        np.testing.assert_allclose(s.result.swept.weights, [0.4, 0, 0], atol=1e-15)
        assert s.distance == pytest.approx(0, abs=1e-12)


def test_rejects_non_nested(tri):
    with pytest.raises(NotNestedError):
        exhaust(tri, [0, 0, 1.0], [tri.mask([0, 1]), tri.mask([1, 2])])
    with pytest.raises(NotNestedError):
        contraction_check(tri, [0, 0, 1.0], [2], [0, 1])


def test_contraction_examples(tri):
    lhs, rhs, ok = contraction_check(tri, [0, 0, 1.0], [0], [0, 1])
    assert lhs == pytest.approx(1 / 12, abs=1e-12) and rhs == pytest.approx(1 / 12, abs=1e-12) and ok
    lhs, rhs, ok = contraction_check(tri, [0, 0, 1.0], [0, 1], [0, 1])
    assert lhs == 0 and rhs == 0 and ok
    lhs, rhs, ok = contraction_check(tri, [0, 0, 1.0], [], [0, 1])
    x = np.array([1 / 3, 1 / 3, 0])
    assert lhs == pytest.approx(x @ tri.gram @ x, abs=1e-14)
    assert rhs == pytest.approx(1.0 - 2 / 3, abs=1e-14)
    assert lhs == pytest.approx(rhs, abs=1e-14) and ok


def test_exhaustion_masks_on_grid():
    g = build_grid([0, 0, 0], [1, 1, 1], 8)
    f = assemble(KernelSpec("newtonian"), g)
    A = f.mask(np.flatnonzero(g.points[:, 0] > 0.3))
    masks = exhaustion_masks(f, A, [0.2, 0.4, 0.6, 0.8])
    assert masks[-1] == A
    assert all(masks[j].issubset(masks[j + 1]) and len(masks[j]) < len(masks[j + 1]) for j in range(len(masks) - 1))
    mu = np.zeros(f.size)
    mu[np.flatnonzero(g.points[:, 0] < 0.2)] = 1.0
    rep = exhaust(f, mu, masks)
    assert rep.distances_nonincreasing()
    assert rep.final_gap <= 2e-10 * rep.direct.scale


def test_default_family(tri):
    fam = build_default_family(tri)
    assert len(fam) == 3
    np.testing.assert_array_equal(fam.potentials(tri), tri.gram)
    assert "span" in fam.provenance


def test_vague_constant_sequence(tri):
    nu = [0.2, 0.3, 0.1]
    v = vague_convergence_check(tri, build_default_family(tri), [nu, nu], nu, 1e-12)
    assert v.passed and v.worst_residual == 0 and not v.span_deficient and v.views_agree


def test_vague_shrinking_bump(tri):
    nu0 = np.array([0.2, 0.3, 0.1])
    seq = [nu0 + np.eye(3)[1] / k for k in range(1, 1001)]
    v = vague_convergence_check(tri, build_default_family(tri), seq, nu0, 1e-2)
    np.testing.assert_allclose(v.residuals, tri.gram[:, 1] / 1000, rtol=1e-9)
    assert v.passed and v.views_agree


def test_vague_wrong_limit(tri):
    nu0 = np.array([0.2, 0.3, 0.1])
    seq = [nu0 + 0.1 * np.eye(3)[2] + np.eye(3)[0] / k for k in range(1, 2001)]
    v = vague_convergence_check(tri, build_default_family(tri), seq, nu0, 1e-3)
    assert not v.passed and v.worst == 2 and v.worst_residual == pytest.approx(0.1, abs=1e-3)
    assert not v.direct_passed


def test_empty_family(tri):
    with pytest.raises(ValueError):
        vague_convergence_check(tri, TestFamily([]), [[0, 0, 0]], [0, 0, 0], 1e-6)
    with pytest.raises(ValueError):
        measure_equality_check(tri, TestFamily([]), [0, 0, 0], [0, 0, 0], 1e-6)


def test_measure_equality(tri):
    fam = build_default_family(tri)
    mu = np.array([0.1, 0.2, 0.3])
    ok = measure_equality_check(tri, fam, mu, mu, 1e-12)
    assert ok.passed and not ok.span_deficient
    tol = 1e-6
    eps = 1.01 * tol / np.max(tri.gram[:, 1])
    bad = measure_equality_check(tri, fam, mu, mu + eps * np.eye(3)[1], tol)
    assert not bad.passed
    # a pass bounds the weight error by tol * ||P^-1||_inf
    tiny = 0.5 * tol / np.linalg.norm(tri.gram, ord=np.inf)
    near = mu + tiny * np.array([1.0, -1.0, 1.0])
    v = measure_equality_check(tri, fam, mu, near, tol)
    assert v.passed and np.max(np.abs(near - mu)) <= v.weight_error_bound


def test_degenerate_family_is_flagged(tri):
    mu = np.array([1.0, 0, 0])
    nu = np.array([0, 1.0, 0])
    # lam with potential orthogonal to mu - nu: k lam = (1, 1, c)
    lam = np.linalg.solve(tri.gram, [1.0, 1.0, 0.0])
    hj = SignedMeasure(DiscreteMeasure(np.maximum(lam, 0)), DiscreteMeasure(np.maximum(-lam, 0)))
    v = measure_equality_check(tri, TestFamily([hj], "one member"), mu, nu, 1e-12)
    assert v.passed and v.span_deficient and v.weight_error_bound == float("inf")
