import numpy as np
import pytest

from balayage import (
    KernelSpec,
    assemble,
    build_grid,
    KernelDomainError,
    SolveOptions,
    brute_sweep,
    compare,
    newtonian_sphere_mass,
    random_instance,
    refinement_study,
    sweep,
)
from balayage.oracle import sphere_source_space


def test_brute_examples(two, clip):
    assert brute_sweep(two, [0, 1], [0]).weights.tolist() == [0.5, 0.0]
    np.testing.assert_allclose(brute_sweep(clip, [0, 0, 1], [0, 1]).weights, [0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(brute_sweep(clip, [0.2, 0, 0.3], [0, 2]).weights, [0.2, 0, 0.3], atol=1e-14)


def test_compare_identical(two):
    assert compare(brute_sweep(two, [0, 1], [0]), brute_sweep(two, [0, 1], [0])).discrepancy == 0


def test_compare_shape_mismatch():
    with pytest.raises(ValueError):
        compare(np.zeros(2), np.zeros(3))


def test_flag_threshold_is_ten_times_main_tolerance():
    ref = np.array([1.0, 0.5, 0.0])
    assert compare(ref + [0.02, 0, 0], ref, main_tolerance=1e-3).flagged
    assert not compare(ref + [0.005, 0, 0], ref, main_tolerance=1e-3).flagged


def test_loose_solve_is_flagged():
    f = assemble(KernelSpec("riesz", alpha=1.5), build_grid([0, 0], [1, 1], 14))
    rng = np.random.default_rng(1)
    mu = rng.random(f.size)
    A = f.mask(np.flatnonzero(rng.random(f.size) < 0.5))
    loose = sweep(f, mu, A, SolveOptions(tolerance=1e-2, method="projected_gradient"))
    assert compare(loose.swept, sweep(f, mu, A).swept).flagged


def test_random_agreement_and_optimality():
    for seed in range(200):
        inst = random_instance(seed)
        res = sweep(inst.form, inst.mu, inst.mask)
        ref = brute_sweep(inst.form, inst.mu, inst.mask)
        assert compare(res.swept, ref).discrepancy <= 1e-9
        K = inst.form.gram
        d = inst.mu.weights - ref.weights
        assert np.sqrt(max(d @ K @ d, 0)) <= res.distance * (1 + 1e-12) + 1e-15


def test_fallback_warns():
    inst = random_instance(3, n_range=(70, 70))
    A = inst.form.mask(range(0, 70, 2))
    with pytest.warns(RuntimeWarning):
        ref = brute_sweep(inst.form, inst.mu, A)
    assert compare(sweep(inst.form, inst.mu, A).swept, ref).discrepancy <= 1e-8


def test_sphere_mass_domain():
    with pytest.raises(KernelDomainError):
        newtonian_sphere_mass(1.0, 1.0, 100)


def test_source_space_weights():
    s = sphere_source_space(1.0, 2.0, 100)
    assert s.size == 101 and s.total_mass(s.point_mass(100)) == pytest.approx(1.0)


def test_sphere_mass_2000():
    rep = newtonian_sphere_mass(1.0, 2.0, 2000)
    assert rep.oracle_value == 0.5
    assert abs(rep.main_value - 0.5) <= 0.02 * 0.5


def test_sphere_mass_decreases_with_distance():
    m = [newtonian_sphere_mass(1.0, y, 2000).main_value for y in (2.0, 4.0, 8.0)]
    assert m[0] > m[1] > m[2] > 0
    np.testing.assert_allclose(m, [0.5, 0.25, 0.125], rtol=0.02)


def test_near_source_mass_approaches_one():
    masses = [newtonian_sphere_mass(1.0, y, 2000).main_value for y in (1.2, 1.1, 1.05)]
    assert masses[0] < masses[1] < masses[2] < 1.0
    np.testing.assert_allclose(masses, [1 / 1.2, 1 / 1.1, 1 / 1.05], rtol=0.02)


def test_refinement_study_small():
    st = refinement_study(1.0, 2.0, (250, 1000, 4000))
    assert st.convergent
    assert abs(st.extrapolated - 0.5) < abs(st.masses[-1] - 0.5)
    assert st.to_csv().splitlines()[0] == "count,mass,error"
