import numpy as np
import pytest

from balayage import (
    EnergyForm,
    KernelSpec,
    assemble,
    build_grid,
    capacity,
    equilibrium,
    is_negligible,
    random_instance,
    sweep,
)
from balayage.kernel import energy_norm


def test_singleton():
    r = equilibrium(EnergyForm.from_gram([[2.0]]), [0])
    assert r.equilibrium.weights.tolist() == [1.0]
    assert r.energy == pytest.approx(2.0, abs=1e-15)
    assert r.capacity == pytest.approx(0.5, abs=1e-15)


def test_two_point(two):
    r = equilibrium(two, [0, 1])
    np.testing.assert_allclose(r.equilibrium.weights, [0.5, 0.5], atol=1e-15)
    assert r.energy == pytest.approx(1.5, abs=1e-12)
    assert r.capacity == pytest.approx(2 / 3, abs=1e-12)
    assert r.robin_constant == pytest.approx(1.5, abs=1e-12)
    assert capacity(two, [0, 1]) == pytest.approx(2 / 3, abs=1e-12)
    assert set(r.to_dict()) == {"capacity", "energy", "robin_constant", "equilibrium"}


def test_clip_singleton_mask(clip):
    assert capacity(clip, [0]) == pytest.approx(0.5, abs=1e-15)


def test_empty_and_negligible(two):
    assert capacity(two, []) == 0.0
    assert is_negligible(two.mask([]))
    assert not is_negligible(two.mask([1]))
    assert not is_negligible(two.mask([0, 1]))


def test_equilibrium_contract():
    g = build_grid([0, 0, 0], [1, 1, 1], 6)
    f = assemble(KernelSpec("newtonian"), g)
    rng = np.random.default_rng(11)
    for _ in range(20):
        A = f.mask(np.flatnonzero(rng.random(f.size) < 0.3))
        r = equilibrium(f, A)
        gam = r.equilibrium.weights
        assert f.mass(gam) == pytest.approx(1.0, abs=1e-12)
        assert np.all(gam[A.complement(f.size).indices] == 0) and np.all(gam >= 0)
        pot = (f.gram @ gam) / f.cell_weights
        supp = gam > 0
        assert np.max(np.abs(pot[supp] - r.robin_constant)) <= 1e-8 * r.robin_constant
        assert np.min(pot[A.indices]) >= r.robin_constant * (1 - 1e-8)
        assert r.capacity == pytest.approx(1 / r.energy, rel=1e-15)
        assert abs(r.robin_constant - r.energy) <= 1e-10 * r.energy
        back = sweep(f, gam, A).swept.weights
        assert energy_norm(f, back - gam) <= 1e-10 * energy_norm(f, gam)


def test_monotone_under_inclusion():
    for seed in range(50):
        inst = random_instance(seed, n_range=(3, 30))
        f = inst.form
        rng = np.random.default_rng(seed)
        Q = np.flatnonzero(rng.random(f.size) < 0.7)
        if Q.size == 0:
            continue
        A = Q[rng.random(Q.size) < 0.5]
        assert capacity(f, A) <= capacity(f, Q) + 1e-12


def test_ball_capacity_tracks_radius():
    # Newtonian capacity of a solid ball is its radius (normalised kernel 1/r)
    g = build_grid([-1, -1, -1], [1, 1, 1], 14)
    f = assemble(KernelSpec("newtonian"), g)
    A = np.flatnonzero(np.linalg.norm(g.points, axis=1) <= 0.8)
    c = capacity(f, A)
    assert c == pytest.approx(0.8, rel=0.05)
