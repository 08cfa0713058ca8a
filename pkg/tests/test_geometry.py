import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import cKDTree

from balayage import (
    DegenerateGeometryError,
    DiscreteMeasure,
    DiscreteSpace,
    GeometryError,
    RegionMask,
    SignedMeasure,
    SpaceMismatchError,
    UnsupportedDimensionError,
    ball_mask,
    box_mask,
    build_grid,
    build_sphere,
    hahn_jordan,
    mask_from_predicate,
)
from balayage.geometry import dumps, format_float, measure_from_dict, measure_to_dict, space_from_dict, space_to_dict


def test_grid_single_cell():
    g = build_grid([0, 0, 0], [1, 1, 1], 1)
    assert g.size == 1
    np.testing.assert_array_equal(g.points[0], [0.5, 0.5, 0.5])
    assert g.cell_weights[0] == 1.0


def test_grid_unit_interval():
    g = build_grid([0.0], [1.0], 4)
    np.testing.assert_allclose(g.points[:, 0], [0.125, 0.375, 0.625, 0.875], rtol=0, atol=1e-15)
    np.testing.assert_allclose(g.cell_weights, 0.25)


def test_grid_unit_square():
    g = build_grid([0, 0], [1, 1], 10)
    assert g.size == 100
    np.testing.assert_allclose(g.cell_weights, 0.01)
    d, _ = cKDTree(g.points).query(g.points, k=2)
    assert d[:, 1].min() == pytest.approx(0.1, abs=1e-12)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=3), st.data())
@settings(max_examples=40, deadline=None)
def test_grid_count_and_volume(res, data):
    lo = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=len(res), max_size=len(res))))
    side = np.array(data.draw(st.lists(st.floats(0.1, 4), min_size=len(res), max_size=len(res))))
    g = build_grid(lo, lo + side, res)
    assert g.size == int(np.prod(res))
    assert math.isclose(g.cell_weights.sum(), float(np.prod(side)), rel_tol=1e-12)


def test_grid_degenerate_box():
    with pytest.raises(DegenerateGeometryError):
        build_grid([0, 0], [1, 0], 4)


def test_sphere_four_points():
    s = build_sphere([0, 0, 0], 1.0, 4)
    assert s.size == 4
    np.testing.assert_allclose(s.cell_weights, math.pi)
    assert s.cell_dim == 2


def test_sphere_membership():
    s = build_sphere([0, 0, 0], 2.0, 100)
    np.testing.assert_allclose(np.linalg.norm(s.points, axis=1), 2.0, rtol=0, atol=1e-12)


def test_sphere_quasi_uniform():
    s = build_sphere([0, 0, 0], 1.0, 2000)
    d, _ = cKDTree(s.points).query(s.points, k=2)
    assert d[:, 1].max() <= 2 * d[:, 1].min()


def test_sphere_needs_three_dimensions():
    with pytest.raises(UnsupportedDimensionError):
        build_sphere([0, 0], 1.0, 10)
    with pytest.raises(GeometryError):
        build_sphere([0, 0, 0], 1.0, 3)


def test_predicate_masks():
    g = build_grid([0.0], [1.0], 4)
    assert mask_from_predicate(g, lambda p: True) == g.full_mask()
    assert len(mask_from_predicate(g, lambda p: False)) == 0
    assert mask_from_predicate(g, lambda p: p[0] < 0.5).indices.tolist() == [0, 1]


def test_ball_and_box_masks():
    g = build_grid([0, 0], [1, 1], 4)
    assert len(box_mask(g, [0, 0], [0.5, 0.5])) == 4
    assert ball_mask(g, [0.125, 0.125], 0.01).indices.tolist() == [0]


@given(st.integers(1, 30), st.data())
def test_mask_complement_partition(n, data):
    idx = data.draw(st.lists(st.integers(0, n - 1), unique=True))
    m = RegionMask("s", idx)
    c = m.complement(n)
    assert m.union(c).indices.tolist() == list(range(n))
    assert len(m.intersection(c)) == 0
    assert np.all(np.diff(m.indices) > 0)


def test_mask_rejects_negative_indices():
    with pytest.raises(GeometryError):
        RegionMask("s", [-1])


def test_space_rejects_duplicates():
    with pytest.raises(DegenerateGeometryError):
        DiscreteSpace([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]], [1, 1, 1])
    with pytest.raises(GeometryError):
        DiscreteSpace([[0.0], [1.0]], [1.0, 0.0])


def test_space_is_immutable():
    s = build_grid([0.0], [1.0], 4)
    with pytest.raises(ValueError):
        s.points[0, 0] = 3.0


def test_measure_rejects_negative():
    with pytest.raises(GeometryError):
        DiscreteMeasure([1.0, -0.5])


def test_hahn_jordan_examples():
    hj = hahn_jordan([1, -2, 0])
    np.testing.assert_array_equal(hj.plus.weights, [1, 0, 0])
    np.testing.assert_array_equal(hj.minus.weights, [0, 2, 0])
    assert np.all(hahn_jordan([0.0, 3.0]).minus.weights == 0)
    hj = hahn_jordan([-3.0])
    assert hj.plus.weights[0] == 0 and hj.minus.weights[0] == 3
    assert hj.weights[0] == -3.0


def test_hahn_jordan_rejects_nonfinite():
    with pytest.raises(GeometryError):
        hahn_jordan([1.0, np.nan])


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40))
def test_hahn_jordan_roundtrip(xs):
    hj = hahn_jordan(xs)
    np.testing.assert_array_equal(hj.plus.weights - hj.minus.weights, np.asarray(xs, dtype=float))
    assert not np.any((hj.plus.weights > 0) & (hj.minus.weights > 0))


def test_signed_measure_needs_disjoint_parts():
    with pytest.raises(GeometryError):
        SignedMeasure(DiscreteMeasure([1.0, 0.0]), DiscreteMeasure([0.5, 0.0]))


def test_space_mismatch():
    a = build_grid([0.0], [1.0], 3)
    b = build_grid([0.0], [2.0], 3)
    with pytest.raises(SpaceMismatchError):
        measure_from_dict(measure_to_dict(a.measure([1, 0, 0])), b)


def test_point_mass_has_requested_mass():
    s = build_sphere([0, 0, 0], 1.0, 10)
    assert s.total_mass(s.point_mass(3, 0.7)) == pytest.approx(0.7, rel=1e-15)


def test_json_roundtrip_is_exact():
    s = build_sphere([0.1, 0, 0], 1.3, 17)
    text = dumps(space_to_dict(s))
    back = space_from_dict(json.loads(text))
    np.testing.assert_array_equal(back.points, s.points)
    np.testing.assert_array_equal(back.cell_weights, s.cell_weights)
    assert back.id == s.id
    m = s.measure(np.linspace(0, 1, 17))
    assert np.array_equal(measure_from_dict(json.loads(dumps(measure_to_dict(m))), s).weights, m.weights)


def test_format_float_seventeen_digits():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.0) == "2.0"
    with pytest.raises(ValueError):
        format_float(float("inf"))
