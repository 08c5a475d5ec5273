import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapepants.errors import CollisionSingularity
from shapepants.shape_geometry import (
    COLLISION_THETAS,
    LAGRANGE_NORTH,
    MassTriple,
    ShapePoint,
    collision_distance,
    collision_point,
    euler_point,
    gamma,
    potential,
    power_sums,
    round_distance,
    sides,
    sides_from_unit,
    squared_sides,
    to_unit,
)

angles = st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6)
longitudes = st.floats(0.0, 2.0 * math.pi)


def test_mass_triple_equal_masses():
    m = MassTriple.equal()
    assert m.d_m == pytest.approx(1.0, abs=1e-15)
    for k in (1, 2, 3):
        assert m.cyl_radius(k) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-15)
        assert m.reduced_mass(k) == pytest.approx(0.5)


def test_mass_triple_products_and_inverse():
    m = MassTriple(1.0, 1.0, 2.0)
    assert np.allclose(m.products, [2.0, 2.0, 1.0])
    back = MassTriple.from_products(m.products)
    assert np.allclose(back.masses, m.masses, atol=1e-14)


@pytest.mark.parametrize("bad", [(0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (1.0, float("nan"), 1.0)])
def test_mass_triple_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        MassTriple(*bad)


def test_mass_triple_parse():
    assert MassTriple.parse("1,2,3") == MassTriple(1.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        MassTriple.parse("1,2")


@pytest.mark.parametrize("k, theta, expected", [
    (1, 0.0, (1.0, 0.0)),
    (2, 0.0, (-0.5, -math.sqrt(3.0) / 2.0)),
    (1, math.pi, (-1.0, 0.0)),
])
def test_gamma_examples(k, theta, expected):
    assert gamma(k, theta) == pytest.approx(expected, abs=1e-15)


@given(longitudes)
def test_gamma_equilateral_frame(theta):
    g = [gamma(k, theta) for k in (1, 2, 3)]
    for i in range(3):
        assert g[i][0] ** 2 + g[i][1] ** 2 == pytest.approx(1.0, abs=1e-12)
        for j in range(3):
            if i != j:
                assert g[i][0] * g[j][0] + g[i][1] * g[j][1] == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("point, expected", [
    (ShapePoint(math.pi / 2, 1.234), (1.0, 1.0, 1.0)),
    (ShapePoint(0.0, math.pi), (2.0, 0.5, 0.5)),
    (ShapePoint(0.0, 0.0), (0.0, 1.5, 1.5)),
])
def test_squared_sides_examples(point, expected):
    s = squared_sides(point)
    assert s.as_array() == pytest.approx(expected, abs=1e-15)


@given(angles, longitudes)
def test_sides_sum_to_three_and_bounded(phi, theta):
    s = sides(phi, theta)
    assert s.sum() == pytest.approx(3.0, abs=1e-12)
    assert np.all(s >= -1e-15) and np.all(s <= 2.0 + 1e-15)


@given(angles, longitudes)
def test_sides_reflection_symmetries(phi, theta):
    s = sides(phi, theta)
    assert np.allclose(sides(-phi, theta), s, atol=1e-14)
    r = sides(phi, -theta)
    assert r[0] == pytest.approx(s[0], abs=1e-14)
    assert r[1] == pytest.approx(s[2], abs=1e-14)
    assert r[2] == pytest.approx(s[1], abs=1e-14)


@given(angles, longitudes)
def test_sides_from_unit_matches_chart(phi, theta):
    assert np.allclose(sides_from_unit(to_unit(phi, theta)), sides(phi, theta), atol=1e-13)


def test_collision_and_euler_points():
    for k in (1, 2, 3):
        s = squared_sides(collision_point(k)).as_array()
        assert s[k - 1] == pytest.approx(0.0, abs=1e-15)
        e = squared_sides(euler_point(k)).as_array()
        assert e[k - 1] == pytest.approx(2.0, abs=1e-15)
        assert sorted(e)[:2] == pytest.approx([0.5, 0.5], abs=1e-15)
    assert sorted(COLLISION_THETAS) == pytest.approx([0.0, 2 * math.pi / 3, 4 * math.pi / 3])


def test_potential_examples():
    eq = MassTriple.equal()
    assert potential(LAGRANGE_NORTH, eq) == pytest.approx(3.0)
    assert potential(np.array([2.0, 0.5, 0.5]), eq) == pytest.approx(4.5)
    assert potential(np.array([1.0, 1.0, 1.0]), MassTriple(1.0, 1.0, 2.0)) == pytest.approx(5.0)


def test_power_sums_examples():
    eq = MassTriple.equal()
    euler = np.array([2.0, 0.5, 0.5])
    assert power_sums(LAGRANGE_NORTH, eq, 2) == pytest.approx(3.0)
    assert power_sums(euler, eq, 2) == pytest.approx(8.25)
    assert power_sums(euler, eq, 3) == pytest.approx(16.125)
    with pytest.raises(ValueError):
        power_sums(euler, eq, 0)


def test_potential_rejects_collision():
    with pytest.raises(CollisionSingularity):
        potential(collision_point(2), MassTriple.equal())
    with pytest.raises(CollisionSingularity):
        potential(np.array([1e-12, 1.5, 1.5 - 1e-12]), MassTriple.equal())
    # a configurable exclusion radius
    with pytest.raises(CollisionSingularity):
        potential(np.array([1e-3, 1.5, 1.499]), MassTriple.equal(), exclusion=1e-2)


def test_collision_distance_examples():
    assert collision_distance(collision_point(1), 1) == pytest.approx(0.0, abs=1e-15)
    assert collision_distance(LAGRANGE_NORTH, 2) == pytest.approx(math.pi / 4)
    assert collision_distance(np.array([2.0, 0.5, 0.5]), 1) == pytest.approx(math.pi / 2)


@settings(max_examples=200)
@given(angles, longitudes, st.sampled_from([1, 2, 3]))
def test_collision_distance_is_great_circle_distance(phi, theta, k):
    n = to_unit(phi, theta)
    expected = float(round_distance(n, collision_point(k).unit))
    assert collision_distance(ShapePoint(phi, theta), k) == pytest.approx(expected, abs=1e-10)
