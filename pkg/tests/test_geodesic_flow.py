import json
import math

import numpy as np
import pytest

from shapepants.errors import AtCollision, CollisionSingularity, PoleSingularity
from shapepants.geodesic_flow import (
    GeodesicState,
    classify_crossing,
    detect_end_approach,
    embedded_rhs,
    end_state,
    events_json,
    geodesic_rhs,
    integrate,
    min_collision_distance,
    plot_trace,
    write_csv,
    write_events,
)
from shapepants.jm_metric import end_polar_to_unit
from shapepants.realizer import symmetry_group
from shapepants.shape_geometry import (
    LAGRANGE_NORTH,
    MassTriple,
    ShapePoint,
    collision_point,
    euler_point,
)
from shapepants.syzygy import SignedWord, has_stutter

EQ = MassTriple.equal()
M123 = MassTriple(1.0, 2.0, 3.0)


def test_state_has_unit_jm_speed():
    for m in (EQ, M123):
        st = GeodesicState.from_direction(ShapePoint(0.3, 1.0), 0.7, m)
        assert st.jm_speed(m) == pytest.approx(1.0, abs=1e-14)
        n, w = st.embedded()
        back = GeodesicState.from_embedded(n, w)
        assert back.v_phi == pytest.approx(st.v_phi, abs=1e-14)
        assert back.v_theta == pytest.approx(st.v_theta, abs=1e-14)


def test_rhs_preserves_equator_and_meridian():
    st = GeodesicState.from_direction(ShapePoint(0.0, 2.5), 0.0, M123)
    assert geodesic_rhs(st, M123)[2] == pytest.approx(0.0, abs=1e-15)
    st = GeodesicState.from_direction(ShapePoint(0.4, math.pi), math.pi / 2, EQ)
    assert geodesic_rhs(st, EQ)[3] == pytest.approx(0.0, abs=1e-14)


def test_rhs_errors():
    with pytest.raises(PoleSingularity):
        geodesic_rhs(GeodesicState(LAGRANGE_NORTH, 1.0, 0.0), EQ)
    with pytest.raises(CollisionSingularity):
        geodesic_rhs(GeodesicState(collision_point(1), 1.0, 0.0), EQ)


@pytest.mark.parametrize("m", [EQ, M123])
def test_rhs_matches_finite_difference_of_exact_flow(m):
    st = GeodesicState.from_direction(ShapePoint(0.5, 2.0), 1.1, m)
    h = 1e-4
    fwd = integrate(st, m, h, tol=1e-13).final
    bwd = integrate(st, m, -h, tol=1e-13).final
    rhs = geodesic_rhs(st, m)
    fd = ((fwd.point.phi - bwd.point.phi) / (2 * h), (fwd.point.theta - bwd.point.theta) / (2 * h),
          (fwd.v_phi - bwd.v_phi) / (2 * h), (fwd.v_theta - bwd.v_theta) / (2 * h))
    assert np.allclose(fd, rhs, atol=1e-6, rtol=1e-6)


def test_embedded_rhs_agrees_with_chart_rhs():
    st = GeodesicState.from_direction(ShapePoint(-0.6, 4.0), -0.4, M123)
    n, w = st.embedded()
    acc = embedded_rhs(np.concatenate([n, w, [0.0]]), M123)[3:6]
    h = 1e-6
    a = GeodesicState.from_embedded(n + h * w + 0.5 * h * h * acc, w + h * acc)
    vp, vt, ap, at = geodesic_rhs(st, M123)
    assert (a.v_phi - st.v_phi) / h == pytest.approx(ap, rel=1e-4, abs=1e-4)
    assert (a.v_theta - st.v_theta) / h == pytest.approx(at, rel=1e-4, abs=1e-4)


@pytest.mark.parametrize("theta, letter", [(math.pi, 1), (math.pi + 1e-6, 1), (math.pi / 3, 2), (5 * math.pi / 3, 3)])
def test_classify_crossing(theta, letter):
    assert classify_crossing(theta) == letter


def test_classify_crossing_matches_argmax_of_sides():
    for theta in np.linspace(0.01, 2 * math.pi - 0.01, 97):
        s = [1.0 - math.cos(theta + (k - 1) * 2 * math.pi / 3) for k in (1, 2, 3)]
        if min(abs(theta - c) for c in (0, 2 * math.pi / 3, 4 * math.pi / 3, 2 * math.pi)) > 1e-6:
            assert classify_crossing(theta) == int(np.argmax(s)) + 1


def test_classify_crossing_rejects_collision():
    with pytest.raises(AtCollision):
        classify_crossing(2 * math.pi / 3)


def test_equatorial_geodesic_stays_collinear():
    st = GeodesicState.from_direction(euler_point(1), 0.0, M123)
    tr = integrate(st, M123, 3.0)
    assert max(abs(s.point.phi) for s in tr.samples) < 1e-9
    assert tr.events == []


def test_meridian_geodesic_stays_isosceles():
    st = GeodesicState.from_direction(euler_point(1), math.pi / 2, EQ)
    tr = integrate(st, EQ, 10.0)
    assert np.max(np.abs(tr.units[:, 1])) < 1e-9


def test_generic_geodesic_properties():
    st = GeodesicState.from_direction(ShapePoint(0.2, 1.0), 0.9, EQ)
    tr = integrate(st, EQ, 40.0)
    assert tr.drift_rate() < 1e-8
    assert len(tr.events) >= 3
    s_ev = [e.s_at for e in tr.events]
    assert np.all(np.diff(s_ev) > 0)
    signs = [e.sign for e in tr.events]
    assert all(a != b for a, b in zip(signs, signs[1:]))
    assert all(abs(e.phi_at) < 1e-10 for e in tr.events)
    # geodesic bigons cannot exist, so no segment stutters
    word = SignedWord(tuple(e.letter for e in tr.events))
    assert not has_stutter(word.letters)
    t = tr.newton_time
    assert np.all(np.diff(t) > 0)


def test_sign_convention():
    # heading south across the equator is a '+' crossing
    st = GeodesicState.from_direction(ShapePoint(0.1, math.pi), -math.pi / 2, EQ)
    tr = integrate(st, EQ, 0.5)
    assert tr.events[0].label() == "1+"
    tr = integrate(st, EQ, -0.5)
    assert tr.events == [] or tr.events[0].sign == "-"


def test_time_reversal():
    m = M123
    st = GeodesicState.from_direction(ShapePoint(0.3, 2.0), 0.4, m)
    tr = integrate(st, m, 6.0, tol=1e-12)
    n, w = end_state(tr)
    back = integrate(GeodesicState.from_embedded(n, -w), m, 6.0, tol=1e-12, start_embedded=(n, -w))
    n2, _ = end_state(back)
    assert np.linalg.norm(n2 - st.point.unit) < 1e-6


def test_symmetry_equivariance_equal_masses():
    st = GeodesicState.from_direction(ShapePoint(0.3, 2.0), 0.4, EQ)
    n0, w0 = st.embedded()
    base = integrate(st, EQ, 5.0, tol=1e-12, start_embedded=(n0, w0))
    for g in symmetry_group():
        n, w = g @ n0, g @ w0
        tr = integrate(GeodesicState.from_embedded(n, w), EQ, 5.0, tol=1e-12, start_embedded=(n, w))
        assert np.max(np.abs(tr.units - base.units @ g.T)) < 1e-8


def test_pole_start_through_embedding():
    n = LAGRANGE_NORTH.unit
    w = 2.0 / math.sqrt(3.0) * np.array([1.0, 0.0, 0.0])
    tr = integrate(GeodesicState.from_embedded(n, w), EQ, 2.0, start_embedded=(n, w))
    assert tr.speed_drift < 1e-9


def test_radial_infall_enters_end_and_is_detected():
    k = 2
    n = end_polar_to_unit(k, 0.2, 0.8)
    # unit-speed velocity pointing at the collision
    e = np.array([math.cos(-2 * math.pi / 3), math.sin(-2 * math.pi / 3), 0.0])
    d = e - (e @ n) * n
    d /= np.linalg.norm(d)
    st0 = GeodesicState.from_embedded(n, d)
    w = d * 1.0 / st0.jm_speed(EQ)
    tr = integrate(GeodesicState.from_embedded(n, w), EQ, 30.0, start_embedded=(n, w))
    assert tr.fate == f"entered_end({k})"
    assert detect_end_approach(tr, EQ) == k
    assert min_collision_distance(tr) < 1e-4


def test_equatorial_solution_toward_collision_is_detected():
    st = GeodesicState.from_direction(euler_point(1), 0.0, EQ)
    tr = integrate(st, EQ, 30.0)
    assert tr.fate.startswith("entered_end")
    k = int(tr.fate[-2])
    assert detect_end_approach(tr, EQ) == k


def test_bounded_segment_is_not_an_end_approach():
    st = GeodesicState.from_direction(ShapePoint(0.6, 0.5), 0.2, EQ)
    tr = integrate(st, EQ, 3.0)
    assert detect_end_approach(tr, EQ) is None
    with pytest.raises(ValueError):
        detect_end_approach(tr, EQ, window=10.0)


def test_exports(tmp_path):
    st = GeodesicState.from_direction(ShapePoint(0.2, 1.0), 0.9, EQ)
    tr = integrate(st, EQ, 5.0, sample_ds=0.1)
    write_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "s,phi,theta,v_phi,v_theta,s1,s2,s3,t_newton"
    assert len(lines) == len(tr.samples) + 1
    write_events(tr, tmp_path / "e.json")
    data = json.loads((tmp_path / "e.json").read_text())
    assert data == json.loads(json.dumps(events_json(tr)))
    assert data["word"] == tr.word()
    plot_trace(tr, tmp_path / "t.svg", "trace")
    svg = (tmp_path / "t.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg
    plot_trace(tr, tmp_path / "t2.svg", "trace")
    assert (tmp_path / "t2.svg").read_text() == svg
