import csv
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from shapepants.collision_lab import (
    CollisionPredicate,
    FullState,
    angular_momentum,
    _near_collision_sample,
    calibrate_Kstar,
    collinear_start,
    collision_bound_experiment,
    energy,
    from_cartesian,
    inertia,
    inertia_dot,
    integrate_full,
    j1,
    j1_drift_bound,
    lagrange_jacobi_residual,
    open_condition,
    perturbation_check,
    project_constraints,
    shape_projection,
    to_cartesian,
    write_report_json,
    write_timeline_csv,
)
from shapepants.errors import BoundViolated
from shapepants.geodesic_flow import GeodesicState, integrate
from shapepants.jm_metric import conformal_factor
from shapepants.shape_geometry import MassTriple, sides_from_unit

EQ = MassTriple.equal()
M123 = MassTriple(1.0, 2.0, 3.0)


def random_state(m, seed=3):
    rng = np.random.default_rng(seed)
    return project_constraints(FullState(*rng.normal(size=(4, 2))), m)


@pytest.mark.parametrize("m", [EQ, M123])
def test_cartesian_round_trip_and_centre_of_mass(m):
    st = FullState(*np.random.default_rng(1).normal(size=(4, 2)))
    x, v = to_cartesian(st, m)
    masses = np.array([m.m1, m.m2, m.m3])
    assert np.allclose(masses @ x, 0.0, atol=1e-14)
    assert np.allclose(masses @ v, 0.0, atol=1e-14)
    back = from_cartesian(x, v, m)
    assert np.allclose(back.vector(), st.vector(), atol=1e-13)
    kin = 0.5 * np.sum(masses[:, None] * v * v)
    pot = sum(masses[i] * masses[j] / np.sum((x[i] - x[j]) ** 2) for i, j in ((0, 1), (0, 2), (1, 2)))
    assert energy(st, m) == pytest.approx(kin - pot, rel=1e-12)
    assert inertia(st, m) == pytest.approx(float(np.sum(masses[:, None] * x * x)), rel=1e-12)


@pytest.mark.parametrize("m", [EQ, M123])
def test_project_constraints(m):
    st = random_state(m)
    assert energy(st, m) == pytest.approx(0.0, abs=1e-12)
    assert inertia(st, m) == pytest.approx(1.0, abs=1e-12)
    assert angular_momentum(st, m) == pytest.approx(0.0, abs=1e-12)
    assert inertia_dot(st, m) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("m", [EQ, M123])
def test_integrals_and_lagrange_jacobi(m):
    st = random_state(m, seed=3)
    tl = integrate_full(st, m, 0.08, t_eval=np.linspace(0.0, 0.08, 101))
    assert tl.stop == "time_up"
    assert np.max(np.abs(tl.H - tl.H[0])) < 1e-8
    assert np.max(np.abs(tl.J - tl.J[0])) < 1e-8
    # pointwise identity in extended precision; the integrated form checks the trajectory itself
    assert np.max(np.abs(tl.Iddot_residual)) < 1e-6
    assert tl.lagrange_jacobi_drift() < 1e-4
    assert lagrange_jacobi_residual(st, m) == pytest.approx(0.0, abs=1e-9)


def test_collinear_start_constraints():
    st = collinear_start(EQ, 0.05)
    assert inertia(st, EQ) == pytest.approx(1.0)
    assert inertia_dot(st, EQ) == pytest.approx(0.0, abs=1e-12)
    assert energy(st, EQ) == pytest.approx(0.0, abs=1e-9)
    assert angular_momentum(st, EQ) == 0.0
    assert st.rdot < 0 and j1(st) == 0.0
    with pytest.raises(ValueError):
        collinear_start(EQ, 5.0)


def test_predicate_validation_and_open_condition():
    with pytest.raises(ValueError):
        CollisionPredicate(0.0, -1.0, 1.0, 0.0)
    assert open_condition(CollisionPredicate(0.0, 0.05, 1.0, 1.0), EQ)
    assert not open_condition(CollisionPredicate(0.0, 0.05, 3.0, 1.0), EQ)


def test_collision_bound_collinear():
    st = collinear_start(EQ, 0.05)
    rep = collision_bound_experiment(st, EQ, delta=1.0, Kstar=1.0, raise_on_violation=True)
    assert rep.open_condition and rep.collided and rep.passed
    assert rep.t_collision <= rep.bound == pytest.approx(0.05**2 / 2)
    assert rep.min_minus_r_rdot >= 1.0
    assert rep.lj_max_residual < 1e-6


def test_collision_bound_perturbations():
    reports = perturbation_check(collinear_start(EQ, 0.05), EQ, 1.0, 1.0, n=10, seed=2)
    assert all(r.passed for r in reports)


def test_violation_raises_only_when_predicate_holds():
    st = collinear_start(EQ, 0.05)
    rep = collision_bound_experiment(st, EQ, delta=2.1, Kstar=1.0, raise_on_violation=True)
    assert not rep.open_condition and not rep.passed
    # with K* = 0 the predicate ignores the third body and can overpromise
    rng = np.random.default_rng(0)
    states = []
    while len(states) < 6:
        try:
            states.append(_near_collision_sample(EQ, 0.5, rng))
        except ValueError:
            continue
    deltas = [0.999 * math.sqrt(4.0 - j1(s) ** 2) for s in states]
    reports = [collision_bound_experiment(s, EQ, d, 0.0) for s, d in zip(states, deltas)]
    bad = [i for i, r in enumerate(reports) if r.open_condition and not r.passed]
    assert bad
    with pytest.raises(BoundViolated):
        collision_bound_experiment(states[bad[0]], EQ, deltas[bad[0]], 0.0, raise_on_violation=True)
    receding = FullState(st.zeta1, st.zeta2, -st.zdot1, -st.zdot2)
    with pytest.raises(ValueError):
        collision_bound_experiment(receding, EQ, 1.0, 1.0)


def test_calibrated_kstar_and_drift_bound():
    k = calibrate_Kstar(EQ, samples=4, seed=1)
    assert 0.0 < k < 50.0
    tl = integrate_full(collinear_start(EQ, 0.05), EQ, 1e-3)
    assert tl.stop == "collision"
    info = j1_drift_bound(tl)
    assert info["samples"] > 0 and np.isfinite(info["C"])


@pytest.mark.parametrize("m", [EQ, M123])
def test_full_and_reduced_flows_agree(m):
    st = random_state(m)
    n0, dn0 = shape_projection(st, m)
    assert np.linalg.norm(n0) == pytest.approx(1.0, abs=1e-12)
    assert n0 @ dn0 == pytest.approx(0.0, abs=1e-12)
    f = conformal_factor(sides_from_unit(n0), m)
    w0 = dn0 / math.sqrt(f / 4.0 * (dn0 @ dn0))
    tl = integrate_full(st, m, 1.0, t_eval=np.linspace(0.0, 1.0, 101))
    tr = integrate(GeodesicState.from_embedded(n0, w0), m, 30.0, tol=1e-12, start_embedded=(n0, w0))
    s_grid, tn = tr.s, tr.newton_time
    err = 0.0
    for t, y in zip(tl.t, tl.y):
        if t > tn[-1]:
            break
        n, _ = shape_projection(FullState.from_vector(y), m)
        i = int(np.searchsorted(tn, t))
        s = 0.0 if i == 0 else brentq(lambda s: tr.solution.sol(s)[6] - t, s_grid[i - 1], s_grid[i])
        ng = tr.solution.sol(s)[0:3]
        err = max(err, float(np.linalg.norm(n - ng / np.linalg.norm(ng))))
    assert err < 1e-8


def test_exports(tmp_path):
    st = collinear_start(EQ, 0.05)
    tl = integrate_full(st, EQ, 1e-3)
    write_timeline_csv(tl, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "r", "J1", "H", "I", "Iddot"] and len(rows) == len(tl.t) + 1
    rep = collision_bound_experiment(st, EQ, 1.0, 1.0)
    write_report_json(rep, tmp_path / "r.json")
    assert json.load(open(tmp_path / "r.json"))["passed"] is True
