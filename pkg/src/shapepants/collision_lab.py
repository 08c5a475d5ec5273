"""Planar three-body integration in Jacobi coordinates with a 1/r^2 potential.

``zeta1 = x1 - x2`` and ``zeta2 = x3 - c12`` (``c12`` the centre of mass of
bodies 1 and 2).  The Lagrangian is
``(mu1 |zdot1|^2 + mu2 |zdot2|^2) / 2 + U`` with
``U = m1 m2 / r^2 + W``, ``r = |zeta1|`` and
``W = m1 m3 / |x1 - x3|^2 + m2 m3 / |x2 - x3|^2``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BoundViolated, CollisionSingularity, StepFailure
from .shape_geometry import MassTriple

EPS_STOP = 1e-6


@dataclass(frozen=True)
class JacobiMasses:
    m: MassTriple

    @property
    def mu1(self) -> float:
        return self.m.m1 * self.m.m2 / (self.m.m1 + self.m.m2)

    @property
    def mu2(self) -> float:
        return self.m.m3 * (self.m.m1 + self.m.m2) / self.m.total

    @property
    def a13(self) -> float:
        """``x1 - x3 = -zeta2 + a13 * zeta1``."""
        return self.m.m2 / (self.m.m1 + self.m.m2)

    @property
    def a23(self) -> float:
        """``x2 - x3 = -zeta2 + a23 * zeta1``."""
        return -self.m.m1 / (self.m.m1 + self.m.m2)


@dataclass(frozen=True)
class FullState:
    zeta1: np.ndarray
    zeta2: np.ndarray
    zdot1: np.ndarray
    zdot2: np.ndarray

    @classmethod
    def from_vector(cls, y) -> "FullState":
        y = np.asarray(y, dtype=float)
        return cls(y[0:2].copy(), y[2:4].copy(), y[4:6].copy(), y[6:8].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.zeta1, self.zeta2, self.zdot1, self.zdot2])

    @property
    def r(self) -> float:
        return float(np.linalg.norm(self.zeta1))

    @property
    def rdot(self) -> float:
        return float(self.zeta1 @ self.zdot1) / self.r


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


# -- coordinates ----------------------------------------------------------------


def to_cartesian(state: FullState, m: MassTriple) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities ``(3, 2)`` with the centre of mass at rest at the origin."""
    m12 = m.m1 + m.m2
    out = []
    for z1, z2 in ((state.zeta1, state.zeta2), (state.zdot1, state.zdot2)):
        c12 = -m.m3 * z2 / m.total
        x3 = m12 * z2 / m.total
        x1 = c12 + (m.m2 / m12) * z1
        x2 = c12 - (m.m1 / m12) * z1
        out.append(np.array([x1, x2, x3]))
    return out[0], out[1]


def from_cartesian(x: np.ndarray, v: np.ndarray, m: MassTriple) -> FullState:
    m12 = m.m1 + m.m2

    def jac(p):
        c12 = (m.m1 * p[0] + m.m2 * p[1]) / m12
        return p[0] - p[1], p[2] - c12

    z1, z2 = jac(np.asarray(x, dtype=float))
    d1, d2 = jac(np.asarray(v, dtype=float))
    return FullState(z1, z2, d1, d2)


def separations(state: FullState, m: MassTriple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``x1 - x2``, ``x1 - x3``, ``x2 - x3``."""
    jm = JacobiMasses(m)
    return (state.zeta1, -state.zeta2 + jm.a13 * state.zeta1, -state.zeta2 + jm.a23 * state.zeta1)


# -- dynamics -------------------------------------------------------------------


def _accelerations(z1, z2, m: MassTriple, jm: JacobiMasses):
    d13 = -z2 + jm.a13 * z1
    d23 = -z2 + jm.a23 * z1
    r2 = z1 @ z1
    s13 = d13 @ d13
    s23 = d23 @ d23
    c13, c23 = m.m1 * m.m3, m.m2 * m.m3
    # gradient of W = c13/|d13|^2 + c23/|d23|^2
    g13 = -2.0 * c13 * d13 / s13**2
    g23 = -2.0 * c23 * d23 / s23**2
    dw_dz1 = jm.a13 * g13 + jm.a23 * g23
    dw_dz2 = -(g13 + g23)
    acc1 = -2.0 * (m.m1 + m.m2) * z1 / r2**2 + dw_dz1 / jm.mu1
    acc2 = dw_dz2 / jm.mu2
    return acc1, acc2, (r2, s13, s23)


def full_rhs(state: FullState | np.ndarray, m: MassTriple) -> np.ndarray:
    """Time derivative of ``(zeta1, zeta2, zdot1, zdot2)``."""
    y = state.vector() if isinstance(state, FullState) else np.asarray(state, dtype=float)
    jm = JacobiMasses(m)
    acc1, acc2, seps = _accelerations(y[0:2], y[2:4], m, jm)
    if min(seps) <= 0.0:
        raise CollisionSingularity("two bodies coincide")
    return np.concatenate([y[4:6], y[6:8], acc1, acc2])


def potential(state: FullState, m: MassTriple) -> float:
    s12, s13, s23 = (float(d @ d) for d in separations(state, m))
    return m.m1 * m.m2 / s12 + m.m1 * m.m3 / s13 + m.m2 * m.m3 / s23


def energy(state: FullState, m: MassTriple) -> float:
    jm = JacobiMasses(m)
    kin = 0.5 * (jm.mu1 * state.zdot1 @ state.zdot1 + jm.mu2 * state.zdot2 @ state.zdot2)
    return float(kin) - potential(state, m)


def angular_momentum(state: FullState, m: MassTriple) -> float:
    jm = JacobiMasses(m)
    return float(jm.mu1 * _cross(state.zeta1, state.zdot1) + jm.mu2 * _cross(state.zeta2, state.zdot2))


def inertia(state: FullState, m: MassTriple) -> float:
    jm = JacobiMasses(m)
    return float(jm.mu1 * state.zeta1 @ state.zeta1 + jm.mu2 * state.zeta2 @ state.zeta2)


def inertia_dot(state: FullState, m: MassTriple) -> float:
    jm = JacobiMasses(m)
    return float(2.0 * (jm.mu1 * state.zeta1 @ state.zdot1 + jm.mu2 * state.zeta2 @ state.zdot2))


def lagrange_jacobi_residual(state: FullState, m: MassTriple) -> float:
    """``Iddot - 4 H`` evaluated in extended precision from the equations of motion."""
    ld = np.longdouble
    z1 = state.zeta1.astype(ld)
    z2 = state.zeta2.astype(ld)
    d1 = state.zdot1.astype(ld)
    d2 = state.zdot2.astype(ld)
    jm = JacobiMasses(m)
    mu1, mu2 = ld(jm.mu1), ld(jm.mu2)
    a13, a23 = ld(jm.a13), ld(jm.a23)
    m1, m2, m3 = ld(m.m1), ld(m.m2), ld(m.m3)
    d13 = -z2 + a13 * z1
    d23 = -z2 + a23 * z1
    r2, s13, s23 = z1 @ z1, d13 @ d13, d23 @ d23
    g13 = -2 * m1 * m3 * d13 / s13**2
    g23 = -2 * m2 * m3 * d23 / s23**2
    acc1 = -2 * (m1 + m2) * z1 / r2**2 + (a13 * g13 + a23 * g23) / mu1
    acc2 = -(g13 + g23) / mu2
    kin2 = mu1 * (d1 @ d1) + mu2 * (d2 @ d2)
    iddot = 2 * kin2 + 2 * (mu1 * (z1 @ acc1) + mu2 * (z2 @ acc2))
    u = m1 * m2 / r2 + m1 * m3 / s13 + m2 * m3 / s23
    h = kin2 / 2 - u
    return float(iddot - 4 * h)


def j1(state: FullState) -> float:
    """``zeta1 ^ zdot1``, the (unweighted) angular momentum of the binary."""
    return float(_cross(state.zeta1, state.zdot1))


# -- integration ------------------------------------------------------------------


@dataclass
class Timeline:
    t: np.ndarray
    y: np.ndarray
    stop: str
    masses: MassTriple
    r: np.ndarray = field(default_factory=lambda: np.zeros(0))
    J1: np.ndarray = field(default_factory=lambda: np.zeros(0))
    H: np.ndarray = field(default_factory=lambda: np.zeros(0))
    I: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Iddot_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    J: np.ndarray = field(default_factory=lambda: np.zeros(0))
    solution: object = None

    def state(self, i: int) -> FullState:
        return FullState.from_vector(self.y[i])

    @property
    def rdot(self) -> np.ndarray:
        return np.sum(self.y[:, 0:2] * self.y[:, 4:6], axis=1) / self.r

    @property
    def Idot(self) -> np.ndarray:
        jm = JacobiMasses(self.masses)
        return 2.0 * (jm.mu1 * np.sum(self.y[:, 0:2] * self.y[:, 4:6], axis=1)
                      + jm.mu2 * np.sum(self.y[:, 2:4] * self.y[:, 6:8], axis=1))

    @property
    def Iddot(self) -> np.ndarray:
        return 4.0 * self.H + self.Iddot_residual

    def lagrange_jacobi_drift(self) -> float:
        """Largest ``|Idot(t) - Idot(0) - 4 int_0^t H|`` along the run."""
        from scipy.integrate import cumulative_trapezoid

        integral = cumulative_trapezoid(4.0 * self.H, self.t, initial=0.0)
        return float(np.max(np.abs(self.Idot - self.Idot[0] - integral)))

    def collision_time(self) -> float | None:
        return float(self.t[-1]) if self.stop == "collision" else None


def integrate_full(state: FullState, m: MassTriple, t_max: float, tol: float = 1e-12,
                   eps_stop: float = EPS_STOP, escape_radius: float = 1e3,
                   t_eval=None) -> Timeline:
    """Adaptive integration until ``t_max``, binary collision or escape."""
    y0 = state.vector()

    def collision(t, y, m):
        # aim slightly inside eps_stop so the stopped state satisfies r < eps_stop
        return min(np.linalg.norm(d) for d in separations(FullState.from_vector(y), m)) - 0.999 * eps_stop

    collision.terminal = True
    collision.direction = -1

    def escape(t, y, m):
        return escape_radius - max(np.linalg.norm(y[0:2]), np.linalg.norm(y[2:4]))

    escape.terminal = True
    try:
        sol = solve_ivp(lambda t, y, m: full_rhs(y, m), (0.0, t_max), y0, method="DOP853", rtol=tol,
                        atol=tol * 1e-3, events=[collision, escape], args=(m,), t_eval=t_eval,
                        dense_output=True)
    except CollisionSingularity:
        raise StepFailure("integrator stepped through a collision") from None
    if sol.status == -1:
        raise StepFailure(sol.message)
    stop = "time_up"
    t, y = sol.t, sol.y.T
    if sol.t_events[0].size:
        stop = "collision"
        if t_eval is not None:
            t = np.append(t, sol.t_events[0][0])
            y = np.vstack([y, sol.y_events[0][0]])
    elif sol.t_events[1].size:
        stop = "escape"
    states = [FullState.from_vector(row) for row in y]
    return Timeline(
        t=t, y=y, stop=stop, masses=m,
        r=np.linalg.norm(y[:, 0:2], axis=1),
        J1=np.array([j1(s) for s in states]),
        H=np.array([energy(s, m) for s in states]),
        I=np.array([inertia(s, m) for s in states]),
        Iddot_residual=np.array([lagrange_jacobi_residual(s, m) for s in states]),
        J=np.array([angular_momentum(s, m) for s in states]),
        solution=sol,
    )


def j1_drift_bound(timeline: Timeline) -> dict:
    """Empirical ``C`` in ``|dJ1/dt| <= C r`` from successive samples."""
    dt = np.diff(timeline.t)
    ok = dt > 0
    rate = np.abs(np.diff(timeline.J1))[ok] / dt[ok]
    r_mid = 0.5 * (timeline.r[1:] + timeline.r[:-1])[ok]
    ratio = rate / r_mid
    return {"C": float(ratio.max()) if ratio.size else 0.0,
            "median": float(np.median(ratio)) if ratio.size else 0.0,
            "samples": int(ratio.size)}


# -- collision bound experiments -------------------------------------------------


@dataclass(frozen=True)
class CollisionPredicate:
    J1_0: float
    r0: float
    delta: float
    Kstar: float

    def __post_init__(self) -> None:
        if self.r0 <= 0 or self.delta <= 0 or self.Kstar < 0:
            raise ValueError("r0 and delta must be positive and Kstar nonnegative")


def open_condition(pred: CollisionPredicate, m: MassTriple) -> bool:
    return 2.0 * (m.m1 + m.m2) - pred.J1_0**2 - pred.Kstar * pred.r0 > pred.delta**2


def _scale_to_zero_energy(z1, z2, d1, d2, m: MassTriple) -> FullState:
    st = FullState(z1, z2, d1, d2)
    jm = JacobiMasses(m)
    kin = 0.5 * (jm.mu1 * d1 @ d1 + jm.mu2 * d2 @ d2)
    if kin <= 0:
        raise ValueError("cannot reach zero energy from zero velocity")
    scale = math.sqrt(potential(st, m) / kin)
    return FullState(z1, z2, scale * d1, scale * d2)


def collinear_start(m: MassTriple, r0: float) -> FullState:
    """Collinear state with ``I = 1``, ``Idot = 0``, ``H = 0``, ``J = 0`` and ``rdot < 0``.

    Bodies 1 and 2 are ``r0`` apart with body 3 outside the pair on the same line.
    """
    jm = JacobiMasses(m)
    if jm.mu1 * r0 * r0 >= 1.0:
        raise ValueError("r0 too large for unit moment of inertia")
    q = math.sqrt((1.0 - jm.mu1 * r0 * r0) / jm.mu2)
    z1 = np.array([r0, 0.0])
    z2 = np.array([q, 0.0])
    u1 = -1.0
    u2 = -jm.mu1 * r0 * u1 / (jm.mu2 * q)
    return _scale_to_zero_energy(z1, z2, np.array([u1, 0.0]), np.array([u2, 0.0]), m)


def project_constraints(state: FullState, m: MassTriple, zero_J: bool = True,
                        zero_Idot: bool = True, unit_I: bool = True) -> FullState:
    """Impose ``I = 1``, ``J = 0``, ``Idot = 0`` and then ``H = 0``."""
    jm = JacobiMasses(m)
    z1, z2 = state.zeta1.copy(), state.zeta2.copy()
    if unit_I:
        scale = 1.0 / math.sqrt(inertia(state, m))
        z1, z2 = z1 * scale, z2 * scale
    v = np.concatenate([state.zdot1, state.zdot2])
    rows = []
    if zero_J:
        rows.append([-jm.mu1 * z1[1], jm.mu1 * z1[0], -jm.mu2 * z2[1], jm.mu2 * z2[0]])
    if zero_Idot:
        rows.append([jm.mu1 * z1[0], jm.mu1 * z1[1], jm.mu2 * z2[0], jm.mu2 * z2[1]])
    if rows:
        a = np.array(rows)
        v = v - a.T @ np.linalg.solve(a @ a.T, a @ v)
    return _scale_to_zero_energy(z1, z2, v[0:2], v[2:4], m)


def _near_collision_sample(m: MassTriple, epsilon: float, rng: np.random.Generator) -> FullState:
    """Zero-energy state with ``r < epsilon``, ``rdot < 0`` and the energy carried by the binary."""
    jm = JacobiMasses(m)
    r0 = rng.uniform(0.2, 1.0) * epsilon
    a = rng.uniform(0.0, 2.0 * math.pi)
    b = a + rng.uniform(0.3, math.pi - 0.3) * rng.choice([-1.0, 1.0])
    z1 = r0 * np.array([math.cos(a), math.sin(a)])
    q = math.sqrt(max(1.0 - jm.mu1 * r0 * r0, 0.5) / jm.mu2)
    z2 = q * np.array([math.cos(b), math.sin(b)])
    d2 = rng.normal(scale=0.5, size=2)
    j1_0 = rng.uniform(-0.5, 0.5)
    base = FullState(z1, z2, np.zeros(2), d2)
    budget = 2.0 * (potential(base, m) - 0.5 * jm.mu2 * d2 @ d2) / jm.mu1
    tangential = j1_0 / r0
    rdot2 = budget - tangential**2
    if rdot2 <= 0:
        raise ValueError("sampled state cannot reach zero energy")
    rhat = z1 / r0
    that = np.array([-rhat[1], rhat[0]])
    d1 = -math.sqrt(rdot2) * rhat + tangential * that
    return FullState(z1, z2, d1, d2)


def calibrate_Kstar(m: MassTriple, epsilon: float = 0.1, samples: int = 40, seed: int = 0,
                    eps_stop: float = EPS_STOP) -> float:
    """Twice the largest ``|r^2 rdot^2 + J1(0)^2 - 2(m1+m2)| / r(0)`` seen on sampled runs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < samples:
        try:
            st = _near_collision_sample(m, epsilon, rng)
        except ValueError:
            continue
        r0, j0 = st.r, j1(st)
        tl = integrate_full(st, m, t_max=2.0 * r0 * r0, tol=1e-11, eps_stop=eps_stop)
        q = np.abs(tl.r**2 * tl.rdot**2 + j0 * j0 - 2.0 * (m.m1 + m.m2)) / r0
        worst = max(worst, float(q.max()))
        done += 1
    return 2.0 * worst


@dataclass
class BoundReport:
    r0: float
    delta: float
    Kstar: float
    J1_0: float
    open_condition: bool
    bound: float
    collided: bool
    t_collision: float | None
    min_minus_r_rdot: float
    lj_max_residual: float
    lj_drift: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def collision_bound_experiment(state: FullState, m: MassTriple, delta: float, Kstar: float,
                               eps_stop: float = EPS_STOP, tol: float = 1e-12,
                               raise_on_violation: bool = False) -> BoundReport:
    """Integrate and check collision before ``r0^2 / (2 delta)`` with ``delta <= -r rdot`` throughout."""
    r0 = state.r
    pred = CollisionPredicate(j1(state), r0, delta, Kstar)
    ok = open_condition(pred, m)
    if state.rdot >= 0:
        raise ValueError("the binary must be approaching (rdot < 0)")
    bound = r0 * r0 / (2.0 * delta)
    tl = integrate_full(state, m, t_max=1.5 * bound, tol=tol, eps_stop=eps_stop)
    collided = bool(tl.stop == "collision" and tl.r[-1] < eps_stop)
    t_c = tl.collision_time()
    mrr = float(np.min(-tl.r * tl.rdot))
    passed = bool(ok and collided and t_c is not None and t_c <= bound and mrr >= delta)
    report = BoundReport(r0, delta, Kstar, pred.J1_0, ok, bound, collided, t_c, mrr,
                         float(np.max(np.abs(tl.Iddot_residual))), tl.lagrange_jacobi_drift(), passed)
    if raise_on_violation and ok and not passed:
        raise BoundViolated(f"collision bound violated: {report.as_dict()}")
    return report


def perturbation_check(state: FullState, m: MassTriple, delta: float, Kstar: float,
                       n: int = 100, size: float = 1e-4, seed: int = 0) -> list[BoundReport]:
    """Reports for ``n`` random perturbations of ``state``, each moved back to zero energy."""
    rng = np.random.default_rng(seed)
    out = []
    base = state.vector()
    for _ in range(n):
        d = rng.normal(size=8)
        y = base + size * d / np.linalg.norm(d)
        st = FullState.from_vector(y)
        st = _scale_to_zero_energy(st.zeta1, st.zeta2, st.zdot1, st.zdot2, m)
        out.append(collision_bound_experiment(st, m, delta, Kstar))
    return out


# -- projection to the shape sphere -------------------------------------------------


def shape_projection(state: FullState, m: MassTriple) -> tuple[np.ndarray, np.ndarray]:
    """Unit vector on the shape sphere and its time derivative.

    The normalized squared sides ``s_k = 3 |side_k|^2 / sum |side_j|^2``
    fix ``(X, Y)``; ``Z = 4 sqrt(3) * area / sum |side_j|^2`` with the
    signed area of ``(x1, x2, x3)``.
    """
    x, v = to_cartesian(state, m)
    opp = [(1, 2), (0, 2), (0, 1)]
    d = np.array([x[i] - x[j] for i, j in opp])
    dv = np.array([v[i] - v[j] for i, j in opp])
    sq = np.sum(d * d, axis=1)
    dsq = 2.0 * np.sum(d * dv, axis=1)
    total, dtotal = sq.sum(), dsq.sum()
    s = 3.0 * sq / total
    ds = 3.0 * (dsq / total - sq * dtotal / total**2)
    area = 0.5 * _cross(x[1] - x[0], x[2] - x[0])
    darea = 0.5 * (_cross(v[1] - v[0], x[2] - x[0]) + _cross(x[1] - x[0], v[2] - v[0]))
    k = 4.0 * math.sqrt(3.0)
    X = 1.0 - s[0]
    Y = (-(1.0 - s[1]) - X / 2.0) * 2.0 / math.sqrt(3.0)
    Z = k * area / total
    dX = -ds[0]
    dY = (ds[1] - dX / 2.0) * 2.0 / math.sqrt(3.0)
    dZ = k * (darea / total - area * dtotal / total**2)
    return np.array([X, Y, Z]), np.array([dX, dY, dZ])


# -- export ---------------------------------------------------------------------------


def write_timeline_csv(tl: Timeline, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "J1", "H", "I", "Iddot"])
        for row in zip(tl.t, tl.r, tl.J1, tl.H, tl.I, tl.Iddot):
            w.writerow([repr(float(v)) for v in row])


def write_report_json(report: BoundReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.as_dict(), fh, indent=2)


__all__ = [
    "BoundReport", "CollisionPredicate", "FullState", "JacobiMasses", "Timeline", "angular_momentum",
    "calibrate_Kstar", "collinear_start", "collision_bound_experiment", "energy", "from_cartesian",
    "full_rhs", "inertia", "inertia_dot", "integrate_full", "j1", "j1_drift_bound",
    "lagrange_jacobi_residual", "open_condition", "perturbation_check", "potential",
    "project_constraints", "separations", "shape_projection", "to_cartesian",
]
