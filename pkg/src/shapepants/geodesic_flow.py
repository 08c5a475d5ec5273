"""JM geodesics on the pair of pants, with syzygy detection.

Trajectories are integrated in the ambient embedding of the unit sphere:
the state is a unit vector ``n`` and its derivative ``w = dn/ds`` with
respect to JM arclength, so ``(F / 4) |w|^2 = 1``.  This avoids the
coordinate singularity of ``(phi, theta)`` at the Lagrange points.  The
chart form of the equations is kept as :func:`geodesic_rhs` for
cross-checks away from the poles.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AtCollision, PoleSingularity, StepFailure
from .jm_metric import (
    chart_partials_log_conformal,
    conformal_factor,
    ell_coordinate,
    end_polar,
    grad_log_conformal,
    in_end_cell,
    mass_factor,
)
from .shape_geometry import (
    COLLISION_THETAS,
    COLLISION_VECTORS,
    DEFAULT_EXCLUSION,
    MassTriple,
    ShapePoint,
    check_collision,
    collision_distance,
    equator_letter,
    from_unit,
    sides,
    sides_from_unit,
    to_unit,
)

#: Integration stops once a side drops below this value (round radius ~7e-5).
DEFAULT_END_SIDE = 1e-8
POLE_GUARD = 1e-8
REGION_RADIUS = 0.3


@dataclass(frozen=True)
class GeodesicState:
    """Position and coordinate velocity per unit JM arclength."""

    point: ShapePoint
    v_phi: float
    v_theta: float
    s: float = 0.0

    @classmethod
    def from_direction(cls, point: ShapePoint, angle: float, m: MassTriple, s: float = 0.0):
        """Unit-speed state heading at ``angle`` from due east (increasing theta)."""
        f = conformal_factor(point, m)
        scale = 2.0 / math.sqrt(f)
        c = math.cos(point.phi)
        if c < POLE_GUARD:
            raise PoleSingularity("use from_embedded at a Lagrange point")
        return cls(point, scale * math.sin(angle), scale * math.cos(angle) / c, s)

    @classmethod
    def from_embedded(cls, n, w, s: float = 0.0) -> "GeodesicState":
        n = np.asarray(n, dtype=float)
        w = np.asarray(w, dtype=float)
        phi, theta = from_unit(n)
        phi, theta = float(phi), float(theta)
        e_phi, e_theta = _frame(phi, theta)
        c = math.cos(phi)
        v_theta = float(w @ e_theta) / c if c > POLE_GUARD else float("nan")
        return cls(ShapePoint(phi, theta), float(w @ e_phi), v_theta, s)

    def embedded(self) -> tuple[np.ndarray, np.ndarray]:
        phi, theta = self.point.phi, self.point.theta
        e_phi, e_theta = _frame(phi, theta)
        w = self.v_phi * e_phi + math.cos(phi) * self.v_theta * e_theta
        return to_unit(phi, theta), w

    def jm_speed(self, m: MassTriple) -> float:
        c = math.cos(self.point.phi)
        return math.sqrt(conformal_factor(self.point, m) * 0.25 * (self.v_phi**2 + c * c * self.v_theta**2))


def _frame(phi: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
    sp, cp, st, ct = math.sin(phi), math.cos(phi), math.sin(theta), math.cos(theta)
    return np.array([-sp * ct, -sp * st, cp]), np.array([-st, ct, 0.0])


@dataclass(frozen=True)
class SyzygyEvent:
    s_at: float
    theta_at: float
    letter: int
    sign: str
    phi_at: float = 0.0

    def label(self) -> str:
        return f"{self.letter}{self.sign}"


@dataclass
class Trajectory:
    samples: list[GeodesicState]
    events: list[SyzygyEvent]
    fate: str
    masses: MassTriple
    newton_time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    speed_drift: float = 0.0
    solution: object = None

    @property
    def s(self) -> np.ndarray:
        return np.array([st.s for st in self.samples])

    @property
    def units(self) -> np.ndarray:
        return np.array([st.point.unit for st in self.samples])

    @property
    def final(self) -> GeodesicState:
        return self.samples[-1]

    def word(self) -> str:
        return "".join(e.label() for e in self.events)

    def drift_rate(self) -> float:
        """Largest speed error divided by the arclength covered."""
        length = self.samples[-1].s - self.samples[0].s
        return self.speed_drift / max(abs(length), 1e-300)


# -- right-hand sides -----------------------------------------------------------


def geodesic_rhs(state: GeodesicState, m: MassTriple) -> tuple[float, float, float, float]:
    """``(dphi, dtheta, dv_phi, dv_theta)`` per unit JM arclength in the chart."""
    phi, theta = state.point.phi, state.point.theta
    if abs(phi) > math.pi / 2 - POLE_GUARD:
        raise PoleSingularity("chart equations are singular at the Lagrange points")
    check_collision(sides(phi, theta))
    lp, lt = chart_partials_log_conformal(phi, theta, m)
    sig_p, sig_t = 0.5 * lp, 0.5 * lt
    sp, cp = math.sin(phi), math.cos(phi)
    vp, vt = state.v_phi, state.v_theta
    dot = sig_p * vp + sig_t * vt
    norm2 = vp * vp + cp * cp * vt * vt
    ap = -sp * cp * vt * vt - 2.0 * dot * vp + norm2 * sig_p
    at = 2.0 * (sp / cp) * vp * vt - 2.0 * dot * vt + norm2 * sig_t / (cp * cp)
    return vp, vt, ap, at


def embedded_rhs(y: np.ndarray, m: MassTriple, exclusion: float = 0.0) -> np.ndarray:
    """Derivative of ``(n, w, t)`` where ``t`` is Newtonian time."""
    n, w = y[0:3], y[3:6]
    s = sides_from_unit(n)
    if np.any(s <= exclusion):
        raise AtCollision("trajectory reached a collision point")
    g = 0.5 * grad_log_conformal(n, m, exclusion=0.0)
    g = g - (g @ n) * n
    w2 = w @ w
    acc = -w2 * n - 2.0 * (g @ w) * w + w2 * g
    f = conformal_factor(s, m, exclusion=0.0)
    lam = mass_factor(s, m)
    dt = lam * lam / (math.sqrt(2.0) * f)
    return np.concatenate([w, acc, [dt]])


# -- crossing classification ------------------------------------------------------


def classify_crossing(theta: float, exclusion: float = DEFAULT_EXCLUSION) -> int:
    """Letter of the equatorial arc at longitude ``theta`` (the middle body)."""
    diff = np.abs((theta - COLLISION_THETAS + math.pi) % (2.0 * math.pi) - math.pi)
    if np.any(diff < exclusion):
        raise AtCollision(f"theta={theta} is a collision longitude")
    return int(equator_letter(theta))


# -- integration ------------------------------------------------------------------


TANGENCY_TOL = 1e-7


def _equator_event(s, y, m):
    return y[2]


def _end_events(end_side: float):
    events = []
    for k in range(3):
        def ev(s, y, m, k=k):
            return 1.0 - y[0:3] @ COLLISION_VECTORS[k] - end_side
        ev.terminal = True
        ev.direction = -1
        events.append(ev)
    return events


def integrate(start: GeodesicState, m: MassTriple, s_max: float, tol: float = 1e-10,
              sample_ds: float = 0.01, end_side: float = DEFAULT_END_SIDE,
              start_embedded: tuple | None = None, t0: float = 0.0) -> Trajectory:
    """Integrate the unit-speed geodesic from ``start`` for JM arclength ``s_max``.

    Negative ``s_max`` integrates backward.  ``start_embedded`` may supply
    ``(n, w)`` directly (needed at the poles, where ``start`` is only used
    for its arclength).
    """
    if start_embedded is None:
        n0, w0 = start.embedded()
    else:
        n0, w0 = (np.asarray(v, dtype=float) for v in start_embedded)
    check_collision(sides_from_unit(n0))
    y0 = np.concatenate([n0, w0, [t0]])
    s0 = start.s
    s1 = s0 + s_max
    ends = _end_events(end_side)
    events = [_equator_event] + ends
    rhs = lambda s, y, m: embedded_rhs(y, m)  # noqa: E731
    try:
        sol = solve_ivp(rhs, (s0, s1), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                        events=events, dense_output=True, args=(m,))
    except AtCollision:
        raise StepFailure("integration stepped onto a collision point") from None
    if sol.status == -1:
        raise StepFailure(sol.message)

    fate = "running"
    for k in range(3):
        if sol.t_events[1 + k].size:
            fate = f"entered_end({k + 1})"
    s_end = float(sol.t[-1])

    n_steps = max(int(math.ceil(abs(s_end - s0) / sample_ds)), 1)
    grid = np.linspace(s0, s_end, n_steps + 1)
    ys = sol.sol(grid).T
    ys[-1] = sol.y[:, -1]
    samples = [GeodesicState.from_embedded(y[0:3], y[3:6], float(si)) for si, y in zip(grid, ys)]
    speeds = np.sqrt(conformal_factor(sides_from_unit(ys[:, 0:3]), m, exclusion=0.0)
                     * 0.25 * np.sum(ys[:, 3:6] ** 2, axis=1))
    if not np.all(np.isfinite(speeds)):
        fate = "left_domain"

    ev_list = []
    forward = s_max >= 0
    for s_ev, y_ev in zip(sol.t_events[0], sol.y_events[0]):
        if abs(s_ev - s0) < 1e-14:
            continue
        # roundoff sign flips of n_z along an equatorial geodesic are not crossings
        if abs(y_ev[5]) < TANGENCY_TOL * np.linalg.norm(y_ev[3:6]):
            continue
        _, theta = from_unit(y_ev[0:3])
        down = (y_ev[5] < 0) == forward
        ev_list.append(SyzygyEvent(float(s_ev), float(theta), classify_crossing(float(theta)),
                                   "+" if down else "-", float(y_ev[2])))
    return Trajectory(samples, ev_list, fate, m, newton_time=ys[:, 6],
                      speed_drift=float(np.max(np.abs(speeds - 1.0))), solution=sol)


def end_state(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """Embedded ``(n, w)`` at the last sample, exact from the solver."""
    y = traj.solution.y[:, -1]
    return y[0:3].copy(), y[3:6].copy()


# -- fate heuristics ----------------------------------------------------------------


def detect_end_approach(traj: Trajectory, m: MassTriple, window: float = 2.0,
                        threshold: float = 3.0, n_points: int = 20) -> int | None:
    """End ``k`` whose ``ell`` grew monotonically over the final ``window`` past ``threshold``."""
    s = traj.s
    if s[-1] - s[0] < window:
        raise ValueError("trajectory shorter than the detection window")
    targets = np.linspace(s[-1] - window, s[-1], n_points)
    idx = np.searchsorted(s, targets).clip(0, len(s) - 1)
    pts = [traj.samples[i].point.unit for i in idx]
    for k in (1, 2, 3):
        if not all(in_end_cell(n, k) for n in pts):
            continue
        ells = []
        for n in pts:
            rho, chi = end_polar(n, k)
            ells.append(ell_coordinate(float(rho), float(chi), m, k))
        if ells[-1] > threshold and np.all(np.diff(ells) > 0):
            return k
    return None


def passes_through_region(traj: Trajectory, radius: float = REGION_RADIUS) -> bool:
    """Whether some sample lies outside all three collision balls of round radius ``radius``."""
    s = sides_from_unit(traj.units)
    rho = np.arcsin(np.sqrt(np.clip(s / 2.0, 0.0, 1.0)))
    return bool(np.any(np.all(rho > radius, axis=1)))


def min_collision_distance(traj: Trajectory) -> float:
    return float(min(np.min(collision_distance(sides_from_unit(traj.units), k)) for k in (1, 2, 3)))


# -- export -------------------------------------------------------------------------


def write_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "phi", "theta", "v_phi", "v_theta", "s1", "s2", "s3", "t_newton"])
        for st, t in zip(traj.samples, traj.newton_time):
            sd = sides(st.point.phi, st.point.theta)
            writer.writerow([repr(float(v)) for v in
                             (st.s, st.point.phi, st.point.theta, st.v_phi, st.v_theta, *sd, t)])


def events_json(traj: Trajectory) -> dict:
    return {
        "fate": traj.fate,
        "word": traj.word(),
        "speed_drift": traj.speed_drift,
        "events": [
            {"s": e.s_at, "theta": e.theta_at, "letter": e.letter, "sign": e.sign}
            for e in traj.events
        ],
    }


def write_events(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        json.dump(events_json(traj), fh, indent=2)


def plot_trace(traj_or_points, path, title: str = "") -> None:
    """SVG of the ``(theta, phi)`` trace with the equator and collision points."""
    from .plotting import trace_figure

    trace_figure(traj_or_points, path, title)
