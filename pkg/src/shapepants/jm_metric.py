"""The Jacobi-Maupertuis metric on the shape sphere and its curvature.

The metric is ``F * ds1^2`` where ``ds1^2 = (dphi^2 + cos^2 phi dtheta^2) / 4``
is the round metric of the equal-mass shape sphere and

    F = d(m) * Uhat * Lambda_m,   Lambda_m = d(m) * M / sum(p_k s_k),

with ``Uhat = sum(p_k / s_k)``.  For equal unit masses ``Lambda_m = 1`` and
``F`` is the potential itself.

Gaussian curvature is available in closed form and, independently, through
finite differences of ``log F`` in a chart rotated so that the evaluation
point sits on its equator (this keeps the oracle valid at the poles).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import CollisionSingularity, OutOfChart, StepTooLarge
from .shape_geometry import (
    COLLISION_VECTORS,
    DEFAULT_EXCLUSION,
    MassTriple,
    ShapePoint,
    _as_sides,
    check_collision,
    from_unit,
    sides,
    sides_from_unit,
    to_unit,
)

MAX_FD_STEP = 1e-2
DEFAULT_FD_STEP = 1e-4
#: Reference radius where the end coordinate ell vanishes.
ELL_REFERENCE_RHO = math.pi / 8
#: Largest radius fully inside every end cell (half the collision separation).
END_CELL_RHO = math.pi / 6


def _sigma_prime_pairs(p: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, float]:
    """``(sum' p_i p_j / (s_i s_j)^2, sum' p_i p_j)`` over ordered pairs i != j."""
    q = p / s**2
    pp_ss = 2.0 * (q[..., 0] * q[..., 1] + q[..., 1] * q[..., 2] + q[..., 0] * q[..., 2])
    pp = 2.0 * (p[0] * p[1] + p[1] * p[2] + p[0] * p[2])
    return pp_ss, float(pp)


def mass_factor(p, m: MassTriple):
    """Conformal factor ``Lambda_m`` between the mass metric and ``ds1^2``."""
    s = _as_sides(p)
    out = m.d_m * m.total / (m.products * s).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def conformal_factor(p, m: MassTriple, exclusion: float = DEFAULT_EXCLUSION):
    """JM conformal factor ``F`` relative to ``ds1^2``."""
    s = _as_sides(p)
    check_collision(s, exclusion)
    uhat = (m.products / s).sum(axis=-1)
    inertia = (m.products * s).sum(axis=-1)
    out = m.d_m**2 * m.total * uhat / inertia
    return float(out) if np.ndim(out) == 0 else out


def curvature_closed_form(p, m: MassTriple, exclusion: float = DEFAULT_EXCLUSION):
    """Gaussian curvature of the JM metric for arbitrary masses."""
    s = _as_sides(p)
    check_collision(s, exclusion)
    pm = m.products
    pp_ss, pp = _sigma_prime_pairs(pm, s)
    uhat = (pm / s).sum(axis=-1)
    inertia = (pm * s).sum(axis=-1)
    bracket = 3.0 * (pp_ss - pp * uhat**2 / inertia**2)
    factor = m.d_m**2 * m.total * uhat / inertia
    out = -bracket / (uhat**2 * factor)
    return float(out) if np.ndim(out) == 0 else out


def curvature_equal_mass(p, exclusion: float = DEFAULT_EXCLUSION):
    """Equal unit mass curvature ``-(3 sum' 1/s_i^2 s_j^2 - 2U^2) / U^3``."""
    s = _as_sides(p)
    check_collision(s, exclusion)
    pp_ss, _ = _sigma_prime_pairs(np.ones(3), s)
    u = (1.0 / s).sum(axis=-1)
    out = -(3.0 * pp_ss - 2.0 * u**2) / u**3
    return float(out) if np.ndim(out) == 0 else out


def kappa(p, m: MassTriple, exclusion: float = DEFAULT_EXCLUSION):
    """Sign governor: curvature is negative where this is positive."""
    s = _as_sides(p)
    check_collision(s, exclusion)
    pm = m.products
    pp_ss, pp = _sigma_prime_pairs(pm, s)
    uhat = (pm / s).sum(axis=-1)
    inertia = (pm * s).sum(axis=-1)
    out = np.sqrt(pp_ss) * inertia / uhat - math.sqrt(pp)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MetricSample:
    point: ShapePoint
    conformal_factor: float
    curvature: float
    kappa: float


def sample(p: ShapePoint, m: MassTriple) -> MetricSample:
    return MetricSample(p, conformal_factor(p, m), curvature_closed_form(p, m), kappa(p, m))


# -- analytic derivatives in the ambient embedding ---------------------------


def grad_log_conformal(n, m: MassTriple, exclusion: float = DEFAULT_EXCLUSION) -> np.ndarray:
    """Ambient gradient of ``log F`` at unit vectors ``n`` (not projected)."""
    n = np.asarray(n, dtype=float)
    s = sides_from_unit(n)
    check_collision(s, exclusion)
    pm = m.products
    uhat = (pm / s).sum(axis=-1)
    inertia = (pm * s).sum(axis=-1)
    grad_u = (pm / s**2) @ COLLISION_VECTORS
    grad_i = -pm @ COLLISION_VECTORS
    return grad_u / uhat[..., None] - np.multiply.outer(1.0 / inertia, grad_i)


def chart_partials_log_conformal(phi: float, theta: float, m: MassTriple) -> tuple[float, float]:
    """``(d/dphi, d/dtheta) log F`` from the closed-form side derivatives."""
    s = sides(phi, theta)
    check_collision(s)
    sp, cp = math.sin(phi), math.cos(phi)
    phases = theta + np.arange(3) * 2.0 * math.pi / 3.0
    ds_dphi = sp * np.cos(phases)
    ds_dtheta = cp * np.sin(phases)
    pm = m.products
    uhat = float((pm / s).sum())
    inertia = float((pm * s).sum())
    d_phi = -float((pm * ds_dphi / s**2).sum()) / uhat - float((pm * ds_dphi).sum()) / inertia
    d_theta = -float((pm * ds_dtheta / s**2).sum()) / uhat - float((pm * ds_dtheta).sum()) / inertia
    return d_phi, d_theta


# -- finite-difference oracles ------------------------------------------------


def _rotated_chart(center: np.ndarray):
    """Map ``(phi', theta')`` to unit vectors, with ``center`` at ``(0, 0)``."""
    e1 = center / np.linalg.norm(center)
    helper = np.array([0.0, 0.0, 1.0]) if abs(e1[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e3 = helper - (helper @ e1) * e1
    e3 /= np.linalg.norm(e3)
    e2 = np.cross(e3, e1)

    def chart(phi, theta):
        c = np.cos(phi)
        return (
            np.multiply.outer(c * np.cos(theta), e1)
            + np.multiply.outer(c * np.sin(theta), e2)
            + np.multiply.outer(np.sin(phi), e3)
        )

    return chart


def _check_fd(p: ShapePoint, h: float) -> np.ndarray:
    if h > MAX_FD_STEP:
        raise StepTooLarge(f"finite-difference step {h} exceeds {MAX_FD_STEP}")
    n = p.unit
    s = sides_from_unit(n)
    rho = np.arcsin(np.sqrt(np.clip(s / 2.0, 0.0, 1.0)))
    if np.any(rho <= 4.0 * h):
        raise CollisionSingularity("finite-difference stencil reaches a collision point")
    return n


def _fd_derivatives(func, p: ShapePoint, h: float):
    """Centered first derivatives and round Laplacian of ``func`` at ``p``."""
    chart = _rotated_chart(_check_fd(p, h))
    offsets = np.array([(0, 0), (h, 0), (-h, 0), (0, h), (0, -h)], dtype=float)
    vals = func(chart(offsets[:, 0], offsets[:, 1]))
    f0, fp, fm, ft, fb = vals
    c_half = math.cos(h / 2.0)
    # (4/c) d_phi(c d_phi f) + (4/c^2) d_theta^2 f at phi' = 0 where c = 1
    lap = 4.0 * (c_half * (fp - f0) - c_half * (f0 - fm)) / h**2 + 4.0 * (ft - 2.0 * f0 + fb) / h**2
    return (fp - fm) / (2.0 * h), (ft - fb) / (2.0 * h), lap


def _richardson(func, p, h, richardson):
    coarse = _fd_derivatives(func, p, h)
    if not richardson:
        return coarse
    fine = _fd_derivatives(func, p, h / 2.0)
    return tuple((4.0 * f - c) / 3.0 for f, c in zip(fine, coarse))


def curvature_fd_oracle(p: ShapePoint, m: MassTriple, h: float = DEFAULT_FD_STEP,
                        richardson: bool = False) -> float:
    """Curvature from ``(4 - Laplacian(log F) / 2) / F`` by finite differences."""
    func = lambda n: np.log(conformal_factor(sides_from_unit(n), m))  # noqa: E731
    _, _, lap = _richardson(func, p, h, richardson)
    return (4.0 - 0.5 * lap) / conformal_factor(p, m)


def laplacian_U_oracle(p: ShapePoint, m: MassTriple, h: float = DEFAULT_FD_STEP,
                       richardson: bool = False) -> float:
    func = lambda n: (m.products / sides_from_unit(n)).sum(axis=-1)  # noqa: E731
    return _richardson(func, p, h, richardson)[2]


def gradsq_U_oracle(p: ShapePoint, m: MassTriple, h: float = DEFAULT_FD_STEP,
                    richardson: bool = False) -> float:
    func = lambda n: (m.products / sides_from_unit(n)).sum(axis=-1)  # noqa: E731
    a, b, _ = _richardson(func, p, h, richardson)
    return 4.0 * (a * a + b * b)


def gradsq_identity(p, m: MassTriple) -> float:
    """``4 S`` with ``S`` the weighted closed form for ``|grad Uhat|^2 / 4``."""
    s = _as_sides(p)
    pm = m.products
    total = 2.0 * (pm**2 / s**3).sum() - (pm**2 / s**2).sum()
    for i in range(3):
        for j in range(3):
            if i != j:
                pij = pm[i] * pm[j]
                total += (-1.5 * pij / (s[i] ** 2 * s[j] ** 2) + 2.0 * pij / (s[i] * s[j] ** 2)
                          - pij / (s[i] * s[j]))
    return 4.0 * float(total)


# -- cylindrical ends ---------------------------------------------------------


def end_frame(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collision vector and the two axes from which ``chi`` is measured.

    ``chi = 0`` points toward the north Lagrange point, ``chi = pi / 2``
    along the equator in the direction of increasing longitude.
    """
    e = COLLISION_VECTORS[k - 1]
    a = np.array([0.0, 0.0, 1.0])
    b = np.cross(a, e)
    return e, a, b


def end_polar_to_unit(k: int, rho, chi) -> np.ndarray:
    e, a, b = end_frame(k)
    rho = np.asarray(rho, dtype=float)
    chi = np.asarray(chi, dtype=float)
    ring = np.multiply.outer(np.cos(chi), a) + np.multiply.outer(np.sin(chi), b)
    return np.multiply.outer(np.cos(2.0 * rho), e) + np.sin(2.0 * rho)[..., None] * ring


def end_polar(n, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Round polar coordinates ``(rho, chi)`` of ``n`` about collision ``k``."""
    e, a, b = end_frame(k)
    n = np.asarray(n, dtype=float)
    rho = 0.5 * np.arctan2(np.linalg.norm(np.cross(n, e), axis=-1), n @ e)
    chi = np.arctan2(n @ b, n @ a)
    return rho, chi


def end_sides(k: int, rho, chi) -> np.ndarray:
    """Sides at end polar coordinates, exact even when ``rho`` underflows ``1 - n.e_k``."""
    e, _, b = end_frame(k)
    rho = np.asarray(rho, dtype=float)
    chi = np.asarray(chi, dtype=float)
    c2, s2 = np.cos(2.0 * rho), np.sin(2.0 * rho)
    cols = []
    for i in range(3):
        if i == k - 1:
            cols.append(2.0 * np.sin(rho) ** 2 + 0.0 * chi)
        else:
            ei = COLLISION_VECTORS[i]
            cols.append(1.0 - c2 * (e @ ei) - s2 * np.sin(chi) * (b @ ei))
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def circumferential_factor(rho, chi, m: MassTriple, k: int):
    """``f = sqrt(F) * sin(2 rho) / 2``, the JM length per radian of ``chi``."""
    s = end_sides(k, rho, chi)
    return np.sqrt(conformal_factor(s, m, exclusion=0.0)) * 0.5 * np.sin(2.0 * np.asarray(rho))


def _radial_speed(u: float, chi: float, m: MassTriple, k: int) -> float:
    # integrand in u = log(rho): sqrt(F) * rho
    rho = math.exp(u)
    return math.sqrt(conformal_factor(end_sides(k, rho, chi), m, exclusion=0.0)) * rho


def ell_coordinate(rho: float, chi: float, m: MassTriple, k: int,
                   rho0: float = ELL_REFERENCE_RHO, tol: float = 1e-10) -> float:
    """JM length along the radial line from ``rho`` out to ``rho0``."""
    if rho <= 0:
        raise CollisionSingularity("ell diverges at the collision point")
    if rho == rho0:
        return 0.0
    value, _ = integrate.quad(_radial_speed, math.log(rho), math.log(rho0), args=(chi, m, k),
                              epsabs=tol, epsrel=tol, limit=200)
    return float(value)


def radial_length(rho_inner: float, rho_outer: float, chi: float, m: MassTriple, k: int) -> float:
    """JM length of the radial segment ``rho in [rho_inner, rho_outer]``."""
    return ell_coordinate(rho_inner, chi, m, k, rho0=rho_outer)


def rho_for_ell(ell: float, chi: float, m: MassTriple, k: int,
                rho0: float = ELL_REFERENCE_RHO) -> float:
    """Invert ``ell_coordinate`` along the radial line at angle ``chi``."""
    hi = 0.999 * END_CELL_RHO
    if ell_coordinate(hi, chi, m, k, rho0) > ell:
        raise OutOfChart(f"ell={ell} lies beyond the end cell along chi={chi}")
    # Newton in u = log(rho), where d ell / du = -sqrt(F) rho
    u = math.log(min(rho0, hi)) - max(ell, 0.0) / m.cyl_radius(k)
    for _ in range(30):
        if u > math.log(hi) or u < -690.0:
            break
        err = ell_coordinate(math.exp(u), chi, m, k, rho0) - ell
        step = err / _radial_speed(u, chi, m, k)
        u += step
        if abs(step) < 1e-14:
            return math.exp(u)
    target = lambda rho: ell_coordinate(rho, chi, m, k, rho0) - ell  # noqa: E731
    lo = min(rho0, hi) * math.exp(-max(ell, 0.0) / m.cyl_radius(k)) * 0.5
    while target(lo) < 0:
        lo *= 0.1
        if lo < 1e-300:
            raise OutOfChart("ell too large to invert")
    return float(optimize.brentq(target, lo, hi, xtol=1e-300, rtol=1e-14))


@dataclass(frozen=True)
class EndChart:
    k: int
    ell: float
    chi: float
    f_value: float
    rho: float


def in_end_cell(n, k: int) -> bool:
    """True unless ``n`` is a collision point or lies on the closed arc opposite end ``k``."""
    n = np.asarray(n, dtype=float)
    s = sides_from_unit(n)
    if np.any(s <= 0.0):
        return False
    rho, _ = end_polar(n, k)
    on_equator = abs(n[2]) < 1e-12
    return not (on_equator and rho >= math.pi / 3 - 1e-12)


def end_chart(p: ShapePoint, m: MassTriple, k: int) -> EndChart:
    """Cylindrical-end coordinates ``(ell, chi)`` of ``p`` for end ``k``."""
    n = p.unit
    if not in_end_cell(n, k):
        raise OutOfChart(f"point {p} lies outside the chart of end {k}")
    rho, chi = end_polar(n, k)
    rho, chi = float(rho), float(chi)
    ell = ell_coordinate(rho, chi, m, k)
    f = float(circumferential_factor(rho, chi, m, k))
    return EndChart(k, ell, chi, f, rho)


def anklet_length(rho: float, m: MassTriple, k: int, windings: int = 1) -> float:
    """JM length of the round circle of radius ``rho`` about collision ``k``."""
    per_turn, _ = integrate.quad(lambda chi: float(circumferential_factor(rho, chi, m, k)),
                                 -math.pi, math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return windings * per_turn


# -- scans --------------------------------------------------------------------


@dataclass
class ScanReport:
    masses: MassTriple
    shape: tuple[int, int]
    curvature_min: float
    curvature_max: float
    argmin: ShapePoint
    argmax: ShapePoint
    n_positive: int
    n_negative: int
    n_points: int
    verdict: str
    tol: float
    sign_changes: list[ShapePoint] = field(default_factory=list)
    near_zero_max_pole_distance: float = float("nan")
    arrays: dict | None = None

    def summary(self) -> dict:
        return {
            "masses": [self.masses.m1, self.masses.m2, self.masses.m3],
            "grid": list(self.shape),
            "curvature_min": self.curvature_min,
            "curvature_max": self.curvature_max,
            "argmin": [self.argmin.phi, self.argmin.theta],
            "argmax": [self.argmax.phi, self.argmax.theta],
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "n_points": self.n_points,
            "tol": self.tol,
            "verdict": self.verdict,
            "n_sign_change_points": len(self.sign_changes),
            "near_zero_max_pole_distance": self.near_zero_max_pole_distance,
        }


def _verdict(k: np.ndarray, tol: float) -> str:
    pos = bool(np.any(k > tol))
    neg = bool(np.any(k < -tol))
    if pos and neg:
        return "mixed-sign"
    if pos:
        return "all-nonnegative"
    return "all-nonpositive"


def _sign_changes(phi, theta, k, tol, limit):
    sign = np.where(k > tol, 1, np.where(k < -tol, -1, 0))
    valid = np.isfinite(k)
    hits = np.zeros_like(valid)
    for axis in (0, 1):
        a = sign
        b = np.roll(sign, -1, axis=axis)
        va = valid & np.roll(valid, -1, axis=axis)
        flip = va & (a * b < 0)
        if axis == 0:
            flip[-1, :] = False
        hits |= flip
    idx = np.argwhere(hits)[:limit]
    return [ShapePoint(float(phi[i, j]), float(theta[i, j])) for i, j in idx]


def _report(m, phi, theta, k, tol, zero_tol, keep_arrays, extra=None) -> ScanReport:
    valid = np.isfinite(k)
    kv = np.where(valid, k, np.nan)
    imin = np.unravel_index(np.nanargmin(kv), k.shape)
    imax = np.unravel_index(np.nanargmax(kv), k.shape)
    near = valid & (np.abs(np.where(valid, k, 1.0)) < zero_tol)
    pole_dist = float(np.max(math.pi / 2 - np.abs(phi[near]))) if np.any(near) else float("nan")
    report = ScanReport(
        masses=m,
        shape=k.shape,
        curvature_min=float(kv[imin]),
        curvature_max=float(kv[imax]),
        argmin=ShapePoint(float(phi[imin]), float(theta[imin])),
        argmax=ShapePoint(float(phi[imax]), float(theta[imax])),
        n_positive=int(np.sum(valid & (k > tol))),
        n_negative=int(np.sum(valid & (k < -tol))),
        n_points=int(np.sum(valid)),
        verdict=_verdict(k[valid], tol),
        tol=tol,
        sign_changes=_sign_changes(phi, theta, k, tol, 1000),
        near_zero_max_pole_distance=pole_dist,
    )
    if keep_arrays:
        report.arrays = {"phi": phi, "theta": theta, "curvature": k, **(extra or {})}
    return report


def curvature_scan(m: MassTriple, n_phi: int = 1000, n_theta: int | None = None,
                   exclusion: float = 0.05, tol: float = 1e-9, zero_tol: float = 1e-6,
                   keep_arrays: bool = False) -> ScanReport:
    """Closed-form curvature on a regular ``(phi, theta)`` grid.

    Both poles are grid rows; points within round distance ``exclusion``
    of a collision are skipped (reported as NaN in the arrays).
    """
    n_theta = n_phi if n_theta is None else n_theta
    if n_phi < 2 or n_theta < 2:
        raise ValueError("grid resolution must be at least 2")
    phi1 = np.linspace(-math.pi / 2, math.pi / 2, n_phi)
    theta1 = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    phi, theta = np.meshgrid(phi1, theta1, indexing="ij")
    s = sides(phi, theta)
    rho = np.arcsin(np.sqrt(np.clip(s / 2.0, 0.0, 1.0)))
    excluded = np.any(rho < exclusion, axis=-1)
    s_safe = np.where(excluded[..., None], 1.0, s)
    k = np.where(excluded, np.nan, curvature_closed_form(s_safe, m))
    extra = None
    if keep_arrays:
        extra = {
            "sides": np.where(excluded[..., None], np.nan, s),
            "conformal_factor": np.where(excluded, np.nan, conformal_factor(s_safe, m)),
            "kappa": np.where(excluded, np.nan, kappa(s_safe, m)),
        }
    return _report(m, phi, theta, k, tol, zero_tol, keep_arrays, extra)


def local_scan(m: MassTriple, center: ShapePoint, radius: float = 1e-2, n_radial: int = 100,
               n_angular: int = 100, tol: float = 0.0) -> ScanReport:
    """Curvature on a polar grid of unit-sphere angular radius ``radius``."""
    c = center.unit
    helper = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = helper - (helper @ c) * c
    u /= np.linalg.norm(u)
    v = np.cross(c, u)
    r = np.linspace(radius / n_radial, radius, n_radial)
    a = np.linspace(0.0, 2.0 * math.pi, n_angular, endpoint=False)
    rr, aa = np.meshgrid(r, a, indexing="ij")
    pts = (np.multiply.outer(np.cos(rr), c)
           + np.sin(rr)[..., None] * (np.multiply.outer(np.cos(aa), u) + np.multiply.outer(np.sin(aa), v)))
    phi, theta = from_unit(pts)
    k = curvature_closed_form(sides_from_unit(pts), m)
    return _report(m, phi, theta, k, tol, 1e-6, False)


# -- sign change at the Lagrange point ----------------------------------------


def dkappa_from_products(p) -> tuple[tuple, bool]:
    """Differential of kappa at the Lagrange point (up to a nonzero factor)."""
    p1, p2, p3 = p
    vec = (p1 * (p2 * p2 + p3 * p3), p2 * (p1 * p1 + p3 * p3), p3 * (p1 * p1 + p2 * p2))
    degenerate = bool(np.allclose(vec, vec[0], rtol=1e-12, atol=0.0))
    return vec, degenerate


def dkappa_lagrange(m: MassTriple) -> tuple[tuple, bool]:
    vec, degenerate = dkappa_from_products(tuple(float(v) for v in m.products))
    return vec, degenerate


__all__ = [
    "EndChart", "MetricSample", "ScanReport", "anklet_length", "chart_partials_log_conformal",
    "circumferential_factor", "conformal_factor", "curvature_closed_form", "curvature_equal_mass",
    "curvature_fd_oracle", "curvature_scan", "dkappa_from_products", "dkappa_lagrange",
    "ell_coordinate", "end_chart", "end_polar", "end_polar_to_unit", "grad_log_conformal",
    "gradsq_U_oracle", "gradsq_identity", "in_end_cell", "kappa", "laplacian_U_oracle",
    "local_scan", "mass_factor", "radial_length", "rho_for_ell", "sample", "to_unit",
]
