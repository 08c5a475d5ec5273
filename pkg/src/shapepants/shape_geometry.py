"""Coordinates, side lengths and potentials on the shape sphere.

Points of the shape sphere are given either by spherical coordinates
``(phi, theta)`` (``phi`` the latitude measured from the equator of
collinear triangles) or by the corresponding unit vector
``n = (cos phi cos theta, cos phi sin theta, sin phi)``.  The normalized
squared sides are ``s_k = 1 - cos(phi) * gamma_k(theta) = 1 - n . e_k``,
where ``e_k`` is the unit vector of binary collision ``k`` (the pair that
does not contain body ``k``).  Their sum is always 3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CollisionSingularity

TWO_PI = 2.0 * math.pi
LETTERS = (1, 2, 3)
#: ``s_k`` below this value counts as a binary collision.
DEFAULT_EXCLUSION = 1e-10


def _phase(k: int) -> float:
    if k not in LETTERS:
        raise ValueError(f"letter must be 1, 2 or 3, got {k!r}")
    return (k - 1) * TWO_PI / 3.0


#: Unit vectors of the three collision points, row k-1 for letter k.
COLLISION_VECTORS = np.array(
    [[math.cos(_phase(k)), -math.sin(_phase(k)), 0.0] for k in LETTERS]
)
#: Longitudes of the collision points.
COLLISION_THETAS = np.array([(-_phase(k)) % TWO_PI for k in LETTERS])
#: Longitudes of the Euler points, the midpoints of the syzygy arcs.
EULER_THETAS = np.array([(math.pi - _phase(k)) % TWO_PI for k in LETTERS])


@dataclass(frozen=True)
class MassTriple:
    """Three positive masses and the constants derived from them."""

    m1: float
    m2: float
    m3: float

    def __post_init__(self) -> None:
        for name in ("m1", "m2", "m3"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    @classmethod
    def equal(cls, m: float = 1.0) -> "MassTriple":
        return cls(m, m, m)

    @classmethod
    def from_products(cls, p: tuple[float, float, float]) -> "MassTriple":
        """Masses whose pairwise products ``p_i = m_j m_k`` equal ``p``."""
        p1, p2, p3 = (float(v) for v in p)
        return cls(math.sqrt(p2 * p3 / p1), math.sqrt(p1 * p3 / p2), math.sqrt(p1 * p2 / p3))

    @classmethod
    def parse(cls, text: str) -> "MassTriple":
        parts = [float(v) for v in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated masses, got {text!r}")
        return cls(*parts)

    @cached_property
    def masses(self) -> np.ndarray:
        return np.array([self.m1, self.m2, self.m3])

    @cached_property
    def total(self) -> float:
        return self.m1 + self.m2 + self.m3

    @cached_property
    def products(self) -> np.ndarray:
        """``p_k = m_i m_j`` for ``{i, j, k} = {1, 2, 3}``."""
        m1, m2, m3 = self.m1, self.m2, self.m3
        return np.array([m2 * m3, m1 * m3, m1 * m2])

    @cached_property
    def d_m(self) -> float:
        return math.sqrt(3.0 * self.m1 * self.m2 * self.m3 / self.total)

    def pair(self, k: int) -> tuple[int, int]:
        """The colliding pair at collision point ``k``."""
        _phase(k)
        return tuple(i for i in LETTERS if i != k)  # type: ignore[return-value]

    def reduced_mass(self, k: int) -> float:
        i, j = self.pair(k)
        mi, mj = self.masses[i - 1], self.masses[j - 1]
        return float(mi * mj / (mi + mj))

    def cyl_radius(self, k: int) -> float:
        """Radius of the asymptotic cylinder at end ``k``."""
        i, j = self.pair(k)
        return math.sqrt(self.reduced_mass(k) * self.masses[i - 1] * self.masses[j - 1])

    def is_equal(self) -> bool:
        return self.m1 == self.m2 == self.m3

    def __str__(self) -> str:
        return f"{self.m1:g},{self.m2:g},{self.m3:g}"


@dataclass(frozen=True)
class ShapePoint:
    """A point ``(phi, theta)`` of the shape sphere, in radians."""

    phi: float
    theta: float

    @classmethod
    def from_unit(cls, n) -> "ShapePoint":
        phi, theta = from_unit(np.asarray(n, dtype=float))
        return cls(float(phi), float(theta))

    @property
    def unit(self) -> np.ndarray:
        return to_unit(self.phi, self.theta)

    @property
    def sides(self) -> "SideTriple":
        return squared_sides(self)


@dataclass(frozen=True)
class SideTriple:
    s1: float
    s2: float
    s3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])


LAGRANGE_NORTH = ShapePoint(math.pi / 2, 0.0)
LAGRANGE_SOUTH = ShapePoint(-math.pi / 2, 0.0)


def euler_point(k: int) -> ShapePoint:
    """Collinear shape with body ``k`` at the midpoint of the other two."""
    return ShapePoint(0.0, float(EULER_THETAS[k - 1]))


def collision_point(k: int) -> ShapePoint:
    return ShapePoint(0.0, float(COLLISION_THETAS[k - 1]))


def to_unit(phi, theta) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(phi)
    return np.stack([c * np.cos(theta), c * np.sin(theta), np.sin(phi)], axis=-1)


def from_unit(n) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(n, dtype=float)
    phi = np.arcsin(np.clip(n[..., 2] / np.linalg.norm(n, axis=-1), -1.0, 1.0))
    theta = np.mod(np.arctan2(n[..., 1], n[..., 0]), TWO_PI)
    return phi, theta


def gamma(k: int, theta) -> tuple:
    """``(gamma_k, dgamma_k/dtheta)`` at longitude ``theta``."""
    arg = np.asarray(theta, dtype=float) + _phase(k)
    if np.ndim(arg) == 0:
        return math.cos(float(arg)), -math.sin(float(arg))
    return np.cos(arg), -np.sin(arg)


def sides(phi, theta) -> np.ndarray:
    """Normalized squared sides, stacked along the last axis."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(phi)
    return np.stack([1.0 - c * np.cos(theta + _phase(k)) for k in LETTERS], axis=-1)


def sides_from_unit(n) -> np.ndarray:
    """Sides at (renormalized) ``n`` as ``|n - e_k|^2 / 2``, accurate near collisions."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    diff = n[..., None, :] - COLLISION_VECTORS
    return 0.5 * np.sum(diff * diff, axis=-1)


def squared_sides(p: ShapePoint) -> SideTriple:
    s = sides(p.phi, p.theta)
    return SideTriple(float(s[0]), float(s[1]), float(s[2]))


def _as_sides(p) -> np.ndarray:
    if isinstance(p, ShapePoint):
        return sides(p.phi, p.theta)
    if isinstance(p, SideTriple):
        return p.as_array()
    return np.asarray(p, dtype=float)


def check_collision(s: np.ndarray, exclusion: float = DEFAULT_EXCLUSION) -> None:
    if np.any(s < exclusion):
        raise CollisionSingularity(
            f"point within collision exclusion (min side {float(np.min(s)):.3e} < {exclusion:g})"
        )


def power_sums(p, m: MassTriple, n: int = 1, exclusion: float = DEFAULT_EXCLUSION):
    """Weighted inverse power sum ``sum_k p_k / s_k**n``.

    ``p`` may be a ShapePoint, a SideTriple or an array of sides whose last
    axis has length 3.
    """
    if n < 1:
        raise ValueError("power must be >= 1")
    s = _as_sides(p)
    check_collision(s, exclusion)
    out = (m.products / s**n).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def potential(p, m: MassTriple, exclusion: float = DEFAULT_EXCLUSION):
    """The normalized potential ``sum_k p_k / s_k``."""
    return power_sums(p, m, 1, exclusion)


def collision_distance(p, k: int):
    """Round-metric distance (sphere of radius 1/2) to collision point ``k``."""
    s = _as_sides(p)[..., k - 1]
    out = np.arcsin(np.sqrt(np.clip(s / 2.0, 0.0, 1.0)))
    return float(out) if np.ndim(out) == 0 else out


def round_distance(a, b) -> np.ndarray:
    """Great-circle distance on the radius-1/2 shape sphere between unit vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return 0.5 * np.arctan2(cross, np.sum(a * b, axis=-1))


def equator_letter(theta) -> np.ndarray:
    """Letter of the syzygy arc at longitude ``theta`` (argmax of the sides)."""
    s = sides(np.zeros_like(np.asarray(theta, dtype=float)), theta)
    return np.argmax(s, axis=-1) + 1
