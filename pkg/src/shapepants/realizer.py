"""Closed JM geodesics in tied free homotopy classes.

A class is given by a periodic signed syzygy word.  The realizer seeds a
polygon with that word, shortens it by damped Newton steps that move each
vertex along the loop normal (the discrete length objective is the
midpoint rule), and then polishes the result into an exact closed geodesic
by shooting on the equatorial Poincare section.  The homotopy class is
tracked by the reduced crossing word of the polygon.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .errors import (
    AtCollision,
    CollisionSingularity,
    HomotopyEscape,
    NoConvergence,
    PatchViolation,
    TiedWord,
    UntiedWord,
)
from .geodesic_flow import GeodesicState, Trajectory, embedded_rhs, classify_crossing
from .jm_metric import (
    anklet_length,
    conformal_factor,
    ell_coordinate,
    grad_log_conformal,
    rho_for_ell,
)
from .shape_geometry import (
    COLLISION_VECTORS,
    EULER_THETAS,
    MassTriple,
    ShapePoint,
    check_collision,
    from_unit,
    sides_from_unit,
    to_unit,
)
from .syzygy import (
    SignedWord,
    classify,
    has_stutter,
    reduce_stutters,
    same_cyclic_word,
)

DEFAULT_N_PER_LETTER = 192
VERTEX_EXCLUSION = 1e-9
MAX_NORMAL_STEP = 0.15
#: Resample when the shortest edge falls below this fraction of the mean edge.
RESAMPLE_RATIO = 0.2


# -- loops --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    """Closed polygon of unit vectors joined by round great-circle arcs."""

    vertices: np.ndarray
    target_word: SignedWord

    @property
    def points(self) -> list[ShapePoint]:
        phi, theta = from_unit(self.vertices)
        return [ShapePoint(float(p), float(t)) for p, t in zip(phi, theta)]

    def __len__(self) -> int:
        return len(self.vertices)


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _arc_points(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """Midpoints of ``k`` equal pieces of the great-circle arcs from ``a`` to ``b``."""
    t = (np.arange(k) + 0.5) / k
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1))
    sin_ang = np.sin(ang)
    small = sin_ang < 1e-300
    sin_ang = np.where(small, 1.0, sin_ang)
    wa = np.sin(np.multiply.outer(1.0 - t, ang)) / sin_ang
    wb = np.sin(np.multiply.outer(t, ang)) / sin_ang
    wa = np.where(small, 1.0 - t[:, None], wa)
    wb = np.where(small, t[:, None], wb)
    return wa[..., None] * a + wb[..., None] * b


def _edge_terms(v: np.ndarray, m: MassTriple) -> np.ndarray:
    """Midpoint-rule JM length of each edge ``v[i] -> v[i+1]``."""
    a, b = v, np.roll(v, -1, axis=0)
    mid = _normalize(a + b)
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1))
    q = np.sqrt(conformal_factor(sides_from_unit(mid), m, exclusion=0.0))
    return q * 0.5 * ang


def discrete_length(v: np.ndarray, m: MassTriple) -> float:
    return float(np.sum(_edge_terms(v, m)))


def jm_length(loop: DiscreteLoop | np.ndarray, m: MassTriple, rtol: float = 1e-8,
              max_level: int = 14) -> float:
    """JM length of the polygon, refining the midpoint rule per edge until stable."""
    v = loop.vertices if isinstance(loop, DiscreteLoop) else np.asarray(loop, dtype=float)
    check_collision(sides_from_unit(v))
    a, b = v, np.roll(v, -1, axis=0)
    ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1))
    prev = None
    for level in range(max_level):
        k = 2**level
        pts = _arc_points(a, b, k)
        q = np.sqrt(conformal_factor(sides_from_unit(pts), m, exclusion=0.0))
        total = float(np.sum(q.sum(axis=0) * 0.5 * ang / k))
        if prev is not None and abs(total - prev) <= rtol * abs(total):
            return total
        prev = total
    return float(prev)


def polygon_word(v: np.ndarray) -> SignedWord:
    """Signed crossing word of the polygon, read from its equator crossings."""
    z = v[:, 2]
    up = z >= 0.0
    nxt = np.roll(np.arange(len(v)), -1)
    letters: list[int] = []
    signs: list[str] = []
    for i in np.nonzero(up != up[nxt])[0]:
        j = nxt[i]
        p = abs(z[j]) * v[i] + abs(z[i]) * v[j]
        theta = float(np.mod(np.arctan2(p[1], p[0]), 2.0 * math.pi))
        letters.append(classify_crossing(theta))
        signs.append("+" if up[i] else "-")
    return SignedWord(tuple(letters), signs[0] if signs else None, periodic=True)


def _crossing_edges(v: np.ndarray) -> list[int]:
    up = v[:, 2] >= 0.0
    return [int(i) for i in np.nonzero(up != np.roll(up, -1))[0]]


def same_class(v: np.ndarray, target: SignedWord) -> bool:
    try:
        word = polygon_word(v)
    except AtCollision:
        return False
    return same_cyclic_word(reduce_stutters(word), reduce_stutters(target))


# -- seeding ------------------------------------------------------------------------


def _short_delta(a: float, b: float) -> float:
    return (b - a + math.pi) % (2.0 * math.pi) - math.pi


def seed_loop(word: SignedWord | str, m: MassTriple, n_per_letter: int = DEFAULT_N_PER_LETTER,
              rng: np.random.Generator | None = None, amplitude: float = 0.6,
              allow_untied: bool = False) -> DiscreteLoop:
    """Polygon crossing the arcs of ``word`` in order, alternating hemispheres.

    Crossing ``j`` sits at the Euler longitude of its letter; between
    crossings the latitude is a half sine wave of the given amplitude.
    A generator jitters the amplitudes and crossing longitudes.
    """
    if isinstance(word, str):
        word = SignedWord.parse(word, periodic=True)
    if not word.periodic:
        word = SignedWord(word.letters, word.sign0, True)
    if word.sign0 is None:
        word = SignedWord(word.letters, "+", True)
    if has_stutter(word.letters, periodic=True):
        raise ValueError(f"seed word {word} has a stutter")
    if not classify(word).tied and not allow_untied:
        raise UntiedWord(f"{word} winds around a single end")
    n_letters = len(word)
    total = 3 * math.ceil(n_per_letter * n_letters / 3)
    thetas = np.array([EULER_THETAS[a - 1] for a in word.letters], dtype=float)
    amps = np.full(n_letters, amplitude)
    if rng is not None:
        thetas = thetas + rng.uniform(-0.3, 0.3, n_letters)
        amps = rng.uniform(0.4, 0.9, n_letters)
    t = (np.arange(total) + 0.5) * n_letters / total
    j = np.floor(t).astype(int) % n_letters
    frac = t - np.floor(t)
    nxt = (j + 1) % n_letters
    deltas = np.array([_short_delta(thetas[i], thetas[(i + 1) % n_letters]) for i in range(n_letters)])
    theta = thetas[j] + frac * deltas[j]
    # after a '+' crossing the loop is in the lower hemisphere
    down = np.array([1.0 if s == "+" else -1.0 for s in word.signs])
    phi = -down[j] * amps[j] * np.sin(math.pi * frac)
    del nxt
    verts = to_unit(phi, theta)
    loop = DiscreteLoop(verts, word)
    if not same_class(verts, word):
        raise RuntimeError(f"seed construction failed for {word}")
    return loop


# -- discrete shortening --------------------------------------------------------------


def _normals(v: np.ndarray) -> np.ndarray:
    tang = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
    tang = tang - np.sum(tang * v, axis=1, keepdims=True) * v
    tang = _normalize(tang)
    return np.cross(v, tang)


def _move(v: np.ndarray, normals: np.ndarray, a: np.ndarray) -> np.ndarray:
    return np.cos(a)[:, None] * v + np.sin(a)[:, None] * normals


def _turn(v: np.ndarray, normals: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Normals carried along with the vertices by ``_move``."""
    return -np.sin(a)[:, None] * v + np.cos(a)[:, None] * normals


def _length_gradient(v: np.ndarray, normals: np.ndarray, m: MassTriple) -> np.ndarray:
    """Derivative of the discrete length with respect to each normal angle."""
    a, b = v, np.roll(v, -1, axis=0)
    na, nb = normals, np.roll(normals, -1, axis=0)
    u = a + b
    un = np.linalg.norm(u, axis=1, keepdims=True)
    mid = u / un
    cos_ab = np.sum(a * b, axis=1)
    sin_ab = np.linalg.norm(np.cross(a, b), axis=1)
    ang = np.arctan2(sin_ab, cos_ab)
    s = sides_from_unit(mid)
    q = np.sqrt(conformal_factor(s, m, exclusion=0.0))
    grad_q = 0.5 * q[:, None] * grad_log_conformal(mid, m, exclusion=0.0)
    grad_q = grad_q - np.sum(grad_q * mid, axis=1, keepdims=True) * mid
    # d(mid) = P du / |u| and the projection is already applied to grad_q
    dq_da = np.sum(grad_q * na, axis=1) / un[:, 0]
    dq_db = np.sum(grad_q * nb, axis=1) / un[:, 0]
    safe = np.where(sin_ab > 0, sin_ab, 1.0)
    dang_da = np.where(sin_ab > 0, -np.sum(na * b, axis=1) / safe, 0.0)
    dang_db = np.where(sin_ab > 0, -np.sum(nb * a, axis=1) / safe, 0.0)
    d_edge_a = dq_da * 0.5 * ang + q * 0.5 * dang_da
    d_edge_b = dq_db * 0.5 * ang + q * 0.5 * dang_db
    return d_edge_a + np.roll(d_edge_b, 1)


def _colors(n: int) -> np.ndarray:
    colors = np.arange(n) % 3
    extra = n % 3
    for r in range(extra):
        colors[n - extra + r] = 3 + r
    return colors


def _length_hessian(v: np.ndarray, normals: np.ndarray, m: MassTriple, h: float = 1e-6) -> np.ndarray:
    """Cyclic tridiagonal Hessian from differences of the analytic gradient."""
    n = len(v)
    colors = _colors(n)
    hess = np.zeros((n, n))
    idx = np.arange(n)
    for c in np.unique(colors):
        pert = np.where(colors == c, h, 0.0)
        gp = _length_gradient(_move(v, normals, pert), _turn(v, normals, pert), m)
        gm = _length_gradient(_move(v, normals, -pert), _turn(v, normals, -pert), m)
        dg = (gp - gm) / (2.0 * h)
        for j in idx[colors == c]:
            for k in (j - 1, j, j + 1):
                hess[k % n, j] = dg[k % n]
    return 0.5 * (hess + hess.T)


@dataclass
class ClosedGeodesic:
    """An exact closed geodesic found by shooting."""

    n0: np.ndarray
    w0: np.ndarray
    period: float
    samples: np.ndarray
    word: SignedWord
    residual: float

    def state(self) -> GeodesicState:
        return GeodesicState.from_embedded(self.n0, self.w0)


@dataclass
class RealizationResult:
    loop: DiscreteLoop
    jm_length: float
    converged: bool
    gradient_norm: float
    iterations: int = 0
    discrete_length: float = float("nan")
    history: list[float] = field(default_factory=list)
    closed: ClosedGeodesic | None = None
    discrete_closure: float = float("nan")
    seed: int | None = None

    def summary(self) -> dict:
        out = {
            "seed": self.seed,
            "converged": self.converged,
            "jm_length": self.jm_length,
            "discrete_length": self.discrete_length,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "discrete_closure": self.discrete_closure,
            "n_vertices": len(self.loop),
        }
        if self.closed is not None:
            out["closure_residual"] = self.closed.residual
            out["period"] = self.closed.period
            out["word"] = str(self.closed.word)
        return out


def _resample(v: np.ndarray) -> np.ndarray:
    """Vertices equally spaced in round arclength along the closed polygon."""
    nxt = np.roll(v, -1, axis=0)
    ang = np.arctan2(np.linalg.norm(np.cross(v, nxt), axis=1), np.sum(v * nxt, axis=1))
    cum = np.concatenate([[0.0], np.cumsum(ang)])
    targets = np.arange(len(v)) * cum[-1] / len(v)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(v) - 1)
    frac = (targets - cum[idx]) / np.maximum(ang[idx], 1e-300)
    a, b, th = v[idx], nxt[idx], ang[idx]
    sin_th = np.maximum(np.sin(th), 1e-300)[:, None]
    w_a = np.where(th[:, None] > 1e-12, np.sin((1.0 - frac) * th)[:, None] / sin_th, (1.0 - frac)[:, None])
    w_b = np.where(th[:, None] > 1e-12, np.sin(frac * th)[:, None] / sin_th, frac[:, None])
    return _normalize(w_a * a + w_b * b)


def _maybe_resample(v: np.ndarray, length: float, target: SignedWord, m: MassTriple):
    """Undo vertex bunching and folds that normal-only moves cannot remove.

    The resampled polygon is kept only if it stays in the class and is no
    longer than the current one.
    """
    d = np.roll(v, -1, axis=0) - v
    edges = np.linalg.norm(d, axis=1)
    t = d / np.maximum(edges, 1e-300)[:, None]
    folded = np.min(np.sum(t * np.roll(t, 1, axis=0), axis=1)) < 0.0
    if not folded and edges.min() > RESAMPLE_RATIO * edges.mean():
        return v, length
    cand = _resample(v)
    if np.any(sides_from_unit(cand) < VERTEX_EXCLUSION) or not same_class(cand, target):
        return v, length
    new_length = discrete_length(cand, m)
    if new_length > length:
        return v, length
    return cand, new_length


def _newton_phase(loop: DiscreteLoop, m: MassTriple, tol: float, max_iter: int):
    v = loop.vertices.copy()
    target = loop.target_word
    length = discrete_length(v, m)
    history = [length]
    mu = 1e-3
    gnorm = float("inf")
    for it in range(max_iter + 1):
        normals = _normals(v)
        g = _length_gradient(v, normals, m)
        gnorm = float(np.linalg.norm(g))
        if gnorm < tol:
            return v, history, gnorm, it, True
        if it == max_iter:
            break
        hess = _length_hessian(v, normals, m)
        accepted = False
        escapes = 0
        for _ in range(60):
            try:
                chol = np.linalg.cholesky(hess + mu * np.eye(len(v)))
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-8)
                continue
            step = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            biggest = np.max(np.abs(step))
            if biggest > MAX_NORMAL_STEP:
                step *= MAX_NORMAL_STEP / biggest
            cand = _normalize(_move(v, normals, step))
            if np.any(sides_from_unit(cand) < VERTEX_EXCLUSION) or not same_class(cand, target):
                escapes += 1
                mu *= 4.0
                continue
            new_length = discrete_length(cand, m)
            if new_length <= length + 1e-4 * float(g @ step) or (
                    abs(new_length - length) <= 1e-15 * length and gnorm < 1e3 * tol):
                v, length = cand, new_length
                v, length = _maybe_resample(v, length, target, m)
                history.append(length)
                mu = max(mu / 5.0, 1e-12)
                accepted = True
                break
            mu *= 4.0
        if not accepted:
            if escapes:
                raise HomotopyEscape("every trial step left the homotopy class")
            break
    return v, history, gnorm, it, False


def _crossing_guesses(v: np.ndarray) -> list[tuple[float, float]]:
    """Longitude and heading at each equator crossing of the polygon.

    A cubic through the four vertices around the crossing edge, parametrized
    by cumulative arc angle, locates the crossing and its tangent.
    """
    out = []
    n = len(v)
    for i in _crossing_edges(v):
        idx = [(i + k) % n for k in (-1, 0, 1, 2)]
        pts = v[idx]
        steps = np.arctan2(np.linalg.norm(np.cross(pts[:-1], pts[1:]), axis=1),
                           np.sum(pts[:-1] * pts[1:], axis=1))
        u = np.concatenate([[0.0], np.cumsum(steps)])
        coef = np.polyfit(u, pts, 3)
        zpoly = coef[:, 2]
        root = optimize.brentq(lambda x: np.polyval(zpoly, x), u[1], u[2])
        p = _normalize(np.array([np.polyval(coef[:, c], root) for c in range(3)]))
        d = np.array([np.polyval(np.polyder(coef[:, c]), root) for c in range(3)])
        theta = float(np.mod(np.arctan2(p[1], p[0]), 2.0 * math.pi))
        e_theta = np.array([-math.sin(theta), math.cos(theta), 0.0])
        out.append((theta, math.atan2(float(d[2]), float(d @ e_theta))))
    return out


def _equator_state(theta: float, alpha: float, m: MassTriple) -> tuple[np.ndarray, np.ndarray]:
    st = GeodesicState.from_direction(ShapePoint(0.0, theta), alpha, m)
    return st.embedded()


def _section_coords(y: np.ndarray) -> tuple[float, float]:
    n, w = y[0:3], y[3:6]
    _, theta = from_unit(n)
    theta = float(theta)
    e_theta = np.array([-math.sin(theta), math.cos(theta), 0.0])
    return theta, math.atan2(float(w[2]), float(w @ e_theta))


def _next_crossing(theta: float, alpha: float, m: MassTriple, s_guess: float,
                   tol: float = 1e-12, dense: bool = False):
    """Flow from an equator crossing to the next one; returns ``(s, y, solution)``."""
    n0, w0 = _equator_state(theta, alpha, m)
    y0 = np.concatenate([n0, w0, [0.0]])

    def crossing(s, y):
        return y[2] if s > 1e-9 else np.copysign(1.0, w0[2])

    crossing.terminal = True

    def collision(s, y):
        return float(np.min(sides_from_unit(y[0:3]))) - 1e-9

    collision.terminal = True
    s_max = max(4.0 * s_guess, 1.0)
    sol = solve_ivp(lambda s, y: embedded_rhs(y, m), (0.0, s_max), y0, method="DOP853", rtol=tol,
                    atol=tol * 1e-2, events=[crossing, collision], dense_output=dense)
    if sol.t_events[1].size:
        raise NoConvergence("shooting segment fell into a collision")
    if not sol.t_events[0].size:
        raise NoConvergence("shooting segment did not return to the equator")
    return float(sol.t_events[0][0]), sol.y_events[0][0], sol


def _shooting_residual(x: np.ndarray, m: MassTriple, s_guess: np.ndarray):
    k = len(x) // 2
    res = np.zeros(2 * k)
    lengths = np.zeros(k)
    ends = []
    for j in range(k):
        s, y, _ = _next_crossing(x[2 * j], x[2 * j + 1], m, s_guess[j])
        th, al = _section_coords(y)
        nj = (j + 1) % k
        res[2 * j] = _short_delta(x[2 * nj], th)
        res[2 * j + 1] = _short_delta(x[2 * nj + 1], al)
        lengths[j] = s
        ends.append((th, al))
    return res, lengths, ends


def _segment_jacobian(theta, alpha, m, s_guess, h=1e-7) -> np.ndarray:
    jac = np.zeros((2, 2))
    for k in range(2):
        dx = np.zeros(2)
        dx[k] = h
        _, yp, _ = _next_crossing(theta + dx[0], alpha + dx[1], m, s_guess)
        _, ym, _ = _next_crossing(theta - dx[0], alpha - dx[1], m, s_guess)
        tp, ap = _section_coords(yp)
        tm, am = _section_coords(ym)
        jac[:, k] = [_short_delta(tm, tp) / (2 * h), _short_delta(am, ap) / (2 * h)]
    return jac


def shoot(guesses: list[tuple[float, float]], m: MassTriple, segment_guess: np.ndarray,
          tol: float = 1e-11, max_iter: int = 30) -> ClosedGeodesic:
    """Multiple shooting between consecutive equator crossings.

    Unknowns are the longitude and heading at every crossing; each segment
    flows to the next crossing and must land on the next unknown.
    """
    k = len(guesses)
    x = np.array([c for g in guesses for c in g], dtype=float)
    seg = np.asarray(segment_guess, dtype=float)
    r, seg, _ = _shooting_residual(x, m, seg)
    for _ in range(max_iter):
        if np.linalg.norm(r) < tol:
            break
        jac = np.zeros((2 * k, 2 * k))
        for j in range(k):
            nj = (j + 1) % k
            jac[2 * j:2 * j + 2, 2 * j:2 * j + 2] += _segment_jacobian(x[2 * j], x[2 * j + 1], m, seg[j])
            jac[2 * j:2 * j + 2, 2 * nj:2 * nj + 2] -= np.eye(2)
        step = -np.linalg.solve(jac, r)
        lam = 1.0
        while True:
            try:
                r_new, seg_new, _ = _shooting_residual(x + lam * step, m, seg)
            except NoConvergence:
                r_new = None
            if r_new is not None and np.linalg.norm(r_new) < np.linalg.norm(r):
                break
            lam *= 0.5
            if lam < 1e-6:
                raise NoConvergence("shooting line search failed")
        x, r, seg = x + lam * step, r_new, seg_new
    if np.linalg.norm(r) >= tol:
        raise NoConvergence(f"shooting residual {np.linalg.norm(r):.2e}")
    pieces = []
    letters, signs = [], []
    for j in range(k):
        s, y, sol = _next_crossing(x[2 * j], x[2 * j + 1], m, seg[j], dense=True)
        grid = np.linspace(0.0, s, max(int(s / 0.002), 20) + 1)[:-1]
        pieces.append(_normalize(sol.sol(grid)[0:3].T))
        letters.append(classify_crossing(float(np.mod(x[2 * j], 2.0 * math.pi))))
        signs.append("+" if x[2 * j + 1] < 0 else "-")
    n0, w0 = _equator_state(x[0], x[1], m)
    word = SignedWord(tuple(letters), signs[0], periodic=True)
    return ClosedGeodesic(n0, w0, float(np.sum(seg)), np.concatenate(pieces), word, float(np.linalg.norm(r)))


def shorten(loop: DiscreteLoop, m: MassTriple, tol: float = 1e-9, max_iter: int = 200,
            polish: bool = True) -> RealizationResult:
    """Shorten ``loop`` within its class, then polish into a closed geodesic."""
    v, history, gnorm, iters, ok = _newton_phase(loop, m, tol, max_iter)
    out_loop = DiscreteLoop(v, loop.target_word)
    d_len = discrete_length(v, m)
    result = RealizationResult(out_loop, jm_length(out_loop, m), ok, gnorm, iters, d_len, history)
    if not ok:
        err = NoConvergence(f"gradient norm {gnorm:.3e} after {iters} iterations")
        err.result = result
        raise err
    if polish:
        target = reduce_stutters(loop.target_word)
        guesses = _crossing_guesses(v)
        if len(guesses) != len(target):
            raise HomotopyEscape("shortened polygon has extra equator crossings")
        seg0 = np.full(len(guesses), d_len / len(guesses))
        r0, _, _ = _shooting_residual(np.array([c for g in guesses for c in g]), m, seg0)
        result.discrete_closure = float(np.max(np.abs(r0)))
        closed = shoot(guesses, m, seg0)
        if not same_cyclic_word(closed.word, target):
            raise HomotopyEscape(f"polished orbit has word {closed.word}, expected {target}")
        result.closed = closed
        result.jm_length = closed.period
    return result


# -- comparison modulo symmetry ---------------------------------------------------------


def symmetry_group() -> list[np.ndarray]:
    """The twelve isometries of the equal-mass shape sphere."""
    mats = []
    for k in range(3):
        c, s = math.cos(2 * math.pi * k / 3), math.sin(2 * math.pi * k / 3)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        for ry in (1.0, -1.0):
            for rz in (1.0, -1.0):
                mats.append(rot @ np.diag([1.0, ry, rz]))
    return mats


def _point_to_polyline(points: np.ndarray, line: np.ndarray, tree: cKDTree) -> np.ndarray:
    _, j = tree.query(points)
    n = len(line)
    best = np.full(len(points), np.inf)
    for a_off, b_off in ((-1, 0), (0, 1)):
        a = line[(j + a_off) % n]
        b = line[(j + b_off) % n]
        ab = b - a
        t = np.clip(np.sum((points - a) * ab, axis=1) / np.maximum(np.sum(ab * ab, axis=1), 1e-300), 0, 1)
        d = np.linalg.norm(points - (a + t[:, None] * ab), axis=1)
        best = np.minimum(best, d)
    return best


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Round-metric Hausdorff distance between two densely sampled closed curves."""
    ta, tb = cKDTree(a), cKDTree(b)
    chord = max(_point_to_polyline(a, b, tb).max(), _point_to_polyline(b, a, ta).max())
    return float(np.arcsin(min(chord / 2.0, 1.0)))


def symmetric_hausdorff(a: np.ndarray, b: np.ndarray, group: list[np.ndarray] | None = None) -> float:
    group = symmetry_group() if group is None else group
    return min(hausdorff(a, b @ g.T) for g in group)


def _restart(word, m: MassTriple, seed: int, r: int, n_per_letter: int, tol: float,
             max_iter: int) -> RealizationResult:
    rng = np.random.default_rng([seed, r])
    loop = seed_loop(word, m, n_per_letter, rng=rng)
    res = shorten(loop, m, tol=tol, max_iter=max_iter)
    res.seed = r
    return res


def realize(word: SignedWord | str, m: MassTriple, restarts: int = 5, seed: int = 0,
            n_per_letter: int = DEFAULT_N_PER_LETTER, tol: float = 1e-9,
            max_iter: int = 200, jobs: int = 1) -> list[RealizationResult]:
    """Independent jittered restarts of seed, shorten and polish.

    Restart ``r`` draws from ``default_rng([seed, r])``, so results do not
    depend on ``jobs``.
    """
    args = [(word, m, seed, r, n_per_letter, tol, max_iter) for r in range(restarts)]
    if jobs <= 1 or restarts <= 1:
        return [_restart(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_restart, *zip(*args)))


def compare_results(results: list[RealizationResult], equal_masses: bool = True) -> dict:
    lengths = np.array([r.jm_length for r in results])
    group = symmetry_group() if equal_masses else [np.eye(3)]
    dists = []
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            dists.append(symmetric_hausdorff(results[i].closed.samples, results[j].closed.samples, group))
    spread = float((lengths.max() - lengths.min()) / lengths.mean()) if len(lengths) else 0.0
    return {
        "lengths": lengths.tolist(),
        "relative_length_spread": spread,
        "max_pairwise_hausdorff": float(max(dists)) if dists else 0.0,
        "pairwise_hausdorff": dists,
    }


# -- untied classes -----------------------------------------------------------------


@dataclass(frozen=True)
class UntiedRow:
    ell_star: float
    rho_star: float
    anklet_length: float
    radial_length: float
    total_length: float
    lower_bound: float


def untied_end(word: SignedWord) -> int:
    letters = set(reduce_stutters(word).letters)
    if len(letters) != 2:
        raise TiedWord(f"{word} is not a two-letter alternation")
    return ({1, 2, 3} - letters).pop()


def untied_demo(word: SignedWord | str, m: MassTriple, ell_values, chi_ref: float = 0.0) -> list[UntiedRow]:
    """Lengths of the comparison curves for an untied class around one end.

    The curve runs in along the radial line ``chi = chi_ref`` to
    ``ell = ell_star``, winds ``N`` times around the round circle through
    that point, and runs back out.  ``N`` is half the word length.
    """
    if isinstance(word, str):
        word = SignedWord.parse(word, periodic=True)
    if classify(word).tied:
        raise TiedWord(f"{word} is tied")
    k = untied_end(word)
    windings = max(len(word) // 2, 1)
    bound = 2.0 * math.pi * windings * m.cyl_radius(k)
    rows = []
    for ell in ell_values:
        rho = rho_for_ell(float(ell), chi_ref, m, k)
        ank = anklet_length(rho, m, k, windings)
        radial = 2.0 * ell_coordinate(rho, chi_ref, m, k)
        rows.append(UntiedRow(float(ell), rho, ank, radial, ank + radial, bound))
    return rows


def extrapolate_infimum(rows: list[UntiedRow]) -> float:
    """Fit ``a + b rho^2 + c rho^4`` to the anklet lengths and return ``a``."""
    rho = np.array([r.rho_star for r in rows])
    y = np.array([r.anklet_length for r in rows])
    deg = 2 if len(rows) >= 4 else 1
    basis = np.stack([rho ** (2 * i) for i in range(deg + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(coef[0])


# -- distance convexity ----------------------------------------------------------------


@dataclass
class ConvexityReport:
    t: np.ndarray
    h: np.ndarray
    cos_a: np.ndarray
    dh_dt: np.ndarray
    d2h_dt2: np.ndarray
    first_variation_error: float
    min_second_derivative: float

    def passed(self, fv_tol: float = 1e-4, convex_tol: float = -1e-6) -> bool:
        return self.first_variation_error < fv_tol and self.min_second_derivative >= convex_tol


def _exp_map(n, w, h: float, m: MassTriple, tol: float = 1e-12):
    if h == 0.0:
        return n, w
    y0 = np.concatenate([n, w, [0.0]])
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(lambda s, y: embedded_rhs(y, m), (0.0, h), y0, method="DOP853", rtol=tol,
                        atol=tol * 1e-2)
    y = sol.y[:, -1]
    if sol.status != 0 or not np.all(np.isfinite(y)):
        # trial steps of the root finder may shoot into a collision
        return np.full(3, np.nan), np.full(3, np.nan)
    return y[0:3], y[3:6]


def _state_at(traj: Trajectory, s: float):
    y = traj.solution.sol(s)
    return y[0:3], y[3:6]


def convexity_probe(g1: Trajectory, g2: Trajectory, m: MassTriple, t_values=None,
                    patch_radius: float = 0.05) -> ConvexityReport:
    """Distance ``h(t)`` from ``g2(t)`` to the geodesic ``g1`` and its first two derivatives."""
    s1 = g1.s
    if t_values is None:
        s2 = g2.s
        t_values = np.linspace(s2[0], s2[-1], 41)
    t_values = np.asarray(t_values, dtype=float)
    for traj in (g1, g2):
        rho = np.arcsin(np.sqrt(np.clip(sides_from_unit(traj.units) / 2.0, 0.0, 1.0)))
        if np.any(rho < patch_radius):
            raise PatchViolation("a probe geodesic enters a collision ball")
    dense = np.linspace(s1[0], s1[-1], 4001)
    g1_pts = _normalize(g1.solution.sol(dense)[0:3].T)

    hs, cos_as = [], []
    guess = None
    for t in t_values:
        c, cdot = _state_at(g2, t)
        c = c / np.linalg.norm(c)
        if guess is None:
            j = int(np.argmin(np.linalg.norm(g1_pts - c, axis=1)))
            n_j, w_j = _state_at(g1, dense[j])
            nu = np.cross(n_j, w_j)
            d = float(np.arcsin(min(np.linalg.norm(g1_pts[j] - c) / 2.0, 1.0)))
            h0 = math.copysign(d * math.sqrt(conformal_factor(sides_from_unit(c), m)), float(nu @ c))
            guess = np.array([dense[j], h0])
        helper = np.array([0.0, 0.0, 1.0]) if abs(c[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = _normalize(helper - (helper @ c) * c)
        e2 = np.cross(c, e1)

        def residual(x):
            n, w = _state_at(g1, x[0])
            nu = np.cross(n / np.linalg.norm(n), w)
            end, _ = _exp_map(n, nu, x[1], m)
            if not np.all(np.isfinite(end)):
                return np.array([1e3, 1e3])
            diff = end - c
            return np.array([diff @ e1, diff @ e2])

        if np.linalg.norm(residual(guess)) < 1e-14:
            sol_x = guess
        else:
            sol = optimize.root(residual, guess, method="hybr", options={"xtol": 1e-13})
            if not sol.success or np.linalg.norm(sol.fun) > 1e-10:
                raise PatchViolation(f"distance foot not found at t={t}: {sol.message}")
            sol_x = sol.x
        if not (s1[0] <= sol_x[0] <= s1[-1]):
            raise PatchViolation("foot point left the reference geodesic window")
        guess = sol_x
        n, w = _state_at(g1, sol_x[0])
        nu = np.cross(n / np.linalg.norm(n), w)
        _, u_end = _exp_map(n, nu, sol_x[1], m)
        h = abs(float(sol_x[1]))
        f = conformal_factor(sides_from_unit(c), m)
        cos_a = math.copysign(1.0, sol_x[1]) * 0.25 * f * float(cdot @ u_end) if h > 1e-13 else float("nan")
        hs.append(h)
        cos_as.append(cos_a)

    hs = np.array(hs)
    cos_as = np.array(cos_as)
    dh = np.gradient(hs, t_values, edge_order=2)
    d2h = np.full_like(hs, np.nan)
    dt = np.diff(t_values)
    d2h[1:-1] = 2.0 * ((hs[2:] - hs[1:-1]) / dt[1:] - (hs[1:-1] - hs[:-2]) / dt[:-1]) / (dt[1:] + dt[:-1])
    valid = hs > 1e-8
    fv = np.abs(dh - cos_as)[valid & np.isfinite(cos_as)]
    inner = np.zeros_like(valid)
    inner[1:-1] = valid[:-2] & valid[1:-1] & valid[2:]
    return ConvexityReport(
        t=t_values, h=hs, cos_a=cos_as, dh_dt=dh, d2h_dt2=d2h,
        first_variation_error=float(fv.max()) if fv.size else 0.0,
        min_second_derivative=float(np.nanmin(d2h[inner])) if np.any(inner) else 0.0,
    )


__all__ = [
    "ClosedGeodesic", "ConvexityReport", "DiscreteLoop", "RealizationResult", "UntiedRow",
    "compare_results", "convexity_probe", "discrete_length", "extrapolate_infimum", "hausdorff",
    "jm_length", "polygon_word", "realize", "same_class", "seed_loop", "shoot", "shorten",
    "symmetric_hausdorff", "symmetry_group", "untied_demo", "untied_end",
]
