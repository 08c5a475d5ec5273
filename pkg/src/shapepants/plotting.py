"""SVG output through matplotlib's Agg backend."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .shape_geometry import COLLISION_THETAS, from_unit  # noqa: E402

_SVG_META = {"Date": None}


def _save(fig, path) -> None:
    plt.rcParams["svg.hashsalt"] = "shapepants"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def _points(obj) -> np.ndarray:
    if hasattr(obj, "units"):
        return np.asarray(obj.units)
    return np.asarray(obj, dtype=float)


def _break_wraps(theta: np.ndarray, phi: np.ndarray):
    jumps = np.abs(np.diff(theta)) > math.pi
    theta = theta.astype(float).copy()
    phi = phi.astype(float).copy()
    idx = np.nonzero(jumps)[0] + 1
    return np.insert(theta, idx, np.nan), np.insert(phi, idx, np.nan)


def trace_figure(traces, path, title: str = "") -> None:
    """Plot one trace or a list of traces of unit vectors in the (theta, phi) plane."""
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for tr in traces:
        phi, theta = from_unit(_points(tr))
        t, p = _break_wraps(np.atleast_1d(theta), np.atleast_1d(phi))
        ax.plot(t, p, lw=0.9)
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.plot(COLLISION_THETAS, np.zeros(3), "kx", ms=7)
    ax.set_xlim(0.0, 2.0 * math.pi)
    ax.set_ylim(-math.pi / 2, math.pi / 2)
    ax.set_xlabel("theta")
    ax.set_ylabel("phi")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def heatmap_figure(phi, theta, values, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7, 3.6))
    vmax = np.nanmax(np.abs(values))
    mesh = ax.pcolormesh(theta, phi, values, shading="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax,
                         rasterized=True)
    fig.colorbar(mesh, ax=ax)
    ax.plot(COLLISION_THETAS, np.zeros(3), "kx", ms=7)
    ax.set_xlabel("theta")
    ax.set_ylabel("phi")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
