"""Shared Gauss-Legendre panel quadrature helpers."""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gl_rule(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = leggauss(n)
    return _GL_CACHE[n]


def panel_nodes(breakpoints, pts_per_panel=24):
    """Gauss-Legendre nodes/weights on consecutive panels.

    Returns flat arrays (nodes, weights) covering
    [breakpoints[0], breakpoints[-1]].
    """
    bp = np.asarray(breakpoints, dtype=float)
    x, w = gl_rule(pts_per_panel)
    lo, hi = bp[:-1], bp[1:]
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = (mid + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def geometric_breakpoints(inner, outer, per_decade=6, lead_zero=True):
    """Panel boundaries growing geometrically from `inner` to `outer`,
    optionally with a [0, inner] lead panel."""
    if outer <= inner:
        return np.array([0.0, outer]) if lead_zero else np.array([inner, outer])
    n = max(2, int(np.ceil(per_decade * np.log10(outer / inner))) + 1)
    bp = np.geomspace(inner, outer, n)
    if lead_zero:
        bp = np.concatenate([[0.0], bp])
    return bp


def integrate_radial(f, breakpoints, pts_per_panel=24):
    """integral f(r) dr over panels; f vectorized."""
    nodes, weights = panel_nodes(breakpoints, pts_per_panel)
    return float(np.sum(f(nodes) * weights))
