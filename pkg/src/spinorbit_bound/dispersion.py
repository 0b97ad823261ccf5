"""Free spin-orbit symbols, dispersion laws, and location of the band minimum.

The free operator acts in momentum space as the 2x2 matrix

    [[ p^2,   A(p) ],
     [ A*(p), p^2  ]]

(units hbar = 2m = 1, so the kinetic symbol is exactly p^2).  Its
eigenvalue branches are lambda_pm(p) = p^2 +- |A(p)|.  The continuum
threshold kappa is the infimum of lambda_minus and the extremum set S is
where that infimum is attained: a circle for pure Rashba/Dresselhaus
coupling, a pair of antipodal points when both terms are present.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateGap, GrowthViolation, C2Violation


class CouplingKind(Enum):
    RASHBA = "rashba"
    DRESSELHAUS = "dresselhaus"
    MIXED = "mixed"
    CUSTOM = "custom"


@dataclass(frozen=True)
class CouplingSpec:
    """Off-diagonal symbol A(p) of the free operator.

    Presets are linear in momentum:
        Rashba        A(p) =  alpha_R (p_y + i p_x)
        Dresselhaus   A(p) = -alpha_D (p_x + i p_y)
        Mixed         sum of both
    Custom couplings supply a vectorized callable (px, py) -> complex.
    """

    kind: CouplingKind
    alpha_R: float = 0.0
    alpha_D: float = 0.0
    symbol: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    label: str = ""

    @staticmethod
    def rashba(alpha: float) -> "CouplingSpec":
        return CouplingSpec(CouplingKind.RASHBA, alpha_R=float(alpha),
                            label=f"rashba({alpha})")

    @staticmethod
    def dresselhaus(alpha: float) -> "CouplingSpec":
        return CouplingSpec(CouplingKind.DRESSELHAUS, alpha_D=float(alpha),
                            label=f"dresselhaus({alpha})")

    @staticmethod
    def mixed(alpha_R: float, alpha_D: float) -> "CouplingSpec":
        return CouplingSpec(CouplingKind.MIXED, alpha_R=float(alpha_R),
                            alpha_D=float(alpha_D),
                            label=f"mixed({alpha_R},{alpha_D})")

    @staticmethod
    def free() -> "CouplingSpec":
        return CouplingSpec(CouplingKind.MIXED, 0.0, 0.0, label="free")

    @staticmethod
    def custom(symbol, label="custom") -> "CouplingSpec":
        return CouplingSpec(CouplingKind.CUSTOM, symbol=symbol, label=label)

    @staticmethod
    def from_csv(path) -> "CouplingSpec":
        """Tabulated symbol: CSV columns px,py,ReA,ImA on a uniform grid,
        evaluated by bilinear interpolation (zero outside the extent)."""
        table = _SymbolTable.load(path)
        return CouplingSpec(CouplingKind.CUSTOM, symbol=table,
                            label=f"tabulated({path})")

    def A(self, px, py):
        """Vectorized off-diagonal symbol value."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        if self.kind is CouplingKind.CUSTOM:
            return np.asarray(self.symbol(px, py), dtype=complex)
        out = np.zeros(np.broadcast(px, py).shape, dtype=complex)
        if self.kind in (CouplingKind.RASHBA, CouplingKind.MIXED):
            out = out + self.alpha_R * (py + 1j * px)
        if self.kind in (CouplingKind.DRESSELHAUS, CouplingKind.MIXED):
            out = out - self.alpha_D * (px + 1j * py)
        return out

    @property
    def is_linear_preset(self) -> bool:
        return self.kind is not CouplingKind.CUSTOM

    @property
    def coupling_scale(self) -> float:
        """max_theta |A(e_theta)| for linear presets; sampled bound otherwise."""
        if self.is_linear_preset:
            # |A|^2 = (aR^2+aD^2) p^2 - 4 aR aD px py; max on unit circle:
            return math.sqrt(self.alpha_R**2 + self.alpha_D**2
                             + 2.0 * abs(self.alpha_R * self.alpha_D))
        th = np.linspace(0.0, 2.0 * np.pi, 512, endpoint=False)
        return float(np.max(np.abs(self.A(np.cos(th), np.sin(th)))))


class _SymbolTable:
    """Bilinear interpolation of a tabulated symbol on a uniform grid."""

    def __init__(self, px, py, values):
        self.px = px
        self.py = py
        self.values = values

    @staticmethod
    def load(path):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append((float(row["px"]), float(row["py"]),
                             float(row["ReA"]), float(row["ImA"])))
        if not rows:
            raise ValueError(f"empty symbol table: {path}")
        px = np.unique([r[0] for r in rows])
        py = np.unique([r[1] for r in rows])
        vals = np.full((px.size, py.size), np.nan, dtype=complex)
        ix = {v: i for i, v in enumerate(px)}
        iy = {v: i for i, v in enumerate(py)}
        for x, y, re, im in rows:
            vals[ix[x], iy[y]] = re + 1j * im
        if np.isnan(vals).any():
            raise ValueError(f"symbol table is not a full grid: {path}")
        return _SymbolTable(px, py, vals)

    def __call__(self, px, py):
        px = np.atleast_1d(np.asarray(px, dtype=float))
        py = np.atleast_1d(np.asarray(py, dtype=float))
        px, py = np.broadcast_arrays(px, py)
        gx, gy, v = self.px, self.py, self.values
        out = np.zeros(px.shape, dtype=complex)
        inside = ((px >= gx[0]) & (px <= gx[-1])
                  & (py >= gy[0]) & (py <= gy[-1]))
        if np.any(inside):
            xi = np.clip(np.searchsorted(gx, px[inside]) - 1, 0, gx.size - 2)
            yi = np.clip(np.searchsorted(gy, py[inside]) - 1, 0, gy.size - 2)
            tx = (px[inside] - gx[xi]) / (gx[xi + 1] - gx[xi])
            ty = (py[inside] - gy[yi]) / (gy[yi + 1] - gy[yi])
            out[inside] = ((1 - tx) * (1 - ty) * v[xi, yi]
                           + tx * (1 - ty) * v[xi + 1, yi]
                           + (1 - tx) * ty * v[xi, yi + 1]
                           + tx * ty * v[xi + 1, yi + 1])
        return out


@dataclass(frozen=True)
class DispersionSample:
    p: np.ndarray
    lambda_plus: float
    lambda_minus: float
    gap: float


class ShapeKind(Enum):
    CIRCLE = "circle"
    ISOLATED_POINTS = "isolated_points"
    CURVE = "curve"


@dataclass
class ExtremumSet:
    """kappa plus the located minimizers of lambda_minus."""

    kappa: float
    points: np.ndarray                 # (N, 2) representatives of S
    shape: ShapeKind
    radius: float | None = None        # circle radius, when shape is CIRCLE
    curvature_constant: float | None = None
    tol_extremum: float = 1e-9

    @property
    def diameter(self) -> float:
        if self.shape is ShapeKind.CIRCLE:
            return 2.0 * self.radius
        if len(self.points) < 2:
            return 0.0
        d = self.points[:, None, :] - self.points[None, :, :]
        return float(np.max(np.linalg.norm(d, axis=-1)))


# ---------------------------------------------------------------------------
# operations


def eval_symbol(coupling: CouplingSpec, p) -> np.ndarray:
    """2x2 matrix [[p^2, A(p)], [A*(p), p^2]] at one momentum."""
    p = np.asarray(p, dtype=float)
    a = complex(coupling.A(p[0], p[1]))
    p2 = float(p @ p)
    return np.array([[p2, a], [np.conj(a), p2]], dtype=complex)


def dispersion(coupling: CouplingSpec, p) -> DispersionSample:
    p = np.asarray(p, dtype=float)
    absA = float(np.abs(coupling.A(p[0], p[1])))
    p2 = float(p @ p)
    return DispersionSample(p=p, lambda_plus=p2 + absA,
                            lambda_minus=p2 - absA, gap=2.0 * absA)


def lambda_minus_grid(coupling: CouplingSpec, px, py):
    """Vectorized lower branch on arrays of momenta."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    return px * px + py * py - np.abs(coupling.A(px, py))


def default_eps_gap(p) -> float:
    p = np.asarray(p, dtype=float)
    return 1e-12 * max(1.0, float(p @ p))


def diagonalizer(coupling: CouplingSpec, p, *, strict=False, eps_gap=None):
    """Unitary M(p) with M H0(p) M^dag = diag(lambda_+, lambda_-).

    Phase convention: the lower-band eigenvector is (A/|A|, -1)/sqrt(2) and
    the upper-band one (A/|A|, 1)/sqrt(2); M carries their conjugates as
    rows.  No continuous global choice exists through zeros of A, so below
    eps_gap the identity is returned (the symbol is already diagonal
    there), or DegenerateGap is raised when strict.
    """
    p = np.asarray(p, dtype=float)
    a = complex(coupling.A(p[0], p[1]))
    gap = abs(a)
    threshold = default_eps_gap(p) if eps_gap is None else eps_gap
    if gap < threshold:
        if strict:
            raise DegenerateGap(
                f"|A(p)|={gap:.3e} < eps_gap={threshold:.3e} at p={p}")
        return np.eye(2, dtype=complex)
    c = a / gap
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    return np.array([[np.conj(c), 1.0], [np.conj(c), -1.0]],
                    dtype=complex) * inv_sqrt2


@dataclass
class SearchConfig:
    """Controls for the kappa/S search."""

    n_theta: int = 720
    n_radius: int = 400
    growth_margin: float = 0.05        # delta in the sub-quadratic condition
    growth_radius: float = 64.0        # circle on which the condition is checked
    tol_extremum: float | None = None  # default 1e-9 * max(1, |kappa|)
    theta_offset: float = 0.0          # rotate the angular grid (invariance checks)
    circle_min_points: int = 32
    isolated_max_clusters: int = 8


def check_growth(coupling: CouplingSpec, cfg: SearchConfig) -> float:
    """Verify sup |A|/p^2 < 1 - delta on the configured circle and return a
    search radius confining all minimizers of lambda_minus."""
    R = cfg.growth_radius
    th = np.linspace(0.0, 2.0 * np.pi, 1024, endpoint=False)
    absA = np.abs(coupling.A(R * np.cos(th), R * np.sin(th)))
    ratio = float(np.max(absA)) / (R * R)
    if ratio >= 1.0 - cfg.growth_margin:
        raise GrowthViolation(
            f"max |A|/p^2 = {ratio:.4f} >= 1 - {cfg.growth_margin} on the "
            f"circle p = {R}; cannot confine the minimizer search")
    if coupling.is_linear_preset:
        # lambda_- = p^2 - g(theta) p is increasing beyond p = g_max
        return max(1.0, 2.0 * coupling.coupling_scale)
    # generic: lambda_- >= p^2 - ratio_hat p^2 >= delta p^2 beyond the
    # checked circle, so minimizers with lambda_- <= 0 lie inside it;
    # a positive interior minimum is confirmed by the scan itself.
    return R


def _polar_grid_minima(coupling, radius, cfg):
    """Coarse polar scan; returns candidate minimizers near the global min.

    For each angle only the best radius is kept (the minimum in r is
    unique for each direction of every coupling in scope), so candidates
    are at most one per angular column, capped at 256 by decimation.
    """
    th = (np.linspace(0.0, 2.0 * np.pi, cfg.n_theta, endpoint=False)
          + cfg.theta_offset)
    r = np.linspace(0.0, radius, cfg.n_radius + 1)[1:]
    R, T = np.meshgrid(r, th, indexing="ij")
    PX, PY = R * np.cos(T), R * np.sin(T)
    lam = lambda_minus_grid(coupling, PX, PY)
    lam0 = float(lambda_minus_grid(coupling, 0.0, 0.0))   # origin handled once
    gmin = min(float(lam.min()), lam0)
    dr = r[1] - r[0]
    slack = max(4.0 * dr * dr + 4.0 * dr * (radius * 2.0 + coupling.coupling_scale),
                1e-9 * max(1.0, abs(gmin)))
    best_r = np.argmin(lam, axis=0)
    cols = np.arange(cfg.n_theta)
    col_min = lam[best_r, cols]
    keep = cols[col_min <= gmin + slack]
    if keep.size > 256:
        keep = keep[:: int(np.ceil(keep.size / 256))]
    cand = np.column_stack([PX[best_r[keep], keep], PY[best_r[keep], keep]])
    if lam0 <= gmin + slack:
        cand = np.vstack([cand, [0.0, 0.0]])
    return gmin, cand


def _refine(coupling, p0, tol):
    fun = lambda p: float(lambda_minus_grid(coupling, p[0], p[1]))
    res = minimize(fun, p0, method="Nelder-Mead",
                   options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 300})
    return res.x, float(res.fun)


def _cluster(points, eps):
    """Greedy merge of nearby points; returns cluster means."""
    clusters: list[list[np.ndarray]] = []
    for p in points:
        for cl in clusters:
            if np.linalg.norm(p - cl[0]) < eps:
                cl.append(p)
                break
        else:
            clusters.append([p])
    return np.array([np.mean(cl, axis=0) for cl in clusters])


def find_kappa_and_S(coupling: CouplingSpec,
                     cfg: SearchConfig | None = None) -> ExtremumSet:
    """Locate the continuum threshold kappa and the extremum set S.

    Strategy: verify the growth condition to get a confining ball, coarse
    polar scan, Nelder-Mead refinement of every near-minimal grid point,
    clustering, then shape classification (circle fit / isolated points /
    sampled curve).  A dense verification scan guarantees no sampled point
    dips below kappa - tol.
    """
    cfg = cfg or SearchConfig()
    radius = check_growth(coupling, cfg)
    gmin, cand = _polar_grid_minima(coupling, radius, cfg)

    refined = []
    values = []
    for p0 in cand:
        p, v = _refine(coupling, p0, max(1e-9, abs(gmin) * 1e-9))
        refined.append(p)
        values.append(v)
    refined = np.asarray(refined)
    values = np.asarray(values)
    kappa = float(values.min())
    tol = cfg.tol_extremum
    if tol is None:
        tol = 1e-9 * max(1.0, abs(kappa))

    on_S = refined[values <= kappa + tol]
    scale = max(1.0, float(np.max(np.linalg.norm(on_S, axis=1))))
    clusters = _cluster(on_S, eps=1e-4 * scale)

    # classification
    radii = np.linalg.norm(on_S, axis=1)
    shape = ShapeKind.CURVE
    circ_radius = None
    points = clusters
    if len(on_S) >= cfg.circle_min_points:
        rbar = float(np.mean(radii))
        if (rbar > max(1e3 * tol, 1e-6 * scale)
                and float(np.max(np.abs(radii - rbar))) < max(tol, 1e-7 * scale)):
            # radius alone does not make a circle: require angular coverage
            ang = np.sort(np.arctan2(on_S[:, 1], on_S[:, 0]))
            gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
            if float(np.max(gaps)) < np.pi / 4:
                shape = ShapeKind.CIRCLE
                circ_radius = rbar
                points = on_S[np.argsort(np.arctan2(on_S[:, 1], on_S[:, 0]))]
    if shape is not ShapeKind.CIRCLE:
        if len(clusters) <= cfg.isolated_max_clusters:
            shape = ShapeKind.ISOLATED_POINTS
            points = clusters
        else:
            shape = ShapeKind.CURVE
            points = on_S

    out = ExtremumSet(kappa=kappa, points=np.atleast_2d(points),
                      shape=shape, radius=circ_radius, tol_extremum=tol)

    # verification scan: nothing below kappa - tol on a fresh dense grid
    th = np.linspace(0.0, 2.0 * np.pi, 2 * cfg.n_theta, endpoint=False) + 0.37
    r = np.linspace(1e-9, radius, cfg.n_radius)
    R, T = np.meshgrid(r, th, indexing="ij")
    lam = lambda_minus_grid(coupling, R * np.cos(T), R * np.sin(T))
    if float(lam.min()) < kappa - tol:
        raise GrowthViolation(
            "verification scan found lambda_minus below the reported kappa; "
            "search grid too coarse for this coupling")
    out.curvature_constant = quadratic_constant(coupling, out)
    return out


def dist_to_S(extremum_set: ExtremumSet, px, py):
    """Distance from momenta to the extremum set."""
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    if extremum_set.shape is ShapeKind.CIRCLE:
        return np.abs(np.hypot(px, py) - extremum_set.radius)
    pts = extremum_set.points
    d = np.full(np.broadcast(px, py).shape, np.inf)
    for q in pts:
        d = np.minimum(d, np.hypot(px - q[0], py - q[1]))
    return d


def quadratic_constant(coupling: CouplingSpec,
                       extremum_set: ExtremumSet,
                       *, n_grid: int = 160, reach: float = 4.0) -> float:
    """Constant c with lambda_minus(p) - kappa <= c dist(p, S)^2 on a
    validation grid around S, inflated 10%.

    Raises C2Violation when the local ratio keeps growing under grid
    refinement (the symbol is not C^2 near S).
    """
    kappa = extremum_set.kappa
    scale = max(1.0, extremum_set.diameter)

    def max_ratio(n):
        lim = reach * scale
        x = np.linspace(-lim, lim, n)
        ratios = []
        for q in extremum_set.points[: min(len(extremum_set.points), 8)]:
            PX, PY = np.meshgrid(q[0] + x, q[1] + x, indexing="ij")
            lam = lambda_minus_grid(coupling, PX, PY)
            d2 = dist_to_S(extremum_set, PX, PY) ** 2
            ok = d2 > (1e-3 * scale) ** 2
            ratios.append(np.max((lam[ok] - kappa) / d2[ok]))
        return float(max(ratios))

    c1 = max_ratio(n_grid)
    c2 = max_ratio(2 * n_grid)
    if c2 > 4.0 * c1 + 1e-6:
        raise C2Violation(
            f"quadratic-bound ratio not stable under refinement: {c1:.3g} -> {c2:.3g}")
    return 1.1 * max(c1, c2)


def mixed_extremum_direction(alpha_R: float, alpha_D: float) -> np.ndarray:
    """Unit direction of the two-point extremum set for a mixed coupling.

    For alpha_R*alpha_D > 0 the minimizing direction is (1,-1)/sqrt(2)
    (points +-(alpha_R+alpha_D, -(alpha_R+alpha_D))/(2 sqrt 2)); for
    alpha_R*alpha_D < 0 it is (1,1)/sqrt(2).
    """
    if alpha_R * alpha_D > 0:
        v = np.array([alpha_R + alpha_D, -(alpha_R + alpha_D)])
    else:
        v = np.array([alpha_R - alpha_D, alpha_R - alpha_D])
    n = np.linalg.norm(v)
    if n == 0:
        raise ValueError("direction undefined when both couplings vanish")
    return v / n
