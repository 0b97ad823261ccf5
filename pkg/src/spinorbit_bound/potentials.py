"""Short-range potential wells with integrals and Fourier transforms.

One Fourier convention is fixed package-wide:

    Vhat(p) = (2 pi)^-1 integral V(x) exp(-i p.x) dx

so Vhat(0) = (2 pi)^-1 integral V, and the small-exponent limit of the
trial-family potential matrix reads 2 pi e^-1 Vhat(p_m - p_n).  This is
the unique normalization in 2D for which the transform of wavefunctions
is unitary (Plancherel without extra factors).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import j1

from .errors import OutOfExtent

FOURIER_CONVENTION = "Vhat(p) = (2*pi)**-1 * integral V(x) exp(-i*p*x) dx"


class SignCertificate(Enum):
    NON_POSITIVE = "non_positive"
    INDEFINITE = "indefinite"
    UNKNOWN = "unknown"


class PotentialKind(Enum):
    GAUSSIAN_WELL = "gaussian_well"
    CIRCULAR_WELL = "circular_well"
    TABULATED = "tabulated"
    ZERO = "zero"


@dataclass(frozen=True)
class PotentialSpec:
    """A real scalar well V(x).

    Presets use depth U > 0 and radius R:
        GaussianWell   V(x) = -U exp(-|x|^2 / (2 R^2))
        CircularWell   V(x) = -U for |x| <= R, else 0
    Tabulated wells live on a uniform grid (CSV header x,y,V).
    """

    kind: PotentialKind
    U: float = 0.0
    R: float = 1.0
    table: "_PotentialTable | None" = None
    lenient: bool = False

    @staticmethod
    def gaussian(U, R=1.0) -> "PotentialSpec":
        return PotentialSpec(PotentialKind.GAUSSIAN_WELL, U=float(U), R=float(R))

    @staticmethod
    def circular(U, R=1.0) -> "PotentialSpec":
        return PotentialSpec(PotentialKind.CIRCULAR_WELL, U=float(U), R=float(R))

    @staticmethod
    def zero() -> "PotentialSpec":
        return PotentialSpec(PotentialKind.ZERO)

    @staticmethod
    def from_csv(path, lenient=False) -> "PotentialSpec":
        return PotentialSpec(PotentialKind.TABULATED,
                             table=_PotentialTable.load(path), lenient=lenient)

    @property
    def sign_certificate(self) -> SignCertificate:
        if self.kind is PotentialKind.ZERO:
            return SignCertificate.NON_POSITIVE
        if self.kind in (PotentialKind.GAUSSIAN_WELL, PotentialKind.CIRCULAR_WELL):
            return (SignCertificate.NON_POSITIVE if self.U > 0
                    else SignCertificate.INDEFINITE)
        if self.table is not None:
            vmax = float(self.table.values.max())
            if vmax <= 1e-14 * max(1.0, abs(float(self.table.values.min()))):
                return SignCertificate.NON_POSITIVE
            return SignCertificate.INDEFINITE
        return SignCertificate.UNKNOWN

    @property
    def is_radial(self) -> bool:
        return self.kind is not PotentialKind.TABULATED

    @property
    def is_zero(self) -> bool:
        if self.kind is PotentialKind.ZERO:
            return True
        if self.kind is PotentialKind.TABULATED:
            return bool(np.all(self.table.values == 0.0))
        return self.U == 0.0

    def radial_cutoff(self, tail=1e-16) -> float:
        """Radius beyond which |V| is below `tail` times the peak depth."""
        if self.kind is PotentialKind.GAUSSIAN_WELL:
            return self.R * math.sqrt(2.0 * math.log(1.0 / tail))
        if self.kind is PotentialKind.CIRCULAR_WELL:
            return self.R
        if self.kind is PotentialKind.ZERO:
            return 1.0
        return float(self.table.extent)

    def radial_profile(self, r):
        """V(r) for radially symmetric presets (vectorized)."""
        r = np.asarray(r, dtype=float)
        if self.kind is PotentialKind.GAUSSIAN_WELL:
            return -self.U * np.exp(-r * r / (2.0 * self.R * self.R))
        if self.kind is PotentialKind.CIRCULAR_WELL:
            return np.where(r <= self.R, -self.U, 0.0)
        if self.kind is PotentialKind.ZERO:
            return np.zeros_like(r)
        raise ValueError("tabulated potentials have no radial profile")


class _PotentialTable:
    """Uniform-grid samples of V with bilinear evaluation."""

    def __init__(self, x, y, values):
        self.x = x
        self.y = y
        self.values = values
        self.hx = x[1] - x[0] if x.size > 1 else 1.0
        self.hy = y[1] - y[0] if y.size > 1 else 1.0

    @property
    def extent(self):
        return max(abs(self.x[0]), abs(self.x[-1]),
                   abs(self.y[0]), abs(self.y[-1]))

    @staticmethod
    def load(path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((float(row["x"]), float(row["y"]), float(row["V"])))
        if not rows:
            raise ValueError(f"empty potential table: {path}")
        x = np.unique([r[0] for r in rows])
        y = np.unique([r[1] for r in rows])
        for g, name in ((x, "x"), (y, "y")):
            if g.size > 2:
                steps = np.diff(g)
                if not np.allclose(steps, steps[0], rtol=1e-8, atol=1e-12):
                    raise ValueError(f"{name}-grid of {path} is not uniform")
        vals = np.full((x.size, y.size), np.nan)
        ix = {v: i for i, v in enumerate(x)}
        iy = {v: i for i, v in enumerate(y)}
        for xv, yv, vv in rows:
            vals[ix[xv], iy[yv]] = vv
        if np.isnan(vals).any():
            raise ValueError(f"potential table is not a full grid: {path}")
        return _PotentialTable(x, y, vals)

    @staticmethod
    def from_samples(x, y, values):
        return _PotentialTable(np.asarray(x, float), np.asarray(y, float),
                               np.asarray(values, float))

    def __call__(self, x, y, lenient=False):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx, gy, v = self.x, self.y, self.values
        inside = ((x >= gx[0]) & (x <= gx[-1]) & (y >= gy[0]) & (y <= gy[-1]))
        if not np.all(inside):
            if not lenient:
                raise OutOfExtent("evaluation point outside tabulated extent")
            warnings.warn("potential evaluated outside tabulated extent; "
                          "returning 0 there", stacklevel=2)
        out = np.zeros(np.broadcast(x, y).shape)
        xi = np.clip(np.searchsorted(gx, x[inside]) - 1, 0, gx.size - 2)
        yi = np.clip(np.searchsorted(gy, y[inside]) - 1, 0, gy.size - 2)
        tx = (x[inside] - gx[xi]) / self.hx
        ty = (y[inside] - gy[yi]) / self.hy
        out[inside] = ((1 - tx) * (1 - ty) * v[xi, yi]
                       + tx * (1 - ty) * v[xi + 1, yi]
                       + (1 - tx) * ty * v[xi, yi + 1]
                       + tx * ty * v[xi + 1, yi + 1])
        return out


# ---------------------------------------------------------------------------
# operations


def eval_potential(spec: PotentialSpec, x):
    """V at a position (scalar or (..., 2) array of positions)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if spec.kind is PotentialKind.TABULATED:
        vals = spec.table(pts[..., 0], pts[..., 1], lenient=spec.lenient)
    else:
        vals = spec.radial_profile(np.hypot(pts[..., 0], pts[..., 1]))
    return float(vals[0]) if single else vals


def integral_V(spec: PotentialSpec):
    """integral of V over the plane; (value, error_estimate)."""
    if spec.kind is PotentialKind.GAUSSIAN_WELL:
        return -2.0 * math.pi * spec.U * spec.R**2, 0.0
    if spec.kind is PotentialKind.CIRCULAR_WELL:
        return -math.pi * spec.U * spec.R**2, 0.0
    if spec.kind is PotentialKind.ZERO:
        return 0.0, 0.0
    t = spec.table
    full = float(np.trapezoid(np.trapezoid(t.values, dx=t.hy, axis=1), dx=t.hx))
    coarse = float(np.trapezoid(np.trapezoid(t.values[::2, ::2],
                                             dx=2 * t.hy, axis=1), dx=2 * t.hx))
    return full, abs(full - coarse) / 3.0   # Richardson error estimate


def fourier_V(spec: PotentialSpec, p):
    """Vhat(p) under the fixed convention; vectorized over (..., 2) momenta.

    Closed forms for the presets; for tabulated wells a direct discrete
    transform (2 pi)^-1 h^2 sum V exp(-i p.x) over the grid.
    """
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    pts = np.atleast_2d(p)
    pr = np.hypot(pts[..., 0], pts[..., 1])
    if spec.kind is PotentialKind.GAUSSIAN_WELL:
        out = -spec.U * spec.R**2 * np.exp(-spec.R**2 * pr**2 / 2.0)
    elif spec.kind is PotentialKind.CIRCULAR_WELL:
        z = pr * spec.R
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(z < 1e-8,
                           -spec.U * spec.R**2 / 2.0 * (1.0 - z * z / 8.0),
                           -spec.U * spec.R * j1(z) / np.where(z == 0, 1.0, pr))
    elif spec.kind is PotentialKind.ZERO:
        out = np.zeros(pr.shape)
    else:
        t = spec.table
        X, Y = np.meshgrid(t.x, t.y, indexing="ij")
        phase = np.exp(-1j * (np.tensordot(pts[..., 0], X, axes=0)
                              + np.tensordot(pts[..., 1], Y, axes=0)))
        out = (t.hx * t.hy / (2.0 * math.pi)
               * np.tensordot(phase, t.values, axes=([-2, -1], [0, 1])))
    if single:
        out = complex(out[0])
        return out.real if abs(out.imag) < 1e-300 else out
    return out


def tabulate(spec: PotentialSpec, n=256, extent=None) -> PotentialSpec:
    """Sample a preset onto a uniform grid (testing aid for the CSV path)."""
    if extent is None:
        extent = spec.radial_cutoff(1e-12)
    x = np.linspace(-extent, extent, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    vals = spec.radial_profile(np.hypot(X, Y))
    return PotentialSpec(PotentialKind.TABULATED,
                         table=_PotentialTable.from_samples(x, x, vals))


def write_csv(spec: PotentialSpec, path):
    t = spec.table
    if t is None:
        raise ValueError("only tabulated potentials can be written")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "V"])
        for i, xv in enumerate(t.x):
            for jcol, yv in enumerate(t.y):
                w.writerow([repr(xv), repr(yv), repr(t.values[i, jcol])])
