"""Trial family f_a(x) = exp(-|x|^a/2), its transforms, and Rayleigh-Ritz
upper bounds on eigenvalues below the continuum threshold.

The trial spinors are built from modulated copies of f_a anchored at
points of the extremum set S.  Everything reduces to three matrices over
anchors p_1..p_N:

    K_mn = int (lambda_-(p) - kappa) fhat_a*(p-p_m) fhat_a(p-p_n) dp
    W_mn = int V(x) exp(i (p_m-p_n).x) |f_a(x)|^2 dx
    G_mn = int fhat_a*(p-p_m) fhat_a(p-p_n) dp

Generalized eigenvalues mu of (K+W, G) give candidate upper bounds
nu_n = kappa + mu_n; every mu_n below a quadrature-error margin certifies
one eigenvalue of H below kappa (max-min principle).

fhat_a is the radial profile of the unitary 2D transform,
fhat_a(s) = int_0^inf exp(-r^a/2) J0(s r) r dr, which is nonnegative for
0 < a <= 2.  It is evaluated by a hybrid scheme: Gauss-Legendre panels
between Bessel zeros where the integration domain is affordable, and the
convergent origin-singularity series

    fhat_a(s) = sum_{k>=1} (-1/2)^k/k! * 2^{ak+1} * (-sin(pi a k/2)/pi)
                * Gamma(1+ak/2)^2 * s^{-ak-2}

elsewhere (absolutely convergent for every s > 0 when a < 1).  Exact
closed forms are used at a = 2 and a = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, eigvalsh
from scipy.special import ellipe, gamma, gammaln, j0, jn_zeros

from ._quadrature import geometric_breakpoints, panel_nodes
from .dispersion import (CouplingKind, CouplingSpec, ExtremumSet, ShapeKind,
                         lambda_minus_grid)
from .errors import (AllGramsIllConditioned, DuplicateAnchors,
                     IllConditionedGram, QuadratureFailure)
from .potentials import PotentialKind, PotentialSpec

# ---------------------------------------------------------------------------
# the radial trial function


@dataclass(frozen=True)
class FaProfile:
    """f_a with its exact norms: ||f_a||^2 = 2 pi Gamma(2/a)/a and
    ||grad f_a||^2 = pi a / 2."""

    a: float

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-0.5 * np.abs(r) ** self.a)

    @property
    def norm_sq(self) -> float:
        return 2.0 * math.pi * gamma(2.0 / self.a) / self.a

    @property
    def grad_norm_sq(self) -> float:
        return math.pi * self.a / 2.0

    def support_radius(self, tail=1e-18) -> float:
        """Radius where f_a^2 drops below `tail`."""
        return (2.0 * math.log(1.0 / tail)) ** (1.0 / self.a)

    def numeric_norm_sq(self, pts=32) -> float:
        bp = geometric_breakpoints(1e-6, self.support_radius(), per_decade=8)
        r, w = panel_nodes(bp, pts)
        return float(2.0 * math.pi * np.sum(np.exp(-r ** self.a) * r * w))

    def numeric_grad_norm_sq(self, pts=32) -> float:
        a = self.a
        bp = geometric_breakpoints(1e-9, self.support_radius(), per_decade=8)
        r, w = panel_nodes(bp, pts)
        integrand = 0.25 * a * a * r ** (2 * a - 2) * np.exp(-r ** a) * r
        return float(2.0 * math.pi * np.sum(integrand * w))


def f_a_profile(a: float) -> FaProfile:
    if a <= 0:
        raise ValueError(f"exponent must be positive, got {a}")
    return FaProfile(float(a))


# ---------------------------------------------------------------------------
# radial Fourier profile fhat_a

_BESSEL_ZEROS = np.array([])


def _bessel_zeros(n):
    global _BESSEL_ZEROS
    if _BESSEL_ZEROS.size < n:
        _BESSEL_ZEROS = jn_zeros(0, int(1.3 * n) + 64)
    return _BESSEL_ZEROS[:n]


class FhatProfile:
    """Evaluator for fhat_a(s) with per-point error estimates."""

    MAX_PANELS = 30000
    SERIES_KMAX = 3000
    CANCEL_LIMIT = 1e5        # accept series while <= 5 digits are lost

    def __init__(self, a: float, eps_domain: float = 1e-18):
        if a <= 0:
            raise ValueError(f"exponent must be positive, got {a}")
        self.a = float(a)
        self.r_max = (2.0 * math.log(1.0 / eps_domain)) ** (1.0 / a)
        self._series_coef = None
        self._defect_cache: dict[float, tuple[float, float]] = {}
        # exact moments of |fhat|^2 under the unitary convention
        self.norm_sq = 2.0 * math.pi * gamma(2.0 / a) / a      # m0
        self.second_moment = math.pi * a / 2.0                 # m2
        self.peak = 2.0 ** (2.0 / a) * gamma(2.0 / a) / a      # fhat(0)
        self.core_width = math.sqrt(2.0 / self.peak)

    # -- series path --------------------------------------------------

    def _coefficients(self):
        """Signed log-magnitude coefficients of the origin series."""
        if self._series_coef is None:
            a = self.a
            k = np.arange(1, self.SERIES_KMAX + 1, dtype=float)
            sg = np.sin(np.pi * a * k / 2.0)
            sign = np.where(k % 2 == 0, 1.0, -1.0) * (-sg) / np.pi
            ln_mag = (k * math.log(0.5) - gammaln(k + 1.0)
                      + (a * k + 1.0) * math.log(2.0)
                      + 2.0 * gammaln(1.0 + a * k / 2.0))
            keep = sg != 0.0
            self._series_coef = (k[keep], sign[keep], ln_mag[keep])
        return self._series_coef

    def _series_pass(self, s, k, sign, ln_mag):
        """One vectorized summation over a fixed term count."""
        a = self.a
        need = max(12, int(8.0 / a))
        lgs = np.log(s)
        ln_t = ln_mag[:, None] - (a * k[:, None] + 2.0) * lgs[None, :]
        overflow = np.any(ln_t > 700.0, axis=0)
        with np.errstate(over="ignore", under="ignore"):
            t = sign[:, None] * np.exp(np.minimum(ln_t, 700.0))
        total = t.sum(axis=0)
        absmax = np.abs(t).max(axis=0)
        # converged iff the trailing `need` terms are all negligible
        tail = np.abs(t[-need:, :])
        converged = np.all(tail <= 5e-17 * np.maximum(np.abs(total)[None, :],
                                                      1e-300), axis=0)
        cancel = absmax / np.maximum(np.abs(total), 1e-300)
        return total, cancel, converged & ~overflow

    def _series(self, s):
        """Vectorized series; returns (values, err, ok)."""
        k, sign, ln_mag = self._coefficients()
        vals = np.zeros(s.shape)
        errs = np.full(s.shape, np.inf)
        ok = np.zeros(s.shape, dtype=bool)
        todo = np.arange(s.size)
        for kmax in (160, 640, self.SERIES_KMAX):
            m = min(kmax, k.size)
            for lo in range(0, todo.size, 1024):
                idx = todo[lo:lo + 1024]
                v, cancel, conv = self._series_pass(s[idx], k[:m], sign[:m],
                                                    ln_mag[:m])
                usable = conv & (cancel <= 1e12)
                vals[idx] = np.where(usable, v, vals[idx])
                errs[idx] = np.where(usable,
                                     np.abs(v) * (cancel * 2e-16 + 1e-15),
                                     np.inf)
                ok[idx] = usable & (cancel <= self.CANCEL_LIMIT)
            todo = todo[~np.isfinite(errs[todo])]
            if todo.size == 0:
                break
        return vals, errs, ok

    # -- quadrature path ----------------------------------------------

    def _quad_single(self, s, pts=20):
        a = self.a
        n_osc = int(s * self.r_max / math.pi) + 1
        if n_osc > self.MAX_PANELS:
            return np.nan, np.inf
        env = geometric_breakpoints(min(1e-8, self.r_max * 1e-10),
                                    self.r_max, per_decade=10)
        if s > 0 and n_osc > 1:
            bz = _bessel_zeros(n_osc) / s
            bp = np.unique(np.concatenate([env, bz[bz < self.r_max]]))
        else:
            bp = env
        vals = []
        for p in (pts, max(8, pts // 2)):
            r, w = panel_nodes(bp, p)
            vals.append(float(np.sum(np.exp(-0.5 * r ** a) * j0(s * r) * r * w)))
        err = abs(vals[0] - vals[1]) + 1e-15 * abs(vals[0])
        return vals[0], err

    # -- public evaluation ---------------------------------------------

    def with_errors(self, s):
        """(values, error bounds) for an array of radii s >= 0."""
        a = self.a
        s = np.asarray(s, dtype=float)
        shape = s.shape
        s = np.atleast_1d(s).ravel()
        vals = np.empty(s.shape)
        errs = np.empty(s.shape)
        if a == 2.0:
            vals = np.exp(-0.5 * s * s)
            errs = 4e-16 * vals
            return vals.reshape(shape), errs.reshape(shape)
        if a == 1.0:
            vals = 0.5 * (0.25 + s * s) ** -1.5
            errs = 4e-16 * vals
            return vals.reshape(shape), errs.reshape(shape)
        pos = s > 0
        if a < 1.0 and np.any(pos):
            sv, se, ok = self._series(s[pos])
        else:
            sv = np.zeros(np.count_nonzero(pos))
            se = np.full(sv.shape, np.inf)
            ok = np.zeros(sv.shape, dtype=bool)
        vals[~pos] = self.peak
        errs[~pos] = 1e-15 * self.peak
        vp = np.empty(sv.shape)
        ep = np.empty(sv.shape)
        vp[ok] = sv[ok]
        ep[ok] = se[ok]
        for i in np.flatnonzero(~ok):
            v, e = self._quad_single(s[pos][i])
            if not np.isfinite(e):
                # oscillatory domain too large: fall back to the series
                # value when it at least converged, with its larger error
                if np.isfinite(se[i]):
                    v, e = sv[i], se[i]
                else:
                    raise QuadratureFailure(
                        f"fhat_{a}({s[pos][i]:.3e}): series rejected and "
                        f"oscillatory domain too large for panel quadrature")
            vp[i], ep[i] = v, e
        vals[pos] = vp
        errs[pos] = ep
        return vals.reshape(shape), errs.reshape(shape)

    def __call__(self, s):
        return self.with_errors(s)[0]

    # -- integral helpers ----------------------------------------------

    def _radial_nodes(self, r_outer, per_decade=8, pts=24):
        inner = max(self.core_width * 1e-3, r_outer * 1e-14)
        bp = geometric_breakpoints(inner, r_outer, per_decade=per_decade)
        return panel_nodes(bp, pts)

    def weighted_moment(self, fn, r_outer, per_decade=8, pts=24):
        """2 pi int_0^R fn(s) fhat(s)^2 s ds with propagated error."""
        snodes, w = self._radial_nodes(r_outer, per_decade, pts)
        fv, fe = self.with_errors(snodes)
        g = np.asarray(fn(snodes), dtype=float)
        val = 2.0 * math.pi * float(np.sum(g * fv * fv * snodes * w))
        err = 2.0 * math.pi * float(np.sum(np.abs(g) * 2 * fv * fe * snodes
                                           * np.abs(w)))
        return val, err

    def mass_defects(self, r_outer):
        """(D0, D2): tails of m0 and m2 beyond radius R, from the exact
        moment identities minus the computed within-R parts."""
        key = float(r_outer)
        if key not in self._defect_cache:
            m0_in, e0 = self.weighted_moment(lambda s: np.ones_like(s), r_outer)
            m2_in, e2 = self.weighted_moment(lambda s: s * s, r_outer)
            d0 = max(0.0, self.norm_sq - m0_in) + e0
            d2 = max(0.0, self.second_moment - m2_in) + e2
            self._defect_cache[key] = (d0, d2)
        return self._defect_cache[key]

    def plancherel_numeric(self, r_outer=None, per_decade=10, pts=32):
        """Numeric int |fhat|^2 dp including a series tail estimate."""
        a = self.a
        if r_outer is None:
            r_outer = 2000.0 if a < 2 else 40.0
        val, err = self.weighted_moment(lambda s: np.ones_like(s), r_outer,
                                        per_decade, pts)
        if a < 2:
            c1 = math.sin(math.pi * a / 2) * 2.0 ** a * gamma(1 + a / 2) ** 2 / math.pi
            tail = 2.0 * math.pi * c1 * c1 * r_outer ** (-2 - 2 * a) / (2 + 2 * a)
        else:
            tail = 0.0
        return val + tail, err + 0.1 * tail


_PROFILE_CACHE: dict[float, FhatProfile] = {}


def fhat_profile(a: float) -> FhatProfile:
    key = float(a)
    if key not in _PROFILE_CACHE:
        _PROFILE_CACHE[key] = FhatProfile(key)
    return _PROFILE_CACHE[key]


def f_hat(a: float, p):
    """Radial profile of the transform of f_a at radius p (scalar or array)."""
    prof = fhat_profile(a)
    out = prof(np.asarray(p, dtype=float))
    return float(out) if np.isscalar(p) or np.asarray(p).ndim == 0 else out


# ---------------------------------------------------------------------------
# trial family


@dataclass
class TrialFamily:
    a: float
    anchors: np.ndarray                  # (N, 2), points of S
    f_hat_cache: FhatProfile = field(repr=False, default=None)

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError(f"exponent must be positive, got {self.a}")
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        if self.f_hat_cache is None:
            self.f_hat_cache = fhat_profile(self.a)

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)


def _farthest_point_subset(points, n):
    pts = np.asarray(points, dtype=float)
    chosen = [0]
    d = np.linalg.norm(pts - pts[0], axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, np.linalg.norm(pts - pts[nxt], axis=1))
    return pts[chosen]


def build_trial_family(coupling: CouplingSpec, extremum_set: ExtremumSet,
                       n_anchors: int, a: float, *,
                       angle_offset: float = 0.0,
                       sep_min_factor: float = 0.05) -> TrialFamily:
    """Place anchors on S (equally spaced on a circle, all isolated points,
    farthest-point sample of a curve) and validate the family."""
    S = extremum_set
    if S.shape is ShapeKind.CIRCLE:
        th = angle_offset + 2.0 * np.pi * np.arange(n_anchors) / n_anchors
        anchors = S.radius * np.column_stack([np.cos(th), np.sin(th)])
    elif S.shape is ShapeKind.ISOLATED_POINTS:
        if n_anchors > len(S.points):
            raise ValueError(
                f"requested {n_anchors} anchors but S has only "
                f"{len(S.points)} isolated points")
        anchors = np.asarray(S.points[:n_anchors], dtype=float)
    else:
        anchors = _farthest_point_subset(S.points, n_anchors)

    lam = lambda_minus_grid(coupling, anchors[:, 0], anchors[:, 1])
    slack = 100.0 * max(S.tol_extremum, 1e-12 * max(1.0, abs(S.kappa)))
    if np.any(np.abs(lam - S.kappa) > slack):
        raise ValueError("anchor off the extremum set: "
                         f"max |lambda_- - kappa| = {np.max(np.abs(lam - S.kappa)):.3e}")
    if n_anchors > 1:
        d = np.linalg.norm(anchors[:, None, :] - anchors[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        sep_min = sep_min_factor * max(S.diameter, 1e-300)
        if d.min() < sep_min:
            raise DuplicateAnchors(
                f"anchor separation {d.min():.3e} below minimum {sep_min:.3e}")
    return TrialFamily(a=float(a), anchors=anchors)


# ---------------------------------------------------------------------------
# matrix assembly


@dataclass
class VariationalMatrices:
    K: np.ndarray
    W: np.ndarray
    G: np.ndarray
    err_K: np.ndarray
    err_W: np.ndarray
    err_G: np.ndarray
    a: float
    anchors: np.ndarray

    @property
    def quadrature_error(self):
        return self.err_K + self.err_W + self.err_G


def _is_isotropic(coupling: CouplingSpec) -> bool:
    """|A(p)| = const * |p| holds for the pure presets and the free case."""
    if coupling.kind in (CouplingKind.RASHBA, CouplingKind.DRESSELHAUS):
        return True
    if coupling.kind is CouplingKind.MIXED:
        return coupling.alpha_R == 0.0 or coupling.alpha_D == 0.0
    return False


def _circle_mean_excess(center_radius, s, n_theta=96):
    """Angular mean of |p| - p0 over the circle |p - p0_vec| = s, computed
    without cancellation.

    For s < p0/2 the integrand is written as
        (s^2 + 2 p0 s cos t) / (sqrt(p0^2 + s^2 + 2 p0 s cos t) + p0)
    (exact rationalization, no large-term difference); beyond that the
    elliptic-integral closed form (2/pi)(p0+s)E(m) - p0 is safe.
    """
    p = float(center_radius)
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    near = s < 0.5 * p if p > 0 else np.zeros(s.shape, dtype=bool)
    if np.any(near):
        x, w = panel_nodes(np.array([0.0, np.pi]), n_theta)
        sn = s[near][:, None]
        ct = np.cos(x)[None, :]
        num = sn * sn + 2.0 * p * sn * ct
        den = np.sqrt(p * p + sn * sn + 2.0 * p * sn * ct) + p
        out[near] = (num / den) @ w / np.pi
    far = ~near
    if np.any(far):
        sf = s[far]
        tot = p + sf
        with np.errstate(invalid="ignore", divide="ignore"):
            m = np.where(tot > 0, 4.0 * p * sf / np.where(tot > 0, tot * tot, 1.0), 0.0)
        out[far] = (2.0 / np.pi) * tot * ellipe(np.clip(m, 0.0, 1.0)) - p
    return out


def _k_diag_isotropic(coupling, kappa, profile, anchor, r_outer):
    """Cancellation-free diagonal entry for |A| = g0 |p|:

        K_mm = pi a/2 + (lambda_-(p_m) - kappa) m0
               - g0 * int (mean|p| - p_m) |fhat|^2

    using lambda_-(p_m) = p_m^2 - g0 p_m = kappa up to the anchor
    placement residual; the remaining integrand is O(s^2) near 0, so no
    large terms cancel even when m0 is astronomically large (small a).
    Truncation tail bounded by g0 (D0(R) + sqrt(D0 D2)).
    """
    g0 = coupling.coupling_scale
    pm = float(np.linalg.norm(anchor))
    m0 = profile.norm_sq
    lam_residual = (pm * pm - g0 * pm) - kappa
    base = profile.second_moment + lam_residual * m0
    if g0 == 0.0:
        return base, 1e-15 * abs(base)
    val, qerr = profile.weighted_moment(
        lambda s: _circle_mean_excess(pm, s), r_outer, per_decade=10, pts=32)
    # excess <= s, and s <= s^2/R beyond R, so the truncated tail is
    # bounded by the resolvable second-moment defect alone
    _, d2 = profile.mass_defects(r_outer)
    tail = g0 * d2 / r_outer
    err = (g0 * qerr + tail + abs(lam_residual) * m0 * 1e-2
           + 1e-14 * profile.second_moment)
    return base - g0 * val, err


def _k_entry_polar(coupling, kappa, profile, pm, pn, r_outer, c_est,
                   n_phi=32, pts_r=16):
    """Generic K entry: half-plane split, polar panels around each anchor.

    Each half-plane (separated by the perpendicular bisector of the two
    anchors) contains one fhat spike at its own center, so log-spaced
    radial panels capture it; the other factor is smooth there.  For the
    diagonal the two halves coincide with a full polar integral.
    """
    pm = np.asarray(pm, float)
    pn = np.asarray(pn, float)
    delta = float(np.linalg.norm(pn - pm))
    gl_x, gl_w = panel_nodes(np.array([-1.0, 1.0]), n_phi)

    def half(center, other, full_plane):
        e = ((other - center) / delta if delta > 0 else np.array([1.0, 0.0]))
        eperp = np.array([-e[1], e[0]])
        bp = geometric_breakpoints(max(profile.core_width * 1e-2, 1e-13),
                                   r_outer, per_decade=5)
        # panel boundaries at the |A| kink radius and the other-spike radius
        extra = [float(np.linalg.norm(center)), delta]
        bp = np.unique(np.concatenate([bp, [b for b in extra if 0 < b < r_outer]]))
        s, ws = panel_nodes(bp, pts_r)
        if full_plane:
            phi0 = np.full(s.shape, np.pi)
        else:
            phi0 = np.where(s <= delta / 2.0, np.pi,
                            np.pi - np.arccos(np.minimum(1.0, delta / (2.0 * s))))
        # angle measured from -e so the arc stays on this side of the bisector
        phi = phi0[:, None] * gl_x[None, :]
        wphi = phi0[:, None] * gl_w[None, :]
        px = center[0] + s[:, None] * (-np.cos(phi) * e[0] + np.sin(phi) * eperp[0])
        py = center[1] + s[:, None] * (-np.cos(phi) * e[1] + np.sin(phi) * eperp[1])
        weight = lambda_minus_grid(coupling, px, py) - kappa
        f1, e1 = profile.with_errors(s)
        f2, e2 = profile.with_errors(np.hypot(px - other[0], py - other[1]))
        sw = (s * ws)[:, None] * wphi
        total = float(np.sum(weight * f1[:, None] * f2 * sw))
        tot_err = float(np.sum(np.abs(weight)
                               * (e1[:, None] * f2 + f1[:, None] * e2)
                               * np.abs(sw)))
        return total, tot_err

    _, d2 = profile.mass_defects(r_outer)
    if delta == 0.0:
        v, e = half(pm, pm, True)
        return v, e + c_est * d2
    v1, e1 = half(pm, pn, False)
    v2, e2 = half(pn, pm, False)
    return v1 + v2, e1 + e2 + c_est * d2


def _w_entry_radial(potential, profile, delta, pts=32):
    """W entry for a radial well: 2 pi int V(r) J0(|Delta| r) e^{-r^a} r dr."""
    r_v = potential.radial_cutoff(1e-18)
    bp = np.linspace(0.0, r_v, 48)
    if delta > 0:
        n_osc = int(delta * r_v / math.pi) + 1
        if n_osc > 1:
            bz = _bessel_zeros(min(n_osc, 20000)) / delta
            bp = np.unique(np.concatenate([bp, bz[bz < r_v]]))
    vals = []
    for p in (pts, max(8, pts // 2)):
        r, w = panel_nodes(bp, p)
        integ = (potential.radial_profile(r) * j0(delta * r)
                 * np.exp(-r ** profile.a) * r)
        vals.append(2.0 * math.pi * float(np.sum(integ * w)))
    return vals[0], abs(vals[0] - vals[1]) + 1e-15 * abs(vals[0])


def _w_entry_tabulated(potential, profile, dvec):
    """W entry for a tabulated well: grid sum of V e^{i Delta.x} |f_a|^2."""
    t = potential.table
    X, Y = np.meshgrid(t.x, t.y, indexing="ij")
    fa2 = np.exp(-np.hypot(X, Y) ** profile.a)
    phase = np.exp(1j * (dvec[0] * X + dvec[1] * Y))
    integ = t.values * fa2 * phase
    full = complex(np.sum(integ) * t.hx * t.hy)
    coarse = complex(np.sum(integ[::2, ::2]) * 4 * t.hx * t.hy)
    return full, abs(full - coarse) / 3.0 + 1e-15 * abs(full)


def assemble_matrices(coupling: CouplingSpec, extremum_set: ExtremumSet,
                      potential: PotentialSpec, family: TrialFamily,
                      *, r_outer: float | None = None,
                      cond_max: float = 1e8) -> VariationalMatrices:
    """Build (K, W, G) with per-entry quadrature error estimates.

    G comes from the exact scaling identity
        G_mn = 2 pi 2^{-2/a} fhat_a(2^{-1/a} |p_m - p_n|)
    (the transform of f_a^2 is a rescaled fhat_a); W is done in position
    space; K in momentum space with certified truncation tails from the
    exact moment identities.
    """
    prof = family.f_hat_cache
    anchors = family.anchors
    n = len(anchors)
    a = family.a
    kappa = extremum_set.kappa
    c_est = extremum_set.curvature_constant or 1.0
    if r_outer is None:
        amax = float(np.max(np.linalg.norm(anchors, axis=1)))
        r_outer = max(150.0, 40.0 * (1.0 + amax))

    G = np.zeros((n, n))
    err_G = np.zeros((n, n))
    scale = 2.0 ** (-1.0 / a)
    for m in range(n):
        for k in range(m, n):
            d = float(np.linalg.norm(anchors[m] - anchors[k]))
            v, e = prof.with_errors(np.array([scale * d]))
            G[m, k] = G[k, m] = 2.0 * math.pi * scale * scale * float(v[0])
            err_G[m, k] = err_G[k, m] = 2.0 * math.pi * scale * scale * float(e[0])

    lam_g = eigvalsh(G)
    if lam_g[0] <= 0 or lam_g[-1] / lam_g[0] > cond_max:
        raise IllConditionedGram(
            f"cond(G) = {lam_g[-1] / max(lam_g[0], 1e-300):.3e} exceeds "
            f"{cond_max:.1e} at a = {a} (anchors too close for this exponent)")

    K = np.zeros((n, n))
    err_K = np.zeros((n, n))
    iso = _is_isotropic(coupling)
    for m in range(n):
        for k in range(m, n):
            if m == k and iso:
                v, e = _k_diag_isotropic(coupling, kappa, prof, anchors[m],
                                         r_outer)
            else:
                v, e = _k_entry_polar(coupling, kappa, prof, anchors[m],
                                      anchors[k], r_outer, c_est)
            K[m, k] = K[k, m] = v
            err_K[m, k] = err_K[k, m] = e

    W = np.zeros((n, n), dtype=complex)
    err_W = np.zeros((n, n))
    for m in range(n):
        for k in range(m, n):
            dvec = anchors[m] - anchors[k]
            if potential.is_radial:
                v, e = _w_entry_radial(potential, prof,
                                       float(np.linalg.norm(dvec)))
            else:
                v, e = _w_entry_tabulated(potential, prof, dvec)
            W[m, k] = v
            W[k, m] = np.conj(v)
            err_W[m, k] = err_W[k, m] = e
    if np.allclose(W.imag, 0.0):
        W = W.real.astype(float)

    return VariationalMatrices(K=K, W=W, G=G, err_K=err_K, err_W=err_W,
                               err_G=err_G, a=a, anchors=anchors.copy())


# ---------------------------------------------------------------------------
# bounds


@dataclass
class BoundReport:
    nu: np.ndarray                 # kappa + mu, ascending
    mu: np.ndarray
    certified_count: int
    a_used: float
    kappa: float
    margins: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def variational_bounds(matrices: VariationalMatrices, kappa: float,
                       *, margin_factor: float = 3.0,
                       cond_max: float = 1e8) -> BoundReport:
    """Solve (K+W) u = mu G u and certify every mu_n below the propagated
    quadrature margin.

    The margin per eigenvalue is margin_factor times a Weyl-type bound
    (||dH|| + |mu| ||dG||) / lambda_min(G) with the per-entry error
    estimates collapsed to Frobenius norms.
    """
    H = matrices.K + matrices.W
    G = matrices.G
    lam_g = eigvalsh(G)
    if lam_g[0] <= 0 or lam_g[-1] / lam_g[0] > cond_max:
        raise IllConditionedGram(
            f"cond(G) = {lam_g[-1] / max(lam_g[0], 1e-300):.3e} exceeds {cond_max:.1e}")
    mu = eigh(H, G, eigvals_only=True)
    dh = float(np.linalg.norm(matrices.err_K + matrices.err_W))
    dg = float(np.linalg.norm(matrices.err_G))
    gmin_safe = max(lam_g[0] - dg, 0.1 * lam_g[0])
    margins = margin_factor * (dh + np.abs(mu) * dg) / gmin_safe
    certified = int(np.sum(mu < -margins))
    # diagnostic: the potential-only pencil (W, G)
    mu_pot = eigh(np.asarray(matrices.W, dtype=complex), G, eigvals_only=True)
    return BoundReport(
        nu=kappa + mu, mu=mu, certified_count=certified,
        a_used=matrices.a, kappa=kappa, margins=margins,
        diagnostics={
            "cond_G": float(lam_g[-1] / lam_g[0]),
            "err_H_frobenius": dh,
            "err_G_frobenius": dg,
            "mu_potential_only": mu_pot.tolist(),
            "K_over_a_max": float(np.max(np.abs(matrices.K)) / matrices.a),
        })


def sweep_exponent(coupling: CouplingSpec, extremum_set: ExtremumSet,
                   potential: PotentialSpec, anchors: np.ndarray,
                   a_grid, *, margin_factor: float = 3.0,
                   cond_max: float = 1e8) -> BoundReport:
    """Assemble and solve over a descending exponent grid, returning the
    report maximizing certified_count (ties broken by the lowest top
    bound).  Stops at the first conditioning failure after a success."""
    a_grid = [float(a) for a in a_grid]
    if not a_grid or any(a <= 0 for a in a_grid):
        raise ValueError("a_grid must be non-empty and positive")
    if any(b >= a for a, b in zip(a_grid, a_grid[1:])):
        raise ValueError("a_grid must be strictly descending")

    best = None
    sweep = []
    for a in a_grid:
        family = TrialFamily(a=a, anchors=anchors)
        try:
            mats = assemble_matrices(coupling, extremum_set, potential,
                                     family, cond_max=cond_max)
            rep = variational_bounds(mats, extremum_set.kappa,
                                     margin_factor=margin_factor,
                                     cond_max=cond_max)
        except IllConditionedGram as exc:
            sweep.append({"a": a, "failed": str(exc)})
            if best is not None:
                break
            continue
        sweep.append({"a": a, "certified_count": rep.certified_count,
                      "nu": rep.nu.tolist(),
                      "margins": rep.margins.tolist()})
        if (best is None
                or rep.certified_count > best.certified_count
                or (rep.certified_count == best.certified_count
                    and rep.nu[-1] < best.nu[-1])):
            best = rep
    if best is None:
        raise AllGramsIllConditioned(
            f"every exponent in {a_grid} failed Gram conditioning")
    best.diagnostics["sweep"] = sweep
    return best


# ---------------------------------------------------------------------------
# cross-check: the momentum-space route to W (the commutation-step identity)


def potential_entry_momentum_space(potential: PotentialSpec, a: float,
                                   p_m, p_n, *, extent=25.0, n=96):
    """W entry via the double momentum integral
        (2 pi)^-1 int int Vhat(p-q) fhat(p-p_m) fhat(q-p_n) dp dq,
    which must agree with the position-space entry (scalar Vhat commutes
    with the band rotation).  Tensor-grid evaluation, diagnostic accuracy."""
    from .potentials import fourier_V
    prof = fhat_profile(a)
    p_m = np.asarray(p_m, float)
    p_n = np.asarray(p_n, float)
    g = np.linspace(-extent, extent, n)
    h = g[1] - g[0]
    PX, PY = np.meshgrid(g, g, indexing="ij")
    fm = prof(np.hypot(PX - p_m[0], PY - p_m[1])).ravel()
    fn = prof(np.hypot(PX - p_n[0], PY - p_n[1])).ravel()
    pts = np.column_stack([PX.ravel(), PY.ravel()])
    total = 0.0 + 0.0j
    chunk = 2048
    for lo in range(0, pts.shape[0], chunk):
        sl = slice(lo, min(lo + chunk, pts.shape[0]))
        dp = pts[sl, None, :] - pts[None, :, :]
        vh = fourier_V(potential, dp.reshape(-1, 2)).reshape(dp.shape[:2])
        total += np.sum(fm[sl, None] * vh * fn[None, :])
    return complex(total) * h ** 4 / (2.0 * math.pi)
