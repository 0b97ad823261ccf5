"""Direct eigensolver oracle: finite differences on a Dirichlet box.

Discretizes H = H0 + V on [-L/2, L/2]^2 with the 5-point Laplacian and
centered first differences (exactly Hermitian by construction), then finds
the lowest eigenvalues with a two-stage strategy:

  * coarsest grid: preconditioned LOBPCG,
  * finer grids: inexact shift-invert subspace iteration, warm-started by
    prolongation from the previous grid (which doubles as the
    grid-doubling convergence check).

Both stages use the exact FFT inverse of the periodic free operator as
preconditioner.  Counting uses the discrete threshold recomputed from the
V=0 problem: kappa_box (lowest V=0 eigenvalue on the same box, the
like-for-like floor) and kappa_sym (infinite-lattice symbol minimum,
whose offset from the continuum kappa sets the counting margin).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import lobpcg

from .dispersion import CouplingKind, CouplingSpec
from .errors import EigensolverStall, UnsupportedCoupling
from .potentials import PotentialSpec, eval_potential
from .variational import BoundReport


@dataclass
class DiscretizationConfig:
    box_half_width: float = 20.0        # L/2
    grid_points: int = 512              # n per axis (interior, Dirichlet)
    k_eigs: int = 8                     # how many lowest eigenpairs
    resid_tol: float = 1e-8             # relative residual certificate
    drift_tol: float = 5e-3             # grid-doubling stability
    margin: float | None = None         # default 5|kappa_sym - kappa| + 1e-8
    coarsest: int = 128                 # cascade entry grid
    outer_max: int = 60
    seed: int = 987654321

    @property
    def L(self) -> float:
        return 2.0 * self.box_half_width

    def validate(self):
        if self.grid_points < 64:
            raise ValueError("grid_points must be >= 64")
        if self.k_eigs < 1:
            raise ValueError("k_eigs must be >= 1")


@dataclass
class DiscreteOperator:
    """Assembled matrices plus everything needed to precondition them."""

    H: sp.csr_matrix
    H0: sp.csr_matrix
    n: int
    L: float
    h: float
    coupling: CouplingSpec
    potential: PotentialSpec
    scalar: bool          # True when A == 0 and the spin blocks decouple

    @property
    def norm_1(self) -> float:
        return float(np.max(np.abs(self.H).sum(axis=0)))


@dataclass
class OracleSpectrum:
    eigenvalues: np.ndarray          # all computed, ascending
    below: np.ndarray                # those under kappa_box - margin
    residuals: np.ndarray            # relative residuals, same order
    kappa_box: float
    kappa_sym: float
    kappa: float
    margin: float
    converged: bool
    drift: float                     # max |E(n) - E(n/2)| over tracked states
    scalar_count: bool               # True when counts refer to one spin block
    diagnostics: dict = field(default_factory=dict)

    @property
    def count_below(self) -> int:
        return len(self.below)


def _fd_blocks(n, h):
    I = sp.identity(n, format="csr")
    D1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1],
                  format="csr") / (2.0 * h)
    L1 = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)],
                  [-1, 0, 1], format="csr") / (h * h)
    Dx = sp.kron(D1, I, format="csr")
    Dy = sp.kron(I, D1, format="csr")
    Lap = sp.kron(L1, I, format="csr") + sp.kron(I, L1, format="csr")
    return Dx, Dy, Lap


def build_hamiltonian(coupling: CouplingSpec, potential: PotentialSpec,
                      cfg: DiscretizationConfig,
                      n: int | None = None) -> DiscreteOperator:
    """Sparse 2n^2 x 2n^2 Hermitian discretization.

    The off-diagonal block for the linear presets is
        alpha_R (Dx - i Dy) + alpha_D (i Dx - Dy)
    with antisymmetric centered differences, which makes H = H^dag exact.
    Custom couplings are rejected (only polynomial symbols discretize to
    local stencils).
    """
    if coupling.kind is CouplingKind.CUSTOM:
        raise UnsupportedCoupling(
            "direct oracle supports only the linear presets")
    cfg.validate()
    n = n or cfg.grid_points
    L = cfg.L
    h = L / (n + 1)
    x = -L / 2 + h * np.arange(1, n + 1)
    Dx, Dy, Lap = _fd_blocks(n, h)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    V = np.asarray(eval_potential(potential, pts), dtype=float)
    Vd = sp.diags(V)
    aR, aD = coupling.alpha_R, coupling.alpha_D
    B = aR * (Dx - 1j * Dy) + aD * (1j * Dx - Dy)
    scalar = (aR == 0.0 and aD == 0.0)
    diag = -Lap + Vd
    H = sp.bmat([[diag, B], [B.conj().T, diag]], format="csr")
    H0 = sp.bmat([[-Lap, B], [B.conj().T, -Lap]], format="csr")
    return DiscreteOperator(H=H, H0=H0, n=n, L=L, h=h, coupling=coupling,
                            potential=potential, scalar=scalar)


def kappa_symbol(coupling: CouplingSpec, h: float) -> float:
    """Minimum of the infinite-lattice symbol q(p) - |A(sin p h / h)|:
    the pure-h dispersion shift of the threshold, without box effects."""
    def lam(p):
        px, py = p
        q = (2 - 2 * math.cos(px * h)) / h**2 + (2 - 2 * math.cos(py * h)) / h**2
        sx, sy = math.sin(px * h) / h, math.sin(py * h) / h
        return q - abs(complex(coupling.A(sx, sy)))

    th = np.linspace(0, 2 * np.pi, 181)[:-1]
    r = np.linspace(0, min(np.pi / h, 4 * (1 + coupling.coupling_scale)), 201)[1:]
    R, T = np.meshgrid(r, th, indexing="ij")
    PX, PY = R * np.cos(T), R * np.sin(T)
    q = (2 - 2 * np.cos(PX * h)) / h**2 + (2 - 2 * np.cos(PY * h)) / h**2
    sx, sy = np.sin(PX * h) / h, np.sin(PY * h) / h
    vals = q - np.abs(coupling.A(sx, sy))
    i0 = np.unravel_index(np.argmin(vals), vals.shape)
    best = min(0.0, float(vals[i0]))
    res = minimize(lam, [PX[i0], PY[i0]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15})
    return min(best, float(res.fun))


# ---------------------------------------------------------------------------
# solver internals


class _FreeInverse:
    """Batched FFT apply of (H0_periodic - sigma)^{-1} on spinor blocks."""

    def __init__(self, coupling, L, n, sigma, scalar=False):
        h = L / (n + 1)
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        KX, KY = np.meshgrid(k, k, indexing="ij")
        q = (2 - 2 * np.cos(KX * h)) / h**2 + (2 - 2 * np.cos(KY * h)) / h**2
        self.n = n
        self.scalar = scalar
        if scalar:
            self.inv = 1.0 / (q - sigma)
        else:
            sx, sy = np.sin(KX * h) / h, np.sin(KY * h) / h
            A = np.asarray(coupling.A(sx, sy), dtype=complex)
            d = q - sigma
            self.d = d
            self.A = A
            self.det = d * d - np.abs(A) ** 2

    def __call__(self, X):
        """X: (N, k) block; returns preconditioned block."""
        n = self.n
        kcols = X.shape[1]
        if self.scalar:
            v = sfft.fft2(X.T.reshape(kcols, n, n), workers=-1)
            return sfft.ifft2(v * self.inv, workers=-1).reshape(kcols, -1).T.copy()
        V = X.T.reshape(kcols, 2, n, n)
        v1 = sfft.fft2(V[:, 0], workers=-1)
        v2 = sfft.fft2(V[:, 1], workers=-1)
        u1 = sfft.ifft2((self.d * v1 - self.A * v2) / self.det, workers=-1)
        u2 = sfft.ifft2((-np.conj(self.A) * v1 + self.d * v2) / self.det,
                        workers=-1)
        out = np.concatenate([u1.reshape(kcols, -1), u2.reshape(kcols, -1)],
                             axis=1).T
        return np.ascontiguousarray(out)


def _block_pcg(Aop, B, Minv, rtol, maxiter):
    """Batched preconditioned CG for Hermitian positive definite A.

    Returns (X, neg_curvature_flag).  Columns are iterated together with
    per-column step sizes; a nonpositive curvature aborts (shift too high).
    """
    X = np.zeros_like(B)
    Rr = B.copy()
    Z = Minv(Rr)
    P = Z.copy()
    rz = np.einsum("ij,ij->j", Rr.conj(), Z).real
    b0 = np.linalg.norm(B, axis=0)
    for _ in range(maxiter):
        AP = Aop(P)
        pap = np.einsum("ij,ij->j", P.conj(), AP).real
        if np.any(pap <= 0):
            return X, True
        alpha = rz / pap
        X += P * alpha
        Rr -= AP * alpha
        if np.all(np.linalg.norm(Rr, axis=0) <= rtol * b0):
            break
        Z = Minv(Rr)
        rz_new = np.einsum("ij,ij->j", Rr.conj(), Z).real
        P = Z + P * (rz_new / rz)
        rz = rz_new
    return X, False


def _prolong(X, nc, nf, spinor):
    """Fourier zero-padding prolongation between Dirichlet grids."""
    cols = X.shape[1]
    blocks = 2 if spinor else 1
    out = np.zeros((blocks * nf * nf, cols), dtype=complex)
    m = nc // 2
    ratio = (nf / nc) ** 2
    for j in range(cols):
        v = X[:, j].reshape(blocks, nc, nc)
        for s in range(blocks):
            F = np.fft.fft2(v[s])
            Ff = np.zeros((nf, nf), dtype=complex)
            Ff[:m, :m] = F[:m, :m]
            Ff[:m, -m:] = F[:m, -m:]
            Ff[-m:, :m] = F[-m:, :m]
            Ff[-m:, -m:] = F[-m:, -m:]
            out[s * nf * nf:(s + 1) * nf * nf, j] = (
                np.fft.ifft2(Ff).ravel() * ratio)
    return out


def _ritz(H, Y):
    Y, _ = np.linalg.qr(Y)
    T = Y.conj().T @ (H @ Y)
    T = 0.5 * (T + T.conj().T)
    evals, U = np.linalg.eigh(T)
    X = Y @ U
    res = np.linalg.norm(H @ X - X * evals, axis=0)
    return X, evals, res

def _solve_level(op_H, coupling, L, n, k, X0, sigma_guess, scalar,
                 res_target, outer_max, rng):
    """Inexact shift-invert subspace iteration at one grid level."""
    N = op_H.shape[0]
    if X0 is None:
        X = rng.standard_normal((N, k)) + 1j * rng.standard_normal((N, k))
        warm = _FreeInverse(coupling, L, n, sigma_guess, scalar)
        for _ in range(2):
            X = warm(X)
    else:
        X = X0
    X, evals, res = _ritz(op_H, X)
    sigma = min(sigma_guess, float(evals[0]) - 0.05)
    for outer in range(outer_max):
        if np.max(res) <= res_target:
            return X, evals, res, outer
        spread = max(float(evals[-1] - evals[0]), 0.02)
        sigma = max(sigma, float(evals[0]) - 0.25 * spread)
        if sigma >= evals[0] - 1e-8:
            sigma = float(evals[0]) - 0.05 * spread
        Minv = _FreeInverse(coupling, L, n, sigma, scalar)
        Hs = op_H - sigma * sp.identity(N, dtype=op_H.dtype, format="csr")
        Y, neg = _block_pcg(lambda Z: Hs @ Z, X, Minv, rtol=3e-2, maxiter=50)
        if neg:
            sigma -= max(0.5, 0.5 * abs(sigma))
            continue
        X, evals, res = _ritz(op_H, Y)
    return X, evals, res, outer_max


def eigen_below_kappa(op: DiscreteOperator, kappa: float,
                      cfg: DiscretizationConfig) -> OracleSpectrum:
    """Lowest eigenvalues of the discrete H with residual certificates and
    a grid-cascade convergence check.

    For A == 0 the spin blocks decouple; the scalar block is solved once
    and counts refer to the scalar problem (the spinor spectrum is the
    same values with doubled multiplicity).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    coupling, potential = op.coupling, op.potential
    L, n_final, k = op.L, op.n, cfg.k_eigs

    kappa_sym = kappa_symbol(coupling, op.h)
    margin = cfg.margin
    if margin is None:
        margin = 5.0 * abs(kappa_sym - kappa) + 1e-8

    # cascade grids: coarsest, doublings, final
    levels = [n_final]
    while levels[0] > cfg.coarsest and levels[0] % 2 == 0:
        levels.insert(0, levels[0] // 2)

    prev_vals = None
    drift = np.inf
    X = None
    evals = res = None
    norm1 = None
    stalled = False
    for li, n in enumerate(levels):
        level_op = (op if n == n_final
                    else build_hamiltonian(coupling, potential, cfg, n=n))
        H = level_op.H
        H0 = level_op.H0
        if op.scalar:
            half = n * n
            H = H[:half, :half].real
            H0 = H0[:half, :half].real
        norm1 = float(abs(H).sum(axis=0).max())
        res_target = cfg.resid_tol * norm1

        # discrete threshold on this box: lowest V=0 eigenvalue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            Z0 = rng.standard_normal((H0.shape[0], 2))
            if not op.scalar:
                Z0 = Z0 + 1j * rng.standard_normal(Z0.shape)
            warm = _FreeInverse(coupling, L, n,
                                kappa_sym - max(0.5, abs(kappa)), op.scalar)
            for _ in range(3):
                Z0 = warm(Z0)
            w0, _ = lobpcg(H0, Z0, M=warm, tol=1e-7, maxiter=200,
                           largest=False)
        kappa_box = float(np.min(w0.real))

        sigma_guess = (kappa_box - 1.5 * _depth_bound(potential)
                       if prev_vals is None else float(prev_vals[0]) - 0.05)
        if li == 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                X0 = rng.standard_normal((H.shape[0], k))
                if not op.scalar:
                    X0 = X0 + 1j * rng.standard_normal(X0.shape)
                Minv = _FreeInverse(coupling, L, n, sigma_guess, op.scalar)
                for _ in range(2):
                    X0 = Minv(X0)
                vals, vecs = lobpcg(H, X0, M=Minv, tol=max(res_target, 1e-6),
                                    maxiter=400, largest=False)
            order = np.argsort(vals.real)
            X, evals = vecs[:, order], vals.real[order]
            res = np.linalg.norm(H @ X - X * evals, axis=0)
            X, evals, res, _ = _solve_level(
                H, coupling, L, n, k, X, sigma_guess, op.scalar,
                res_target, cfg.outer_max, rng)
        else:
            X = _prolong(X, levels[li - 1], n, spinor=not op.scalar)
            if op.scalar:
                X = X.real
            X, evals, res, outers = _solve_level(
                H, coupling, L, n, k, X, sigma_guess, op.scalar,
                res_target, cfg.outer_max, rng)
            stalled = stalled or (outers >= cfg.outer_max
                                  and np.max(res) > res_target)
        if prev_vals is not None:
            m = min(len(prev_vals), len(evals))
            drift = float(np.max(np.abs(prev_vals[:m] - evals[:m])))
        prev_vals = evals

    rel_res = res / norm1
    below_mask = evals < kappa_box - margin
    converged = (not stalled and bool(np.all(rel_res <= cfg.resid_tol))
                 and (drift < cfg.drift_tol or not np.isfinite(drift)
                      or len(levels) == 1))
    spectrum = OracleSpectrum(
        eigenvalues=evals.copy(), below=evals[below_mask].copy(),
        residuals=rel_res.copy(), kappa_box=kappa_box, kappa_sym=kappa_sym,
        kappa=kappa, margin=margin,
        converged=converged, drift=drift if np.isfinite(drift) else 0.0,
        scalar_count=op.scalar,
        diagnostics={"levels": levels, "norm_1": norm1,
                     "res_target_abs": float(cfg.resid_tol * norm1)})
    if stalled:
        raise EigensolverStall(
            f"residuals {np.max(rel_res):.2e} above {cfg.resid_tol:.1e} after "
            f"{cfg.outer_max} outer iterations", partial=spectrum)
    return spectrum


def _depth_bound(potential: PotentialSpec) -> float:
    """Lower bound scale for inf V (keeps the initial shift below spec H)."""
    if potential.is_zero:
        return 0.1
    if potential.is_radial:
        return abs(potential.U) + 0.1
    return float(np.abs(potential.table.values).max()) + 0.1


# ---------------------------------------------------------------------------
# validation of variational bounds


@dataclass
class ValidationResult:
    passed: bool
    checks: list
    tol_oracle: float

    def __bool__(self):
        return self.passed


def validate_bounds(oracle: OracleSpectrum, report: BoundReport,
                    tol_oracle: float | None = None) -> ValidationResult:
    """Pass iff the oracle confirms every certified bound: at least n
    eigenvalues below kappa_box for each certified nu_n, and E_n <= nu_n
    plus the combined tolerance (solver margin + discretization drift)."""
    if tol_oracle is None:
        tol_oracle = oracle.margin + abs(oracle.kappa_box - oracle.kappa) \
            + (oracle.drift if np.isfinite(oracle.drift) else 0.0)
    checks = []
    ok = True
    count_below_box = int(np.sum(oracle.eigenvalues < oracle.kappa_box))
    if report.certified_count > count_below_box:
        ok = False
        checks.append({"check": "count", "passed": False,
                       "certified": report.certified_count,
                       "oracle_below_kappa_box": count_below_box})
    else:
        checks.append({"check": "count", "passed": True,
                       "certified": report.certified_count,
                       "oracle_below_kappa_box": count_below_box})
    for i in range(report.certified_count):
        e_n = float(oracle.eigenvalues[i])
        nu_n = float(report.nu[i])
        good = e_n <= nu_n + tol_oracle
        ok = ok and good
        checks.append({"check": f"E_{i + 1} <= nu_{i + 1} + tol",
                       "passed": bool(good), "E": e_n, "nu": nu_n,
                       "tol": tol_oracle})
    return ValidationResult(passed=ok, checks=checks, tol_oracle=tol_oracle)
