"""Negative-definiteness certificates for the sampled potential transform.

The bound-state theorem needs anchors p_1..p_N on the extremum set with
the Hermitian matrix (Vhat(p_m - p_n)) negative definite.  For
non-positive wells that holds for every anchor choice (Bochner: -Vhat is
a positive-definite function, strictly because analytic exponentials
cannot vanish on a set of positive measure), so the certificate is mostly
a numerical confirmation; for indefinite wells a greedy anchor search
looks for a certifiable subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import eigvalsh

from .dispersion import ExtremumSet, ShapeKind
from .errors import DuplicateAnchors
from .potentials import PotentialSpec, SignCertificate, fourier_V


class Verdict(Enum):
    NEGATIVE_DEFINITE = "negative_definite"
    NEGATIVE_SEMI_DEFINITE = "negative_semi_definite"
    INDEFINITE = "indefinite"


@dataclass
class DefinitenessCertificate:
    anchors: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    verdict: Verdict
    tol_def: float

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


def vhat_matrix(potential: PotentialSpec, anchors) -> np.ndarray:
    """Hermitian matrix Vhat(p_m - p_n) over the anchor list."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    diffs = anchors[:, None, :] - anchors[None, :, :]
    M = np.asarray(fourier_V(potential, diffs.reshape(-1, 2)),
                   dtype=complex).reshape(len(anchors), len(anchors))
    return 0.5 * (M + M.conj().T)


def certify(potential: PotentialSpec, anchors,
            tol_def: float | None = None) -> DefinitenessCertificate:
    """Build (Vhat(p_m - p_n)) and classify it.

    NegativeDefinite requires the largest eigenvalue below -tol_def with
    tol_def = 1e-10 ||matrix|| by default, which separates semi-definite
    numerical zeros (e.g. V = 0) from genuinely indefinite matrices.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if len(anchors) > 1:
        d = np.linalg.norm(anchors[:, None, :] - anchors[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if d.min() < 1e-12:
            raise DuplicateAnchors(
                f"anchors {np.unravel_index(np.argmin(d), d.shape)} coincide")
    M = vhat_matrix(potential, anchors)
    evals = eigvalsh(M)
    norm = float(np.linalg.norm(M, 2)) if M.size else 0.0
    if tol_def is None:
        tol_def = 1e-10 * norm
    top = float(evals[-1])
    if top < -tol_def:
        verdict = Verdict.NEGATIVE_DEFINITE
    elif top <= tol_def:
        verdict = Verdict.NEGATIVE_SEMI_DEFINITE
    else:
        verdict = Verdict.INDEFINITE
    return DefinitenessCertificate(anchors=anchors, matrix=M,
                                   eigenvalues=evals, verdict=verdict,
                                   tol_def=tol_def)


def _candidate_anchors(extremum_set: ExtremumSet, n_max: int):
    S = extremum_set
    if S.shape is ShapeKind.CIRCLE:
        th = 2.0 * np.pi * np.arange(n_max) / n_max
        return S.radius * np.column_stack([np.cos(th), np.sin(th)])
    return np.asarray(S.points[: n_max], dtype=float)


@dataclass
class CountPrediction:
    count: int
    certificate: DefinitenessCertificate | None
    rationale: str


def predicted_count(extremum_set: ExtremumSet, potential: PotentialSpec,
                    n_max: int = 8, greedy_cap: int = 64) -> CountPrediction:
    """Largest N <= n_max with a NegativeDefinite certificate.

    Non-positive, non-trivial wells certify at the capacity of S directly
    (n_max on a circle or curve, the number of points when S is finite).
    Indefinite wells get a greedy forward search over candidate anchors.
    """
    S = extremum_set
    if potential.is_zero:
        return CountPrediction(0, None, "V = 0 never certifies")
    capacity = (len(S.points) if S.shape is ShapeKind.ISOLATED_POINTS
                else n_max)
    n_target = min(n_max, capacity)

    if potential.sign_certificate is SignCertificate.NON_POSITIVE:
        anchors = _candidate_anchors(S, n_target)
        cert = certify(potential, anchors)
        if cert.verdict is Verdict.NEGATIVE_DEFINITE:
            return CountPrediction(n_target, cert,
                                   "non-positive well, Bochner")
        # fall through to greedy on numerical failure

    candidates = _candidate_anchors(
        S, greedy_cap if S.shape is not ShapeKind.ISOLATED_POINTS
        else len(S.points))
    chosen: list[int] = []
    best_cert = None
    while len(chosen) < n_target:
        best_idx = None
        best_low = np.inf
        for idx in range(len(candidates)):
            if idx in chosen:
                continue
            trial = candidates[list(chosen) + [idx]]
            cert = certify(potential, trial)
            if cert.verdict is not Verdict.NEGATIVE_DEFINITE:
                continue
            low = float(cert.eigenvalues[0])
            if low < best_low:
                best_low = low
                best_idx = idx
                best_cert_trial = cert
        if best_idx is None:
            break
        chosen.append(best_idx)
        best_cert = best_cert_trial
    if not chosen:
        evidence = certify(potential, _candidate_anchors(S, min(4, n_target)))
        return CountPrediction(0, evidence, "no certifiable anchor subset")
    return CountPrediction(len(chosen), best_cert, "greedy anchor selection")
