"""Bound states below the continuum threshold of 2D spin-orbit Hamiltonians.

Pipeline: dispersion extrema (kappa, S) -> negative-definiteness
certificates -> variational upper bounds from the exp(-|x|^a/2) trial
family -> validation against a direct finite-difference eigensolver.
"""

__version__ = "0.1.0"

from .dispersion import (
    CouplingSpec, CouplingKind, DispersionSample, ExtremumSet, ShapeKind,
    SearchConfig, eval_symbol, dispersion, diagonalizer, find_kappa_and_S,
    quadratic_constant,
)
from .potentials import PotentialSpec, SignCertificate, FOURIER_CONVENTION
from .variational import (
    TrialFamily, VariationalMatrices, BoundReport, f_a_profile, f_hat,
    build_trial_family, assemble_matrices, variational_bounds, sweep_exponent,
)
from .certifier import DefinitenessCertificate, Verdict, certify, predicted_count
from .oracle import (
    DiscretizationConfig, OracleSpectrum, build_hamiltonian,
    eigen_below_kappa, validate_bounds,
)

__all__ = [
    "CouplingSpec", "CouplingKind", "DispersionSample", "ExtremumSet",
    "ShapeKind", "SearchConfig", "eval_symbol", "dispersion", "diagonalizer",
    "find_kappa_and_S", "quadratic_constant",
    "PotentialSpec", "SignCertificate", "FOURIER_CONVENTION",
    "TrialFamily", "VariationalMatrices", "BoundReport", "f_a_profile",
    "f_hat", "build_trial_family", "assemble_matrices", "variational_bounds",
    "sweep_exponent",
    "DefinitenessCertificate", "Verdict", "certify", "predicted_count",
    "DiscretizationConfig", "OracleSpectrum", "build_hamiltonian",
    "eigen_below_kappa", "validate_bounds",
]
