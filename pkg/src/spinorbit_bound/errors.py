"""Exception hierarchy for the spinorbit_bound package."""


class SpinOrbitError(Exception):
    """Base class for all package errors."""


class DegenerateGap(SpinOrbitError):
    """|A(p)| below the gap threshold where a strict diagonalizer was required."""


class GrowthViolation(SpinOrbitError):
    """The sub-quadratic growth condition on |A| fails, so the extremum
    search cannot be confined to a finite ball."""


class C2Violation(SpinOrbitError):
    """Second differences of |A| near the extremum set do not stabilize
    under grid refinement."""


class OutOfExtent(SpinOrbitError):
    """Requested evaluation point lies outside a tabulated grid."""


class QuadratureFailure(SpinOrbitError):
    """A numerical transform failed its self-consistency check."""


class IllConditionedGram(SpinOrbitError):
    """Gram matrix condition number exceeds the configured maximum."""


class AllGramsIllConditioned(SpinOrbitError):
    """Every exponent in a sweep produced an ill-conditioned Gram matrix."""


class DuplicateAnchors(SpinOrbitError):
    """Anchor points are not pairwise distinct."""


class UnsupportedCoupling(SpinOrbitError):
    """The discretizer only handles couplings polynomial in momentum."""


class EigensolverStall(SpinOrbitError):
    """Iterative eigensolver hit its iteration cap before certifying residuals."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(SpinOrbitError):
    """Invalid run configuration; carries a dotted field path when known."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
