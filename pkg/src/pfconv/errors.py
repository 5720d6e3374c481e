"""Exception types shared across the package."""


class PfconvError(Exception):
    """Base class for all pfconv errors."""


class DomainError(PfconvError):
    """An argument lies outside the mathematical domain of an operation."""


class WeightNotFinite(PfconvError):
    """An importance weight evaluated to +inf or NaN.

    Signals a proposal density of zero at a proposed point (while the
    target numerator is positive) or invalid density callables.
    """


class DegenerateWeights(PfconvError):
    """Every particle received zero weight; the run must abort."""


class StageMismatch(PfconvError):
    """A particle-set operation was called at the wrong pipeline stage."""


class NotNormalized(PfconvError):
    """Weights handed to a resampler do not sum to 1 within tolerance."""


class CountMismatch(PfconvError):
    """A resampling count vector does not match the particle set."""


class ZeroMass(PfconvError):
    """A grid density lost all probability mass (oracle breakdown)."""


class PoleError(PfconvError):
    """Gamma function evaluated at a nonpositive integer."""


class InsufficientPoints(PfconvError):
    """A rate fit was requested with fewer than three points."""


class NonPositiveValue(PfconvError):
    """A log-log fit received a value that is not strictly positive."""


class StudyError(PfconvError):
    """A convergence-study cell failed; carries (N, replicate) context."""
