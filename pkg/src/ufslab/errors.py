"""Exception and warning types used across the package.

Validation is strict: malformed inputs fail loudly at construction time
instead of being silently repaired.  Numerical fallbacks that change the
computation path (pseudo-inverses, clamped biases) are surfaced through
``NumericalFallbackWarning`` so callers can audit them.
"""


class UfslabError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(UfslabError, ValueError):
    """Malformed argument (empty sample list, bad shape, bad flag)."""


class InvalidDistributionError(InvalidInputError):
    """Probability vector or joint table fails its construction checks."""


class SingularReferenceError(UfslabError):
    """A reference distribution or marginal has a zero entry where strict
    positivity is required."""


class SingularCovarianceError(UfslabError):
    """A feature covariance is rank deficient and the caller did not allow
    the pseudo-inverse branch."""


class InvalidInfoVectorError(UfslabError):
    """Vector violates the orthogonality constraint against the square-root
    reference direction."""


class InvalidRotationError(UfslabError):
    """Map is not orthogonal, or does not fix the square-root reference
    direction."""


class InvalidEpsError(UfslabError):
    """Requested neighborhood radius is too large to keep distributions
    strictly positive."""


class InsufficientDataError(UfslabError):
    """Fewer samples than the estimator can use."""


class ConvergenceError(UfslabError):
    """An iterative kernel ran out of iterations.

    Carries the last residual and the iteration count as attributes for
    diagnosis.
    """

    def __init__(self, message: str, residual: float | None = None,
                 iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TrainingError(UfslabError):
    """Gradient training diverged (non-finite loss); carries the loss trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class NumericalFallbackWarning(UserWarning):
    """A degenerate input triggered a documented fallback path
    (pseudo-inverse, saturation clamp, degenerate data)."""
