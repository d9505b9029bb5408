"""Exception types raised across the package.

Every error deliberately raised by this library derives from
:class:`CCARegError`, so callers can catch one base class. The CLI maps
input/usage problems to exit code 2 and numerical infeasibility to exit
code 3.
"""


class CCARegError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CCARegError):
    """A delimited input file is malformed (ragged row, bad cell, ...)."""


class EmptyInput(CCARegError):
    """An input file contains no data rows."""


class ShapeError(CCARegError):
    """Matrix or index dimensions are inconsistent."""


class StateError(CCARegError):
    """An operation received data in the wrong state (e.g. not centered)."""


class SingularDesign(CCARegError):
    """The covariate design matrix is rank deficient."""


class DomainError(CCARegError):
    """A scalar argument is outside its admissible range."""


class UnsupportedPenalty(CCARegError):
    """A penalty configuration that the solver deliberately rejects."""


class SingularCovariance(CCARegError):
    """A regularized self-covariance is not positive definite.

    Carries which side failed ('X' or 'Y') and its minimum eigenvalue.
    """

    def __init__(self, side, min_eigenvalue):
        self.side = side
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"regularized {side}-side covariance is not positive definite "
            f"(min eigenvalue {self.min_eigenvalue:.3e}); increase the "
            f"penalty on the {side} side"
        )


class DegenerateDirection(CCARegError):
    """A coefficient direction has zero norm under the penalized metric."""


class DegenerateVariate(CCARegError):
    """A projected variate has zero variance on the evaluation set."""


class IdentifiabilityError(CCARegError):
    """The unpenalized block is too wide or rank deficient to identify."""


class InvalidCovariance(CCARegError):
    """A requested joint covariance matrix is not positive definite."""

    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"joint covariance is not positive definite "
            f"(min eigenvalue {self.min_eigenvalue:.3e})"
        )


class NoFeasiblePoint(CCARegError):
    """Every grid point failed during cross-validation."""


class CapacityError(CCARegError):
    """A dense covariance-space solve would exceed the memory budget."""


class NumericalConsistencyError(CCARegError):
    """An internal numerical sanity check failed (e.g. correlation > 1)."""
