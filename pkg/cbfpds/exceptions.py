class CbfPdsError(Exception):
    """
    Base class for cbfpds-specific exceptions.

    External users can try/except on this exception class as a catch-all for
    errors raised by the safety-filter and projected-dynamics tooling.
    """


class DimensionError(CbfPdsError, ValueError):
    """Vector or matrix dimensions do not agree with each other."""


class NotPositiveDefiniteError(CbfPdsError, ValueError):
    """
    A matrix that must be symmetric positive definite is not.

    Raised when the symmetry check fails or when the Cholesky factorization
    breaks down.
    """


class ScenarioError(CbfPdsError):
    """A scenario description is malformed or internally inconsistent."""


class ValidationError(ScenarioError):
    """
    Exception raised when the numerical spot-checks of a scenario fail.

    The failed checks are kept on ``failures`` as a list of
    ``(name, detail, witness)`` tuples so callers can report the offending
    points.
    """
    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class ExpressionError(CbfPdsError):
    """Base class for problems with user-supplied field expressions."""


class ExpressionSyntaxError(ExpressionError):
    """
    The expression text could not be parsed.

    ``position`` is the zero-based character offset where parsing stopped.
    """
    def __init__(self, message, position=None):
        if position is not None:
            message = f'{message} (at position {position})'
        super().__init__(message)
        self.position = position


class UnknownIdentifierError(ExpressionError):
    """An identifier is neither a variable, a function nor a parameter."""


class VariableIndexError(ExpressionError):
    """A variable ``xi`` refers to a coordinate past the scenario dimension."""


class UnboundParameterError(ExpressionError):
    """A named parameter has no value at evaluation time."""


class NonFiniteResultError(ExpressionError):
    """Evaluation produced NaN or an infinity, or left a function's domain."""


class NonDifferentiableError(ExpressionError):
    """
    Differentiation reached a non-smooth node (``abs``, ``min``, ``max``)
    whose argument depends on the differentiation variable.
    """


class OutsideSafeSetError(CbfPdsError):
    """The state lies outside the safe set by more than the tolerance."""


class GradientVanishesError(CbfPdsError):
    """The barrier gradient is numerically zero where a direction is needed."""


class ActiveGradientVanishesError(GradientVanishesError):
    """
    The CBF constraint is active at a point with vanishing barrier gradient.

    For ``a`` at or above the threshold of the inclusion bound this cannot
    happen on a valid scenario, so seeing it usually means ``a`` is too small
    or the barrier is badly chosen.
    """


class NotOnBoundaryError(CbfPdsError):
    """A boundary-only operation was asked about a point off the boundary."""


class ProjectionError(CbfPdsError):
    """
    A projection could not be computed to the required accuracy.

    This covers root-finder non-convergence and KKT residuals that stay above
    tolerance.
    """


class BoundsError(CbfPdsError):
    """Invalid input to the perturbation-bound machinery."""


class IntegrationError(CbfPdsError):
    """
    Exception raised when a trajectory cannot be continued.

    This is the case where the state escaped the safe set even after step
    refinement and boundary snapping, which points at integrator misuse.
    """


class TrajectoryError(CbfPdsError):
    """A trajectory is malformed or two trajectories cannot be compared."""
