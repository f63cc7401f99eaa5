"""Exception types shared across the package."""


class SwitchSmoothError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SwitchSmoothError):
    """Array shapes disagree with the declared system dimensions."""


class NonPositiveDefinite(SwitchSmoothError):
    """A covariance (or curvature block) failed its Cholesky factorization."""


class BadHyperparameter(SwitchSmoothError):
    """A scalar setting is outside its admissible range."""


class NonFiniteModelOutput(SwitchSmoothError):
    """A model map or Jacobian produced NaN/Inf."""


class NonFiniteState(SwitchSmoothError):
    """Simulation produced a non-finite state."""


class InitialStateOutsideDomain(SwitchSmoothError):
    """Initial state violates the initial mode's domain predicate."""


class NoValidMode(SwitchSmoothError):
    """Guard processing failed to settle on a mode."""


class InfeasibleW(SwitchSmoothError):
    """Mode weights violate the probability simplex beyond tolerance."""


class FactorizationFailure(SwitchSmoothError):
    """Block factorization hit a non-positive pivot block."""


class SchemaMismatch(SwitchSmoothError):
    """Configuration or artifact file does not match the expected schema."""
