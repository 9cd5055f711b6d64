"""Exception types shared across the package."""


class CoverageError(ValueError):
    """Behavior policy assigns zero probability to an action the target may take."""


class ChainError(RuntimeError):
    """Stationary distribution does not exist or is not unique."""


class SingularUpdateError(ArithmeticError):
    """A Sherman-Morrison / Woodbury update hit a (near) singular denominator."""


class HypothesisUnmet(ValueError):
    """Raised when a model quantity is requested outside the conditions that define it."""
