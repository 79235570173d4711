"""Exception types shared across the package."""


class SirSplineError(Exception):
    """Base class for package errors."""


class InvalidRateError(SirSplineError, ValueError):
    """Rate function is negative, non-finite or unbounded on the horizon."""


class DataValidityError(SirSplineError, ValueError):
    """Observed path violates a model precondition (e.g. negative increment)."""


class DegenerateTransitionError(SirSplineError, ValueError):
    """Transition covariance is singular; density undefined."""


class MonteCarloDegeneracyError(SirSplineError, RuntimeError):
    """All Monte-Carlo sub-paths for a transition were unusable."""


class InitializationError(SirSplineError, ValueError):
    """Objective non-finite at the optimizer's starting point."""


class SelectionError(SirSplineError, RuntimeError):
    """Model selection could not produce any successful fit."""


class IngestionError(SirSplineError, ValueError):
    """Input data file failed validation."""
