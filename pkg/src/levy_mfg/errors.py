"""Exception hierarchy. The CLI maps each class to an exit code."""


class LevyMfgError(Exception):
    """Base class for toolkit errors."""


class ValidationError(LevyMfgError, ValueError):
    """Invalid input: a precondition or invariant of some module failed."""


class NumericalError(LevyMfgError, FloatingPointError):
    """NaN/overflow or another numerical breakdown during a solve."""


class CflError(NumericalError):
    """Stability condition could not be met within the sub-step budget."""


class ConvergenceError(LevyMfgError, RuntimeError):
    """An iteration did not reach its tolerance."""
