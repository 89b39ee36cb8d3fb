"""Exception and warning types shared across the package."""


class DualCusumError(Exception):
    """Base class for all package errors."""


class ConfigError(DualCusumError, ValueError):
    """Invalid configuration value or unsupported option."""


class DomainMismatchError(DualCusumError, ValueError):
    """Two laws that must share a support do not."""


class InfeasibleError(DualCusumError, ValueError):
    """Requested quantity does not exist for the given parameters."""


class DivergenceError(DualCusumError, RuntimeError):
    """A solver's contraction condition is violated (e.g. nonnegative drift)."""


class ModelViolationError(DualCusumError, ValueError):
    """Inputs violate an assumption the approximation depends on."""


class PrecisionError(DualCusumError, RuntimeError):
    """Result would be dominated by truncation or sampling noise."""


class EstimationError(DualCusumError, RuntimeError):
    """A Monte Carlo estimate could not be formed."""


class AccuracyWarning(UserWarning):
    """Discretization coarser than recommended."""


class PrecisionWarning(UserWarning):
    """Too few events for the requested precision."""
