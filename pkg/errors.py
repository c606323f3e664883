"""
Error types
所有模組共用的例外階層
"""


class QuasiEstimationError(Exception):
    """Base class for every error raised by this code base."""


class ParameterError(QuasiEstimationError, ValueError):
    """Invalid argument: bad scheme, mismatched grids, empty samples."""


class DomainError(ParameterError):
    """A time outside [0, T] or a parameter outside Θ."""


class PermutationLimitError(ParameterError):
    """Exhaustive permutation enumeration refused (n too large)."""


class UnsupportedOperationError(QuasiEstimationError, NotImplementedError):
    """The functional has no θ-derivative (raw indicator kernels)."""


class NumericError(QuasiEstimationError, ArithmeticError):
    """A contrast evaluation produced NaN."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class DegeneracyError(NumericError):
    """The plug-in Hessian V̂ is singular or ill-conditioned."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class ConfigError(QuasiEstimationError):
    """Problems with an experiment config; `key` is the dotted path."""

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class AcceptanceError(QuasiEstimationError):
    """A property checked by `cli_experiments.py check` did not hold."""
