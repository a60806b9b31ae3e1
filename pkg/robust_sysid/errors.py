"""
Exception types raised by the robust_sysid library.
Batch runners catch these and turn them into flagged rows; the CLI maps them to exit codes.
"""

import numpy as np


class SysIdError(Exception):
    """Base class for every library error"""


class DimensionError(SysIdError, ValueError):
    """Array shapes do not agree with the model or data they are used with"""


class NonFiniteError(SysIdError, ValueError):
    """NaN or Inf found where only finite values are allowed"""


class InvalidParameterError(SysIdError, ValueError):
    """A numeric parameter is outside its valid range (mu <= 0, p >= 0.5, ...)"""


class InsufficientDataError(SysIdError, ValueError):
    """Not enough samples / grid points for the requested computation"""


class DivergenceError(SysIdError, RuntimeError):

    def __init__(self, step: int, norm: float, cutoff: float):
        self.step = step
        self.norm = norm
        self.cutoff = cutoff
        super().__init__(f"State norm {norm:.3e} exceeded cutoff {cutoff:.1e} at t={step}")


class RankDeficiencyError(SysIdError, np.linalg.LinAlgError):

    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"Rank-deficient regression for row {row}: {reason}")


class ConfigError(SysIdError, ValueError):

    def __init__(self, message: str, line: int = None, field: str = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
