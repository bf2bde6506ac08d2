"""
Exception and warning types shared across the toolkit.

Validation problems (bad shapes, bad inputs, bad config) derive from
``ConfigValidationError`` and map to CLI exit code 2. Numerical failures
derive from ``NumericalError`` and map to exit code 3.
"""


class DualGraphError(Exception):
    """Root of every error raised by the toolkit."""


# =====================================================================
# VALIDATION ERRORS (exit code 2)
# =====================================================================
class ConfigValidationError(DualGraphError, ValueError):
    pass


class DimensionMismatch(ConfigValidationError):
    pass


class ColumnMismatch(DimensionMismatch):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class RowMismatch(DimensionMismatch):
    pass


class OrderMismatch(ConfigValidationError):
    pass


class AsymmetricInput(ConfigValidationError):
    pass


class NegativeWeight(ConfigValidationError):
    pass


class NonSymmetric(ConfigValidationError):
    pass


# =====================================================================
# NUMERICAL ERRORS (exit code 3)
# =====================================================================
class NumericalError(DualGraphError, ArithmeticError):
    pass


class IndefiniteInput(NumericalError):
    pass


class SingularPascal(NumericalError):
    pass


class ZeroCovariance(NumericalError):
    pass


# =====================================================================
# RECOVERABLE CONDITIONS (emitted through warnings.warn)
# =====================================================================
class RankDeficientDesign(UserWarning):
    pass


class UnderdeterminedDesign(UserWarning):
    pass


class RankDeficientTaps(UserWarning):
    pass


class DegenerateEstimate(UserWarning):
    pass
