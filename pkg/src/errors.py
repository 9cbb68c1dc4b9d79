"""
Exception hierarchy for the fractional Ornstein-Uhlenbeck toolkit.

Every error carries a machine-readable ``code`` that ends up in the run
manifest when a CLI command fails.
"""


class FouError(Exception):
    """Base class for all toolkit errors."""

    code = "FOU_ERROR"

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": str(self)}


class ConfigError(FouError):
    """Configuration file does not match the schema."""
    code = "CONFIG_SCHEMA"


class ParameterError(FouError):
    """Scalar parameter outside its admissible range."""
    code = "PARAMETER_INVALID"


class MatrixError(FouError):
    """Model matrix is malformed (shape, finiteness, symmetry)."""
    code = "MATRIX_INVALID"


class MatrixOverflowError(MatrixError):
    """Matrix exponential would leave the double range."""
    code = "MATRIX_OVERFLOW"


class NotPsdError(MatrixError):
    """Matrix has an eigenvalue below the negative clamp threshold."""
    code = "NOT_PSD"


class QuadratureError(FouError):
    """Node doubling did not reach the requested agreement."""
    code = "QUADRATURE_DIVERGED"


class KalmanConsistencyError(FouError):
    """Range and kernel characterizations of the Kalman flag disagree."""
    code = "KALMAN_INCONSISTENT"


class KalmanConditionError(FouError):
    """Operation requires the Kalman rank condition, which fails."""
    code = "KALMAN_FALSE"


class FieldError(FouError):
    """Field or grid data is invalid."""
    code = "FIELD_INVALID"


class NormBoundViolation(FouError):
    """Propagated field exceeds the semigroup norm bound."""
    code = "NORM_BOUND"


class ThicknessError(FouError):
    """Thick-set geometry is invalid or has no detectable gaps."""
    code = "THICKNESS"


class ControlError(FouError):
    """Control problem is ill-posed (empty observation set, bad horizon)."""
    code = "CONTROL"


class HumIdentityError(ControlError):
    """Converged HUM solution violates the optimality identity."""
    code = "HUM_IDENTITY"


class OutputError(FouError):
    """Reading or writing an artifact failed."""
    code = "IO"
