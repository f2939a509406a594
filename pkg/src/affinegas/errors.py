"""Exception types shared across the package."""


class AffineGasError(Exception):
    """Base class for all package errors."""


class SingularMatrix(AffineGasError):
    pass


class NotSymmetric(AffineGasError):
    pass


class NotPositiveDefinite(AffineGasError):
    pass


class NonPositiveDeterminant(AffineGasError):
    pass


class StepFailure(AffineGasError):
    pass


class TrajectoryTooShort(AffineGasError):
    pass


class QuadratureFailure(AffineGasError):
    pass


class SigmaOutOfRange(AffineGasError):
    pass


class OutOfRange(AffineGasError):
    pass


class InsufficientFrames(AffineGasError):
    pass


class JacobianDegenerate(AffineGasError):
    pass


class ShapeMismatch(AffineGasError):
    pass


class BudgetInfeasible(AffineGasError):
    pass


class AprioriViolated(AffineGasError):
    pass


class CflFailure(AffineGasError):
    pass


class StencilUnderflow(AffineGasError):
    pass


class EmptySupport(AffineGasError):
    pass


class WindowTooShort(AffineGasError):
    pass


class ConfigInvalid(AffineGasError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"invalid config field {field!r}: {reason}")


class LedgerCorrupt(AffineGasError):
    pass


class SchemaMismatch(AffineGasError):
    pass
