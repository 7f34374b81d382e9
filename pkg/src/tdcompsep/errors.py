"""Exception types shared across the package."""


class TDCompSepError(Exception):
    """Base class for all package errors."""


class InvalidParameter(TDCompSepError, ValueError):
    pass


class InvalidConfiguration(TDCompSepError, ValueError):
    pass


class NotPositiveDefinite(TDCompSepError, ArithmeticError):
    pass


class RankDeficient(TDCompSepError, ArithmeticError):
    pass


class SingularBlock(TDCompSepError, ArithmeticError):
    """A per-pixel preconditioner block could not be factorized."""

    def __init__(self, pixel, message=None):
        self.pixel = int(pixel)
        super().__init__(message or f"preconditioner block of pixel {self.pixel} is singular")


class CoarseSingular(TDCompSepError, ArithmeticError):
    pass


class IndefiniteBreakdown(TDCompSepError, ArithmeticError):
    """Raised when a search direction has non-positive curvature."""


class NotConverged(TDCompSepError, RuntimeError):
    """A system of a sequence missed the tolerance under the abort policy."""
