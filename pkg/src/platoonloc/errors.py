"""Exception types shared across the package."""


class InvalidDimensionError(ValueError):
    """An array/antenna dimension is zero, negative, or inconsistent."""


class DegenerateGeometryError(ValueError):
    """Coincident points or otherwise undefined angular geometry."""


class OutOfGridError(ValueError):
    """A position projects outside the road grid (plus half-cell slack)."""


class TrajectoryOverflowError(RuntimeError):
    """A sampled platoon trajectory leaves the road grid."""


class InvalidOffsetError(ValueError):
    """An off-grid offset exceeds half the spacing of its grid."""


class NumericalError(ArithmeticError):
    """Non-finite values encountered where finite inputs are required."""


class ConditioningError(NumericalError):
    """A matrix stayed non-invertible after jitter escalation."""


class DegeneratePosteriorError(NumericalError):
    """All unnormalized posterior mass vanished."""


class DegenerateMessageError(NumericalError):
    """A belief-propagation message lost all mass."""


class SchemaError(ValueError):
    """A config or data file violates its schema; carries a field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class SearchSpaceError(RuntimeError):
    """An exhaustive search was refused because the state space is too large."""


class EmptyDataError(ValueError):
    """An operation received an empty data set."""
