"""Exception types shared across the package.

Matrix-file failures get one class per failure mode so callers (and the CLI)
can distinguish a corrupt header from a truncated payload from bad data.
"""


class MatrixIOError(Exception):
    """Base class for binary matrix file failures."""


class MalformedHeaderError(MatrixIOError):
    """Magic bytes, version, or header length do not match the format."""


class PayloadSizeError(MatrixIOError):
    """Header dimensions disagree with the number of payload scalars."""


class NonFiniteError(MatrixIOError):
    """Matrix payload contains NaN or Inf."""


class DimensionMismatchError(ValueError):
    """Operand shapes are incompatible."""


class UnitNormError(ValueError):
    """Query/key rows violate the unit-norm precondition."""


class SingularityError(ValueError):
    """Similarity too close to +/-1 for the exact collision-probability derivative."""


class NormBoundError(ValueError):
    """Requested squared-norm bound is smaller than an input row's squared norm."""


class HashCodeRangeError(ValueError):
    """A hash code falls outside the addressable bucket range."""
