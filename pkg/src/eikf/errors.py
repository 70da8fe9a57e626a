"""Exception types shared across the package."""


class EikfError(Exception):
    """Base class for all package errors."""


class AngleAtPiError(EikfError):
    """Rotation angle is within tolerance of pi; the logarithm is not unique."""


class DimensionMismatchError(EikfError):
    """An array does not have the expected shape."""


class BehindCameraError(EikfError):
    """A point has non-positive depth and cannot be projected."""


class MissingLandmarkError(EikfError):
    """A feature references a landmark id that is not in the map."""


class TooFewFeaturesError(EikfError):
    """Not enough measurements to assemble the linear pose system."""


class SingularPencilError(EikfError):
    """The noise-variance pencil has no finite nonnegative eigenvalue."""


class IllConditionedError(EikfError):
    """The bias-corrected normal matrix is too ill-conditioned to solve."""


class DegenerateRotationBlockError(EikfError):
    """The recovered rotation block has (near-)zero determinant."""


class DegenerateGeometryError(EikfError):
    """Plane normals do not span R^3; the LiDAR system is rank deficient."""


class EmptyWindowError(EikfError):
    """The IMU window passed to predict holds no samples."""


class NonMonotonicTimeError(EikfError):
    """IMU timestamps are not strictly increasing."""


class EmptyBatchError(EikfError):
    """No usable measurements remain after visibility filtering."""


class LogDomainError(EikfError):
    """An update iterate left the domain where log(. Xbar^-1) is defined."""


class NumericalFailureError(EikfError):
    """The gain solve failed (innovation information matrix not positive definite)."""


class AllDivergedError(EikfError):
    """Every Monte-Carlo trial diverged; no statistics can be computed."""


class ConfigError(EikfError):
    """A scenario configuration is malformed."""
