"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument is malformed, non-finite, or violates a documented invariant."""


class DimensionMismatchError(InvalidArgumentError):
    """Buffers that must share a shape do not."""


class ChartBoundaryError(InvalidArgumentError):
    """Rotation angle too close to pi for a unique axis-angle logarithm."""


class BehindCameraError(InvalidArgumentError):
    """A point lies on or behind the image plane."""


class InvalidDepthError(InvalidArgumentError):
    """Depth is not strictly positive."""


class EmptyMaskError(RuntimeError):
    """No valid pixels survive warping, so a masked mean is undefined."""


class EmptyViewError(RuntimeError):
    """A synthetic camera sees none of the scene."""


class TrajectoryTooShortError(InvalidArgumentError):
    """A trajectory needs at least two poses."""
