"""Image, depth and mask containers with bilinear sampling.

Pixel (column i, row j) sits at the continuous coordinate (u=i, v=j). A
coordinate is in bounds iff ``0 <= u <= width-1`` and ``0 <= v <= height-1``;
nothing is clamped or extrapolated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """Float image of shape (height, width, channels), nominally in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise InvalidArgumentError(f"frame must be HxW, HxWx1 or HxWx3, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidArgumentError("frame has non-finite samples")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel camera-frame z; entries <= 0 mark invalid depth."""

    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise InvalidArgumentError(f"depth map must be 2-D, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidArgumentError("depth map has non-finite entries")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def valid(self) -> np.ndarray:
        return self.data > 0


@dataclass(frozen=True, eq=False)
class ValidMask:
    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.array(self.data, dtype=bool)
        if d.ndim != 2:
            raise InvalidArgumentError(f"mask must be 2-D, got {d.shape}")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    @property
    def fraction(self) -> float:
        return self.count / self.data.size


def sample_bilinear(data: np.ndarray, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bilinear lookup into an (H, W, C) array.

    Returns ``(values, inside)`` where ``values`` has shape ``u.shape + (C,)``
    and is zero wherever ``inside`` is False.
    """
    h, w = data.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = (u >= 0.0) & (u <= w - 1) & (v >= 0.0) & (v <= h - 1)
    uu = np.where(inside, u, 0.0)
    vv = np.where(inside, v, 0.0)
    # The right/bottom edge uses the last cell with weight 1 on its far side.
    u0 = np.minimum(np.floor(uu), w - 2).astype(np.intp)
    v0 = np.minimum(np.floor(vv), h - 2).astype(np.intp)
    fu = (uu - u0)[..., None]
    fv = (vv - v0)[..., None]
    p00 = data[v0, u0]
    p10 = data[v0, u0 + 1]
    p01 = data[v0 + 1, u0]
    p11 = data[v0 + 1, u0 + 1]
    out = (1.0 - fu) * (1.0 - fv) * p00 + fu * (1.0 - fv) * p10 + (1.0 - fu) * fv * p01 + fu * fv * p11
    out = np.where(inside[..., None], out, 0.0)
    return out, inside


def bilinear_sample(frame: Frame, px: tuple[float, float]) -> np.ndarray | None:
    """Per-channel value at a continuous coordinate, or None when out of bounds."""
    u, v = float(px[0]), float(px[1])
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidArgumentError("sample coordinate must be finite")
    vals, inside = sample_bilinear(frame.data, np.array(u), np.array(v))
    if not bool(inside):
        return None
    return vals


def mask_mean(values: np.ndarray, mask: ValidMask) -> float | None:
    """Mean over mask-true pixels; None when the mask is empty."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != mask.shape:
        raise DimensionMismatchError(f"values {values.shape} vs mask {mask.shape}")
    n = mask.count
    if n == 0:
        return None
    return float(np.sum(values[mask.data]) / n)


def check_same_shape(*items) -> None:
    shapes = {tuple(x.shape) for x in items}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"shape mismatch: {sorted(shapes)}")
