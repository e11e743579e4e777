"""Photometric, structural and pose-regression objectives.

Masked means return None when no pixel is valid so an optimizer can never be
rewarded for pushing every pixel off-screen.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError
from .geometry import Pose, pose_compose, pose_inverse, pose_log
from .images import Frame, ValidMask, check_same_shape, mask_mean

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


@dataclass(frozen=True)
class LossWeights:
    alpha_p: float = 1.0
    alpha_p_inv: float = 1.0
    alpha_mse: float = 0.1
    ssim_weight: float = 0.5

    def __post_init__(self) -> None:
        for name, val in asdict(self).items():
            if not math.isfinite(val) or val < 0:
                raise InvalidArgumentError(f"{name} must be finite and non-negative, got {val!r}")
        if self.ssim_weight > 1:
            raise InvalidArgumentError(f"ssim_weight must lie in [0, 1], got {self.ssim_weight!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LossWeights":
        known = {k: float(obj[k]) for k in ("alpha_p", "alpha_p_inv", "alpha_mse", "ssim_weight") if k in obj}
        return cls(**known)


@dataclass(frozen=True)
class LossReport:
    l_p: float | None
    l_p_inv: float | None
    l_mse: float
    l_g: float
    l_total: float
    weights: LossWeights
    valid_fraction_fwd: float | None = None
    valid_fraction_inv: float | None = None
    empty: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "l_p": self.l_p,
            "l_p_inv": self.l_p_inv,
            "l_mse": self.l_mse,
            "l_g": self.l_g,
            "l_total": self.l_total,
            "valid_fraction_fwd": self.valid_fraction_fwd,
            "valid_fraction_inv": self.valid_fraction_inv,
            "empty": list(self.empty),
            "weights": self.weights.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "LossReport":
        return cls(obj["l_p"], obj["l_p_inv"], obj["l_mse"], obj["l_g"], obj["l_total"],
                   LossWeights.from_json(obj["weights"]), obj.get("valid_fraction_fwd"),
                   obj.get("valid_fraction_inv"), tuple(obj.get("empty", ())))


def _pair(a: Frame, b: Frame) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionMismatchError(f"frames {a.data.shape} and {b.data.shape} differ")


def l1_map(reference: Frame, warped: Frame) -> np.ndarray:
    _pair(reference, warped)
    return np.mean(np.abs(reference.data - warped.data), axis=2)


def photometric_l1(reference: Frame, warped: Frame, mask: ValidMask) -> float | None:
    """Masked mean of the channel-averaged absolute difference."""
    _pair(reference, warped)
    check_same_shape(reference, mask)
    return mask_mean(l1_map(reference, warped), mask)


def ssim_map(a: Frame, b: Frame) -> np.ndarray:
    """Per-pixel SSIM over a 3x3 box window, averaged over channels.

    Border pixels, whose window leaves the image, are NaN.
    """
    _pair(a, b)
    x, y = a.data, b.data
    h, w = x.shape[:2]
    out = np.full((h, w), np.nan)
    if h < 3 or w < 3:
        return out
    xs = [x[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx] for dy, dx in _OFFSETS]
    ys = [y[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx] for dy, dx in _OFFSETS]
    mu_x = sum(xs) / 9.0
    mu_y = sum(ys) / 9.0
    dxs = [p - mu_x for p in xs]
    dys = [p - mu_y for p in ys]
    var_x = sum(d * d for d in dxs) / 9.0
    var_y = sum(d * d for d in dys) / 9.0
    cov = sum(p * q for p, q in zip(dxs, dys)) / 9.0
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    out[1:-1, 1:-1] = np.mean(num / den, axis=2)
    return out


def window_mask(mask: ValidMask) -> ValidMask:
    """Pixels whose whole 3x3 window is inside the image and valid."""
    m = mask.data
    h, w = m.shape
    out = np.zeros_like(m)
    if h >= 3 and w >= 3:
        inner = np.ones((h - 2, w - 2), dtype=bool)
        for dy, dx in _OFFSETS:
            inner &= m[1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
        out[1:-1, 1:-1] = inner
    return ValidMask(out)


def dssim_mean(reference: Frame, warped: Frame, mask: ValidMask) -> float | None:
    smask = window_mask(mask)
    if smask.count == 0:
        return None
    dssim = np.where(smask.data, (1.0 - ssim_map(reference, warped)) / 2.0, 0.0)
    return mask_mean(dssim, smask)


def photometric_loss(reference: Frame, warped: Frame, mask: ValidMask,
                     w: LossWeights | None = None) -> float | None:
    """``(1-s) * mean_N(L1) + s * mean_N'(DSSIM)`` with ``s = w.ssim_weight``.

    ``N'`` keeps the pixels of ``N`` whose SSIM window is fully valid. At
    ``s = 0.5`` this is half the plain sum of the two terms. None when a
    required mask is empty.
    """
    w = w or LossWeights()
    l1 = photometric_l1(reference, warped, mask)
    if l1 is None:
        return None
    s = w.ssim_weight
    if s == 0.0:
        return l1
    ds = dssim_mean(reference, warped, mask)
    if ds is None:
        return None
    return (1.0 - s) * l1 + s * ds


def pose_residual(estimated: Pose, reference: Pose) -> np.ndarray:
    """6-vector chart coordinates of ``reference^-1 * estimated``."""
    return pose_log(pose_compose(pose_inverse(reference), estimated)).as_array()


def pose_mse(estimated: Pose, reference: Pose) -> float:
    r = pose_residual(estimated, reference)
    return float(r @ r)


def total_objective(l_g: float, l_p: float | None, l_p_inv: float | None, l_mse: float,
                    w: LossWeights | None = None, valid_fraction_fwd: float | None = None,
                    valid_fraction_inv: float | None = None) -> LossReport:
    """Weighted sum ``l_g + a_p*l_p + a_inv*l_p_inv + a_mse*l_mse``.

    A None photometric component marks an empty mask: it adds nothing and is
    listed in ``LossReport.empty``.
    """
    if w is None:
        w = LossWeights()
    elif not isinstance(w, LossWeights):
        raise InvalidArgumentError("weights must be a LossWeights")
    for name, val in (("l_g", l_g), ("l_mse", l_mse)):
        if not math.isfinite(val):
            raise InvalidArgumentError(f"{name} must be finite, got {val!r}")
    empty = tuple(n for n, v in (("l_p", l_p), ("l_p_inv", l_p_inv)) if v is None)
    lp = 0.0 if l_p is None else float(l_p)
    lpi = 0.0 if l_p_inv is None else float(l_p_inv)
    total = l_g + w.alpha_p * lp + w.alpha_p_inv * lpi + w.alpha_mse * l_mse
    return LossReport(l_p, l_p_inv, float(l_mse), float(l_g), float(total), w,
                      valid_fraction_fwd, valid_fraction_inv, empty)
