"""Pose-aware view synthesis by backward sampling.

For every pixel of the *target* view, its depth is lifted to 3-D, moved into
the *source* camera by ``target_to_source``, projected, and the source frame
is bilinearly sampled there. Callers holding a forward transform ``T_i->j``
(points of camera i expressed in camera j) and wanting to synthesize view j
from frame i must therefore pass ``pose_inverse(T_i->j)`` together with the
depth of view j.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError, InvalidDepthError
from .geometry import BEHIND_CAMERA_EPS, CameraIntrinsics, Pose
from .images import DepthMap, Frame, ValidMask, sample_bilinear


@dataclass(frozen=True, eq=False)
class WarpResult:
    """Warped frame, its validity mask, and the (H, W, 2) correspondence field.

    Correspondences are NaN where depth was invalid or the point fell behind
    the source camera; warped values are 0 wherever the mask is False.
    """

    warped: Frame
    mask: ValidMask
    correspondences: np.ndarray

    @property
    def valid_fraction(self) -> float:
        return self.mask.fraction


def correspondence_field(k: CameraIntrinsics, relative: Pose, depth: np.ndarray,
                         u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map target pixels with positive ``depth`` into the source image.

    Returns ``(cu, cv, in_front)``. The pixel offset form ``u + fx*(x' - x)``
    is algebraically the usual projection but is exact for the identity pose.
    Only elementwise arithmetic is used so results do not depend on how the
    arrays are partitioned.
    """
    R = relative.rotation
    t = relative.translation
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (u - k.cx) / k.fx
        y = (v - k.cy) / k.fy
        inv_d = 1.0 / depth
        X = R[0, 0] * x + R[0, 1] * y + R[0, 2] + t[0] * inv_d
        Y = R[1, 0] * x + R[1, 1] * y + R[1, 2] + t[1] * inv_d
        Z = R[2, 0] * x + R[2, 1] * y + R[2, 2] + t[2] * inv_d
        in_front = (depth > 0) & (Z * depth > BEHIND_CAMERA_EPS)
        cu = u + k.fx * (X / Z - x)
        cv = v + k.fy * (Y / Z - y)
    cu = np.where(in_front, cu, np.nan)
    cv = np.where(in_front, cv, np.nan)
    return cu, cv, in_front


def compute_correspondence(k: CameraIntrinsics, relative: Pose, depth: float,
                           px: tuple[float, float]) -> tuple[float, float] | None:
    """Source-image coordinate of a target pixel, or None if it lands behind the camera."""
    u, v = float(px[0]), float(px[1])
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidArgumentError("pixel coordinate must be finite")
    if not math.isfinite(depth) or depth <= 0:
        raise InvalidDepthError(f"depth {depth!r} must be positive")
    cu, cv, front = correspondence_field(k, relative, np.array(float(depth)), np.array(u), np.array(v))
    if not bool(front):
        return None
    return float(cu), float(cv)


def _check_inputs(source: Frame, depth: DepthMap, k: CameraIntrinsics) -> None:
    want = (k.height, k.width)
    if source.shape != want or depth.shape != want:
        raise DimensionMismatchError(
            f"source {source.shape}, depth {depth.shape} and intrinsics {want} disagree")


def _warp_rows(source: np.ndarray, depth: np.ndarray, k: CameraIntrinsics, pose: Pose,
               r0: int, r1: int):
    w = depth.shape[1]
    v, u = np.mgrid[r0:r1, 0:w].astype(np.float64)
    d = depth[r0:r1]
    cu, cv, front = correspondence_field(k, pose, d, u, v)
    vals, inside = sample_bilinear(source, np.where(front, cu, -1.0), np.where(front, cv, -1.0))
    mask = front & inside
    vals = np.where(mask[..., None], vals, 0.0)
    return vals, mask, cu, cv


def _row_chunks(h: int, workers: int) -> list[tuple[int, int]]:
    n = max(1, min(int(workers), h))
    edges = np.linspace(0, h, n + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def warp_frame(source: Frame, target_depth: DepthMap, k: CameraIntrinsics,
               target_to_source: Pose, workers: int = 1) -> WarpResult:
    """Synthesize the target view from ``source``.

    ``workers`` > 1 partitions rows across threads; the output is identical
    for any worker count.
    """
    _check_inputs(source, target_depth, k)
    h, w = target_depth.shape
    chunks = _row_chunks(h, workers)
    job = lambda rr: _warp_rows(source.data, target_depth.data, k, target_to_source, *rr)  # noqa: E731
    if len(chunks) == 1:
        parts = [job(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(job, chunks))
    vals = np.concatenate([p[0] for p in parts], axis=0)
    mask = np.concatenate([p[1] for p in parts], axis=0)
    corr = np.stack([np.concatenate([p[2] for p in parts]), np.concatenate([p[3] for p in parts])], axis=-1)
    return WarpResult(Frame(vals), ValidMask(mask), corr)


def inverse_warp(generated_j: Frame, depth_i: DepthMap, k: CameraIntrinsics,
                 i_to_j: Pose, workers: int = 1) -> WarpResult:
    """Map a generated frame j back to viewpoint i.

    Same machinery as :func:`warp_frame` with the roles swapped: ``depth_i``
    is the depth of the view being synthesized and ``i_to_j`` carries points
    of camera i into camera j (the inverse of the pose used for the forward
    warp).
    """
    return warp_frame(generated_j, depth_i, k, i_to_j, workers=workers)
