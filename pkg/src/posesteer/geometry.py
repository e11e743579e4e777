"""Rigid-body pose algebra and the pinhole camera model.

Conventions: right-handed camera frame looking down +z, image u to the right
and v down. A :class:`Pose` maps points as ``p' = R p + t``. The 6-parameter
chart is translation plus axis-angle rotation, with the translation copied
verbatim (not twisted through the rotation exponential).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import (
    BehindCameraError,
    ChartBoundaryError,
    InvalidArgumentError,
    InvalidDepthError,
)

ORTHO_TOL = 1e-9
BEHIND_CAMERA_EPS = 1e-9
CHART_MARGIN = 1e-6


def _frozen(a: Any, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.array(a, dtype=np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"non-finite entries in {arr.tolist()}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(math.isfinite(x) for x in vals):
            raise InvalidArgumentError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InvalidArgumentError("image size must be integral")
        if self.width < 2 or self.height < 2:
            raise InvalidArgumentError("image must be at least 2x2")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "CameraIntrinsics":
        return cls(float(obj["fx"]), float(obj["fy"]), float(obj["cx"]), float(obj["cy"]),
                   int(obj["width"]), int(obj["height"]))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p -> R p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        R = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise InvalidArgumentError("rotation has det != +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a 3-vector or an (N, 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation)
                    and np.array_equal(self.translation, other.translation))

    def __repr__(self) -> str:
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"

    def to_json(self) -> dict:
        return {"rotation": [float(x) for x in self.rotation.ravel()],
                "translation": [float(x) for x in self.translation]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Pose":
        if "rotation" in obj:
            rot = obj["rotation"]
            if len(rot) != 9 or len(obj["translation"]) != 3:
                raise InvalidArgumentError("pose needs 9 rotation and 3 translation numbers")
            return cls(np.array(rot, dtype=float).reshape(3, 3), obj["translation"])
        if "t" in obj and "r" in obj:
            return pose_exp(PoseVec6.from_json(obj))
        raise InvalidArgumentError("pose JSON needs rotation/translation or t/r keys")


@dataclass(frozen=True, eq=False)
class PoseVec6:
    """Translation (scene units) plus axis-angle rotation (radians)."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3,)))

    @classmethod
    def from_array(cls, v: Any) -> "PoseVec6":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(v[:3], v[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseVec6):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    def __repr__(self) -> str:
        return f"PoseVec6(t={self.translation.tolist()}, r={self.rotation.tolist()})"

    def to_json(self) -> dict:
        return {"t": [float(x) for x in self.translation], "r": [float(x) for x in self.rotation]}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "PoseVec6":
        if len(obj["t"]) != 3 or len(obj["r"]) != 3:
            raise InvalidArgumentError("PoseVec6 JSON needs 3-element t and r")
        return cls(obj["t"], obj["r"])


def skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rodrigues(w: Any) -> np.ndarray:
    """Rotation matrix of an axis-angle vector."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta2 = float(w @ w)
    K = skew(w)
    if theta2 < 1e-12:
        # Taylor terms keep the coefficients accurate near zero.
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    return np.eye(3) + a * K + b * (K @ K)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix; raises near the pi boundary."""
    R = np.asarray(R, dtype=np.float64)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_t = float(np.linalg.norm(w))
    cos_t = 0.5 * (float(np.trace(R)) - 1.0)
    theta = math.atan2(sin_t, cos_t)
    if theta >= math.pi - CHART_MARGIN:
        raise ChartBoundaryError(f"rotation angle {theta!r} is at the axis-angle chart boundary")
    if theta < 1e-6:
        # sin(t)/t = 1 - t^2/6 to double precision here
        return w * (1.0 + theta * theta / 6.0)
    if cos_t > 0.0:
        return w * (theta / sin_t)
    # Large angles: the antisymmetric part loses precision, use the symmetric part.
    B = 0.5 * (R + R.T) - cos_t * np.eye(3)
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / math.sqrt(B[i, i] * (1.0 - cos_t))
    if axis @ w < 0.0:
        axis = -axis
    return axis * theta


def pose_exp(v: PoseVec6) -> Pose:
    if not isinstance(v, PoseVec6):
        v = PoseVec6.from_array(v)
    return Pose(rodrigues(v.rotation), v.translation.copy())


def pose_log(p: Pose) -> PoseVec6:
    return PoseVec6(p.translation.copy(), rotation_log(p.rotation))


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Apply ``b`` first, then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def pose_inverse(p: Pose) -> Pose:
    Rt = p.rotation.T
    return Pose(Rt, -(Rt @ p.translation))


def rotate_x(angle: float) -> np.ndarray:
    return rodrigues([angle, 0.0, 0.0])


def rotate_y(angle: float) -> np.ndarray:
    return rodrigues([0.0, angle, 0.0])


def rotate_z(angle: float) -> np.ndarray:
    return rodrigues([0.0, 0.0, angle])


def project(k: CameraIntrinsics, point: Any) -> tuple[float, float]:
    x, y, z = (float(c) for c in np.asarray(point, dtype=np.float64).reshape(3))
    if not all(math.isfinite(c) for c in (x, y, z)):
        raise InvalidArgumentError("point must be finite")
    if z <= BEHIND_CAMERA_EPS:
        raise BehindCameraError(f"point z={z!r} is behind the camera")
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def unproject(k: CameraIntrinsics, px: tuple[float, float], depth: float) -> np.ndarray:
    u, v = px
    if not (math.isfinite(u) and math.isfinite(v) and math.isfinite(depth)):
        raise InvalidArgumentError("pixel and depth must be finite")
    if depth <= 0:
        raise InvalidDepthError(f"depth {depth!r} must be positive")
    return np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
