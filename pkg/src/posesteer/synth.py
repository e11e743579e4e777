"""Deterministic piecewise-planar scenes with exact depth and correspondences.

Camera poses here are camera-to-world. Textures live on each plane in
"reference pixel" units: one unit is one pixel as seen by the identity camera
at the plane's anchor depth. Value noise hashes integer lattice coordinates,
so renders are bit-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import EmptyViewError, InvalidArgumentError
from .geometry import (
    BEHIND_CAMERA_EPS,
    CameraIntrinsics,
    Pose,
    PoseVec6,
    pose_compose,
    pose_exp,
    pose_inverse,
)
from .images import DepthMap, Frame, ValidMask, sample_bilinear
from .warp import WarpResult

KINDS = ("fronto_parallel", "tilted", "step")

DEFAULT_TEXTURE: tuple[dict, ...] = (
    {"type": "smooth_gradient"},
    {"type": "value_noise", "octaves": 3, "seed": 0, "cell": 24.0, "amplitude": 0.2},
)


@dataclass(frozen=True)
class Occluder:
    """Axis-aligned textured rectangle on the world plane z = depth."""

    depth: float
    x: tuple[float, float]
    y: tuple[float, float]
    texture: tuple[dict, ...] = ({"type": "checkerboard", "period": 6.0},)

    def to_json(self) -> dict:
        return {"depth": self.depth, "x": list(self.x), "y": list(self.y), "texture": list(self.texture)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Occluder":
        return cls(float(obj["depth"]), tuple(map(float, obj["x"])), tuple(map(float, obj["y"])),
                   _texture_tuple(obj.get("texture", cls.texture)))


def _texture_tuple(tex: Any) -> tuple[dict, ...]:
    if isinstance(tex, Mapping):
        tex = [tex]
    return tuple(dict(t) for t in tex)


@dataclass(frozen=True)
class SceneSpec:
    """A plane (optionally tilted or stepped) plus an optional occluder.

    ``tilted`` planes pass through ``point`` with unit ``normal``. A ``step``
    scene holds the plane z = ``depth`` for world x < ``split_x`` and the plane
    z = ``depth2`` for x >= ``split_x``; the farther of the two continues
    behind the nearer one, so cameras looking past the edge still hit it.
    """

    kind: str
    intrinsics: CameraIntrinsics
    depth: float = 4.0
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    point: tuple[float, float, float] | None = None
    depth2: float = 6.0
    split_x: float = 0.0
    texture: tuple[dict, ...] = DEFAULT_TEXTURE
    channels: int = 3
    occluder: Occluder | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown scene kind {self.kind!r}; expected one of {KINDS}")
        if self.depth <= 0 or (self.kind == "step" and self.depth2 <= 0):
            raise InvalidArgumentError("plane depths must be positive")
        if self.channels not in (1, 3):
            raise InvalidArgumentError("channels must be 1 or 3")
        n = np.asarray(self.normal, dtype=float)
        if self.kind == "tilted" and not math.isclose(float(np.linalg.norm(n)), 1.0, abs_tol=1e-9):
            raise InvalidArgumentError("tilted-plane normal must be a unit vector")
        object.__setattr__(self, "texture", _texture_tuple(self.texture))
        for layer in self.texture:
            _check_layer(layer)
        if self.occluder is not None:
            if self.occluder.depth <= 0:
                raise InvalidArgumentError("occluder depth must be positive")
            for layer in self.occluder.texture:
                _check_layer(layer)

    @property
    def anchor(self) -> np.ndarray:
        return np.array(self.point if self.point is not None else (0.0, 0.0, self.depth), dtype=float)

    @property
    def min_depth(self) -> float:
        ds = [self.depth]
        if self.kind == "step":
            ds.append(self.depth2)
        if self.kind == "tilted":
            ds.append(float(self.anchor[2]))
        return min(ds)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "intrinsics": self.intrinsics.to_json(),
            "depth": self.depth,
            "normal": list(self.normal),
            "point": None if self.point is None else list(self.point),
            "depth2": self.depth2,
            "split_x": self.split_x,
            "texture": list(self.texture),
            "channels": self.channels,
            "occluder": None if self.occluder is None else self.occluder.to_json(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "SceneSpec":
        occ = obj.get("occluder")
        point = obj.get("point")
        return cls(
            kind=obj["kind"],
            intrinsics=CameraIntrinsics.from_json(obj["intrinsics"]),
            depth=float(obj.get("depth", 4.0)),
            normal=tuple(map(float, obj.get("normal", (0.0, 0.0, 1.0)))),
            point=None if point is None else tuple(map(float, point)),
            depth2=float(obj.get("depth2", 6.0)),
            split_x=float(obj.get("split_x", 0.0)),
            texture=_texture_tuple(obj.get("texture", DEFAULT_TEXTURE)),
            channels=int(obj.get("channels", 3)),
            occluder=None if occ is None else Occluder.from_json(occ),
        )


def _check_layer(layer: Mapping[str, Any]) -> None:
    kind = layer.get("type")
    if kind == "checkerboard":
        if float(layer.get("period", 8.0)) < 2.0:
            raise InvalidArgumentError("checkerboard period must be at least 2 px")
    elif kind == "value_noise":
        if float(layer.get("cell", 16.0)) / 2 ** (int(layer.get("octaves", 3)) - 1) < 2.0:
            raise InvalidArgumentError("finest value-noise cell must be at least 2 px")
        if int(layer.get("octaves", 3)) < 1:
            raise InvalidArgumentError("value noise needs at least one octave")
    elif kind != "smooth_gradient":
        raise InvalidArgumentError(f"unknown texture layer {kind!r}")


# --- textures ---------------------------------------------------------------

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_M3 = np.uint64(0x165667B19E3779F9)


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Integer hash of lattice points mapped to [0, 1)."""
    h = ix.astype(np.int64).astype(np.uint64) * _M1
    h ^= iy.astype(np.int64).astype(np.uint64) * _M2
    h ^= np.uint64((seed * int(_M3)) & 0xFFFFFFFFFFFFFFFF)
    # splitmix64 finalizer
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(s: np.ndarray, t: np.ndarray, cell: float, seed: int) -> np.ndarray:
    gs = s / cell
    gt = t / cell
    i0 = np.floor(gs)
    j0 = np.floor(gt)
    fs = _fade(gs - i0)
    ft = _fade(gt - j0)
    a = _hash01(i0, j0, seed)
    b = _hash01(i0 + 1, j0, seed)
    c = _hash01(i0, j0 + 1, seed)
    d = _hash01(i0 + 1, j0 + 1, seed)
    return (a * (1 - fs) + b * fs) * (1 - ft) + (c * (1 - fs) + d * fs) * ft


# Per-channel (gx, gy, gxy) multipliers for the smooth gradient.
_GRAD_CHANNELS = ((1.0, 1.0, 1.0), (-0.75, 1.3, -0.8), (1.2, -0.6, 0.5))


def _layer(layer: Mapping[str, Any], s: np.ndarray, t: np.ndarray, channels: int) -> np.ndarray:
    kind = layer["type"]
    out = np.empty(s.shape + (channels,))
    if kind == "smooth_gradient":
        base = float(layer.get("base", 0.5))
        gx = float(layer.get("gx", 0.002))
        gy = float(layer.get("gy", 0.0015))
        gxy = float(layer.get("gxy", 1e-5))
        for c in range(channels):
            mx, my, mxy = _GRAD_CHANNELS[c]
            out[..., c] = base + (mx * gx) * s + (my * gy) * t + (mxy * gxy) * (s * t)
    elif kind == "checkerboard":
        p = float(layer.get("period", 8.0))
        lo, hi = float(layer.get("low", 0.2)), float(layer.get("high", 0.8))
        parity = (np.floor(s / p) + np.floor(t / p)) % 2
        out[...] = np.where(parity == 0, lo, hi)[..., None]
    elif kind == "value_noise":
        seed = int(layer.get("seed", 0))
        cell = float(layer.get("cell", 16.0))
        amp = float(layer.get("amplitude", 0.2))
        for c in range(channels):
            acc = np.zeros(s.shape)
            for o in range(int(layer.get("octaves", 3))):
                scale = 0.5 ** o
                acc += scale * (value_noise(s, t, cell * scale, seed * 7919 + c * 104729 + o) - 0.5)
            out[..., c] = amp * acc
    return out


def _texture(layers: Sequence[Mapping[str, Any]], s: np.ndarray, t: np.ndarray, channels: int) -> np.ndarray:
    out = np.zeros(s.shape + (channels,))
    for layer in layers:
        out += _layer(layer, s, t, channels)
    return out


# --- ray casting --------------------------------------------------------------

@dataclass
class _Surface:
    normal: np.ndarray
    anchor: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    texture: tuple[dict, ...]
    x_range: tuple[float, float] = (-math.inf, math.inf)
    y_range: tuple[float, float] = (-math.inf, math.inf)
    scale: float = field(default=1.0)


def _plane_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ex = np.array([1.0, 0.0, 0.0])
    e1 = ex - (ex @ n) * n
    e1 = e1 / np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _surfaces(spec: SceneSpec) -> list[_Surface]:
    z = np.array([0.0, 0.0, 1.0])
    ex, ey = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    surfs = []
    if spec.kind == "fronto_parallel":
        surfs.append(_Surface(z, np.array([0.0, 0.0, spec.depth]), ex, ey, spec.texture))
    elif spec.kind == "tilted":
        n = np.asarray(spec.normal, dtype=float)
        e1, e2 = _plane_basis(n)
        surfs.append(_Surface(n, spec.anchor, e1, e2, spec.texture))
    else:
        # The farther plane extends across all x so that no ray can pass
        # between the two edges of the step.
        near_first = spec.depth <= spec.depth2
        left = (-math.inf, spec.split_x) if near_first else (-math.inf, math.inf)
        right = (-math.inf, math.inf) if near_first else (spec.split_x, math.inf)
        surfs.append(_Surface(z, np.array([0.0, 0.0, spec.depth]), ex, ey, spec.texture, x_range=left))
        surfs.append(_Surface(z, np.array([0.0, 0.0, spec.depth2]), ex, ey, spec.texture, x_range=right))
    if spec.occluder is not None:
        o = spec.occluder
        surfs.append(_Surface(z, np.array([0.0, 0.0, o.depth]), ex, ey, o.texture,
                              x_range=o.x, y_range=o.y))
    for s in surfs:
        s.scale = float(s.anchor[2]) if s.anchor[2] > 0 else spec.depth
    return surfs


@dataclass(frozen=True, eq=False)
class CastResult:
    """Per-pixel ray hits for one camera: camera-frame depth, world points, surface ids (-1 = miss)."""

    depth: np.ndarray
    points: np.ndarray
    surface: np.ndarray


def cast_rays(spec: SceneSpec, camera_pose: Pose) -> CastResult:
    k = spec.intrinsics
    v, u = np.mgrid[0:k.height, 0:k.width].astype(np.float64)
    dc = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    R, o = camera_pose.rotation, camera_pose.translation
    dw = np.einsum("ij,hwj->hwi", R, dc)
    best = np.full(u.shape, np.inf)
    sid = np.full(u.shape, -1, dtype=np.int64)
    for idx, surf in enumerate(_surfaces(spec)):
        n = surf.normal
        denom = dw @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (float(n @ surf.anchor) - float(n @ o)) / denom
        ok = np.isfinite(lam) & (lam > BEHIND_CAMERA_EPS)
        hit = o + lam[..., None] * dw
        if math.isfinite(surf.x_range[0]) or math.isfinite(surf.x_range[1]):
            ok &= (hit[..., 0] >= surf.x_range[0]) & (hit[..., 0] < surf.x_range[1])
        if math.isfinite(surf.y_range[0]) or math.isfinite(surf.y_range[1]):
            ok &= (hit[..., 1] >= surf.y_range[0]) & (hit[..., 1] < surf.y_range[1])
        closer = ok & (lam < best)
        best = np.where(closer, lam, best)
        sid = np.where(closer, idx, sid)
    depth = np.where(sid >= 0, best, 0.0)
    points = o + depth[..., None] * dw
    return CastResult(depth, points, sid)


def _shade(spec: SceneSpec, cast: CastResult) -> np.ndarray:
    k = spec.intrinsics
    img = np.zeros(cast.depth.shape + (spec.channels,))
    for idx, surf in enumerate(_surfaces(spec)):
        sel = cast.surface == idx
        if not np.any(sel):
            continue
        rel = cast.points[sel] - surf.anchor
        s = (rel @ surf.e1) * (k.fx / surf.scale)
        t = (rel @ surf.e2) * (k.fy / surf.scale)
        img[sel] = _texture(surf.texture, s, t, spec.channels)
    return img


def render_view(spec: SceneSpec, camera_pose: Pose) -> tuple[Frame, DepthMap]:
    """Ray-cast every pixel center; raises EmptyViewError if nothing is hit."""
    cast = cast_rays(spec, camera_pose)
    if not np.any(cast.surface >= 0):
        raise EmptyViewError("camera sees no part of the scene")
    return Frame(_shade(spec, cast)), DepthMap(cast.depth)


def relative_pose(pose_i: Pose, pose_j: Pose) -> Pose:
    """Transform carrying camera-j points into camera i (target j, source i)."""
    return pose_compose(pose_inverse(pose_i), pose_j)


def oracle_warp(spec: SceneSpec, pose_i: Pose, pose_j: Pose,
                source: Frame | None = None) -> WarpResult:
    """Synthesize view j from the render of view i using exact ray-plane geometry.

    The correspondence of each j pixel comes from intersecting its ray with
    the scene and projecting the hit into camera i; no depth map is involved.
    """
    k = spec.intrinsics
    if source is None:
        source, _ = render_view(spec, pose_i)
    cast = cast_rays(spec, pose_j)
    if not np.any(cast.surface >= 0):
        raise EmptyViewError("target camera sees no part of the scene")
    Xi = (cast.points - pose_i.translation) @ pose_i.rotation
    hit = cast.surface >= 0
    front = hit & (Xi[..., 2] > BEHIND_CAMERA_EPS)
    if pose_i == pose_j:
        # Same viewpoint: every hit maps onto its own pixel, with no rounding
        # from the round trip through world coordinates.
        gv, gu = np.mgrid[0:k.height, 0:k.width].astype(np.float64)
        cu = np.where(front, gu, np.nan)
        cv = np.where(front, gv, np.nan)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            cu = np.where(front, k.fx * Xi[..., 0] / Xi[..., 2] + k.cx, np.nan)
            cv = np.where(front, k.fy * Xi[..., 1] / Xi[..., 2] + k.cy, np.nan)
    vals, inside = sample_bilinear(source.data, np.where(front, cu, -1.0), np.where(front, cv, -1.0))
    mask = front & inside
    vals = np.where(mask[..., None], vals, 0.0)
    return WarpResult(Frame(vals), ValidMask(mask), np.stack([cu, cv], axis=-1))


def discontinuity_band(spec: SceneSpec, camera_pose: Pose) -> np.ndarray:
    """Pixels with a different surface (or a miss) anywhere in their 3x3 neighbourhood."""
    sid = cast_rays(spec, camera_pose).surface
    h, w = sid.shape
    padded = np.pad(sid, 1, mode="edge")
    band = np.zeros((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            band |= padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] != sid
    return band


# --- seeded scene generators -------------------------------------------------

def default_intrinsics(size: int = 128) -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0 * size / 128, fy=100.0 * size / 128,
                            cx=(size - 1) / 2, cy=(size - 1) / 2, width=size, height=size)


def random_scene(seed: int, kind: str = "fronto_parallel", size: int = 128,
                 texture: Sequence[Mapping[str, Any]] | None = None,
                 occluder_fraction: float = 0.0) -> SceneSpec:
    """Seeded scene of the given kind.

    With ``occluder_fraction`` > 0 a checkered rectangle at half the plane
    depth is centred so it covers that fraction of the identity view.
    """
    rng = np.random.default_rng(seed)
    k = default_intrinsics(size)
    depth = float(rng.uniform(3.0, 5.0))
    if texture is None:
        texture = [dict(DEFAULT_TEXTURE[0], gx=float(rng.uniform(0.0015, 0.0025)),
                        gy=float(rng.uniform(0.001, 0.002))),
                   dict(DEFAULT_TEXTURE[1], seed=int(rng.integers(0, 2 ** 31)))]
    kw: dict[str, Any] = {}
    if kind == "tilted":
        tilt = math.radians(float(rng.uniform(5.0, 25.0)))
        az = float(rng.uniform(0.0, 2.0 * math.pi))
        n = np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), math.cos(tilt)])
        kw.update(normal=tuple(float(x) for x in n / np.linalg.norm(n)), point=(0.0, 0.0, depth))
    elif kind == "step":
        kw.update(depth2=depth * float(rng.uniform(1.3, 1.8)), split_x=float(rng.uniform(-0.3, 0.3)))
    occ = None
    if occluder_fraction > 0:
        od = depth / 2
        side = math.sqrt(occluder_fraction) * size
        half_x = side / 2 / k.fx * od
        half_y = side / 2 / k.fy * od
        ox = float(rng.uniform(-0.2, 0.2)) * od
        oy = float(rng.uniform(-0.2, 0.2)) * od
        occ = Occluder(od, (ox - half_x, ox + half_x), (oy - half_y, oy + half_y),
                       ({"type": "value_noise", "octaves": 2, "seed": int(rng.integers(0, 2 ** 31)),
                         "cell": 12.0, "amplitude": 0.8},
                        {"type": "smooth_gradient", "gx": 0.0, "gy": 0.0, "gxy": 0.0}))
    return SceneSpec(kind=kind, intrinsics=k, depth=depth, texture=tuple(texture), occluder=occ, **kw)


def random_relative_pose(rng: np.random.Generator, max_rot_deg: float, max_trans: float) -> Pose:
    """Pose with rotation angle <= max_rot_deg and translation norm <= max_trans."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = math.radians(max_rot_deg) * float(rng.uniform(0.0, 1.0))
    tdir = rng.normal(size=3)
    tdir /= np.linalg.norm(tdir)
    t = tdir * max_trans * float(rng.uniform(0.0, 1.0))
    return pose_exp(PoseVec6(t, axis * ang))
