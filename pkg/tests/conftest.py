import math

import numpy as np
import pytest

from posesteer.geometry import CameraIntrinsics, Pose, PoseVec6, pose_exp
from posesteer.synth import SceneSpec, default_intrinsics, relative_pose, render_view

# Bilinear polynomial texture: reproduced exactly by bilinear interpolation
# when the source camera views a fronto-parallel plane head-on.
EXACT_TEXTURE = ({"type": "smooth_gradient", "gx": 0.002, "gy": 0.0015, "gxy": 1e-5},)


@pytest.fixture
def k128() -> CameraIntrinsics:
    return default_intrinsics(128)


@pytest.fixture
def k_example() -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=64.0, cy=48.0, width=128, height=96)


def translation(x, y, z) -> Pose:
    return Pose(np.eye(3), [x, y, z])


def rot_z_pose(angle, t=(0.0, 0.0, 0.0)) -> Pose:
    return pose_exp(PoseVec6(t, [0.0, 0.0, angle]))


def random_pose(rng, max_angle=3.0, max_t=2.0) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return pose_exp(PoseVec6(rng.uniform(-max_t, max_t, 3), axis * rng.uniform(0, max_angle)))


def plane_pair(depth=4.0, tx=0.4, texture=EXACT_TEXTURE, size=128):
    """Fronto-parallel plane seen from identity (i) and from x-translated camera (j)."""
    spec = SceneSpec("fronto_parallel", default_intrinsics(size), depth=depth, texture=texture)
    pi, pj = Pose.identity(), translation(tx, 0.0, 0.0)
    fi, di = render_view(spec, pi)
    fj, dj = render_view(spec, pj)
    return spec, fi, di, fj, dj, relative_pose(pi, pj)


# --- acceptance reporting ------------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {detail}")
