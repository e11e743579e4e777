import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posesteer.errors import BehindCameraError, ChartBoundaryError, InvalidArgumentError, InvalidDepthError
from posesteer.geometry import (
    CameraIntrinsics,
    Pose,
    PoseVec6,
    pose_compose,
    pose_exp,
    pose_inverse,
    pose_log,
    project,
    rotate_z,
    unproject,
)

from conftest import random_pose, rot_z_pose, translation


def assert_valid_rotation(R):
    assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-9
    assert abs(np.linalg.det(R) - 1.0) <= 1e-9


def test_exp_zero_is_identity():
    p = pose_exp(PoseVec6([0, 0, 0], [0, 0, 0]))
    assert np.array_equal(p.rotation, np.eye(3))
    assert np.array_equal(p.translation, np.zeros(3))


def test_exp_quarter_turn_about_z():
    p = pose_exp(PoseVec6([0, 0, 0], [0, 0, math.pi / 2]))
    # closed form Rz(theta) = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
    c, s = math.cos(math.pi / 2), math.sin(math.pi / 2)
    expected = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    np.testing.assert_allclose(p.rotation, expected, atol=1e-15)
    np.testing.assert_allclose(p.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)
    assert np.array_equal(p.translation, np.zeros(3))


def test_exp_pure_translation_not_twisted():
    p = pose_exp(PoseVec6([1, 2, 3], [0, 0, 0]))
    assert np.array_equal(p.rotation, np.eye(3))
    assert np.array_equal(p.translation, [1.0, 2.0, 3.0])
    q = pose_exp(PoseVec6([1, 2, 3], [0.3, -0.2, 0.5]))
    assert np.array_equal(q.translation, [1.0, 2.0, 3.0])


def test_exp_rejects_non_finite():
    with pytest.raises(InvalidArgumentError):
        pose_exp(PoseVec6([0, 0, np.nan], [0, 0, 0]))


def test_log_identity():
    assert np.array_equal(pose_log(Pose.identity()).as_array(), np.zeros(6))


def test_log_exp_roundtrip_example():
    v = np.array([0.1, -0.2, 0.3, 0.05, 0.0, 0.02])
    np.testing.assert_allclose(pose_log(pose_exp(PoseVec6.from_array(v))).as_array(), v, atol=1e-15)


def test_log_quarter_turn():
    R = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    # inverse Rodrigues by hand: angle = acos((tr - 1) / 2), axis from the skew part
    angle = math.acos((np.trace(R) - 1) / 2)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / (2 * math.sin(angle))
    r = pose_log(Pose(R, [0, 0, 0])).rotation
    np.testing.assert_allclose(r, axis * angle, atol=1e-12)
    np.testing.assert_allclose(r, [0, 0, math.pi / 2], atol=1e-12)


def test_log_chart_boundary():
    R = np.diag([-1.0, -1.0, 1.0])  # half turn about z
    with pytest.raises(ChartBoundaryError):
        pose_log(Pose(R, [0, 0, 0]))
    near = pose_exp(PoseVec6([0, 0, 0], [0, 0, math.pi - 1e-7]))
    with pytest.raises(ChartBoundaryError):
        pose_log(near)


def test_log_exp_roundtrip_10k():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        v = np.concatenate([rng.uniform(-10, 10, 3), axis * rng.uniform(0, 3.0)])
        p = pose_exp(PoseVec6.from_array(v))
        assert_valid_rotation(p.rotation)
        worst = max(worst, np.max(np.abs(pose_log(p).as_array() - v)))
    assert worst <= 1e-8


def test_exp_log_reproduces_pose():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = random_pose(rng, max_angle=3.1)
        q = pose_exp(pose_log(p))
        assert np.max(np.abs(q.rotation - p.rotation)) <= 1e-9
        assert np.max(np.abs(q.translation - p.translation)) <= 1e-9


def test_compose_identity_and_inverse():
    p = pose_exp(PoseVec6([0.3, -1, 2], [0.4, 0.1, -0.7]))
    q = pose_compose(Pose.identity(), p)
    np.testing.assert_allclose(q.rotation, p.rotation, atol=0)
    np.testing.assert_allclose(q.translation, p.translation, atol=0)
    e = pose_compose(p, pose_inverse(p))
    np.testing.assert_allclose(e.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(e.translation, np.zeros(3), atol=1e-9)


def test_compose_order():
    # rotate first: (1,0,0) -> (0,1,0); then translate by (1,0,0) -> (1,1,0)
    p = pose_compose(translation(1, 0, 0), rot_z_pose(math.pi / 2))
    np.testing.assert_allclose(p.apply([1.0, 0.0, 0.0]), [1.0, 1.0, 0.0], atol=1e-15)


def test_inverse_examples():
    e = pose_inverse(Pose.identity())
    assert np.array_equal(e.rotation, np.eye(3)) and np.allclose(e.translation, 0)
    t = pose_inverse(translation(1, 2, 3))
    np.testing.assert_array_equal(t.translation, [-1, -2, -3])
    r = pose_inverse(rot_z_pose(math.pi / 2, t=(1.0, 0.0, 0.0)))
    np.testing.assert_allclose(r.rotation, rotate_z(-math.pi / 2), atol=1e-15)
    np.testing.assert_allclose(r.translation, [0.0, 1.0, 0.0], atol=1e-15)


pose_vectors = st.tuples(
    *[st.floats(-5, 5) for _ in range(3)],
    *[st.floats(-1.7, 1.7) for _ in range(3)],
).map(lambda v: pose_exp(PoseVec6.from_array(v)))


@settings(max_examples=200, deadline=None)
@given(pose_vectors, pose_vectors, pose_vectors)
def test_compose_associative(a, b, c):
    left = pose_compose(pose_compose(a, b), c)
    right = pose_compose(a, pose_compose(b, c))
    assert np.max(np.abs(left.matrix() - right.matrix())) <= 1e-9
    assert_valid_rotation(left.rotation)
    assert_valid_rotation(pose_inverse(left).rotation)


def test_project_examples(k_example):
    assert project(k_example, [0, 0, 5]) == (64.0, 48.0)
    u, v = project(k_example, [1, 2, 4])
    assert (u, v) == (100 * 1 / 4 + 64, 100 * 2 / 4 + 48) == (89.0, 98.0)
    with pytest.raises(BehindCameraError):
        project(k_example, [0, 0, 1e-12])


def test_unproject_examples(k_example):
    np.testing.assert_array_equal(unproject(k_example, (64.0, 48.0), 3.0), [0, 0, 3])
    np.testing.assert_allclose(unproject(k_example, (89.0, 98.0), 4.0), [1, 2, 4], atol=1e-15)
    u, v = project(k_example, unproject(k_example, (10.0, 20.0), 2.5))
    assert abs(u - 10) <= 1e-9 and abs(v - 20) <= 1e-9
    with pytest.raises(InvalidDepthError):
        unproject(k_example, (1.0, 1.0), 0.0)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 127), st.floats(0, 95), st.floats(0.1, 1000))
def test_project_unproject_identity(u, v, d):
    k = CameraIntrinsics(fx=100.0, fy=90.0, cx=64.0, cy=48.0, width=128, height=96)
    pu, pv = project(k, unproject(k, (u, v), d))
    assert abs(pu - u) <= 1e-8 and abs(pv - v) <= 1e-8


@pytest.mark.parametrize("kw", [dict(fx=0.0), dict(fy=-1.0), dict(width=1), dict(cx=128.0), dict(cy=-0.5)])
def test_intrinsics_invariants(kw):
    base = dict(fx=100.0, fy=100.0, cx=64.0, cy=48.0, width=128, height=96)
    base.update(kw)
    with pytest.raises(InvalidArgumentError):
        CameraIntrinsics(**base)


def test_pose_invariants_enforced():
    with pytest.raises(InvalidArgumentError):
        Pose(np.diag([1.0, 1.0, -1.0]), [0, 0, 0])
    with pytest.raises(InvalidArgumentError):
        Pose(np.eye(3) * 1.001, [0, 0, 0])


def test_json_roundtrips(k_example):
    assert CameraIntrinsics.from_json(k_example.to_json()) == k_example
    p = pose_exp(PoseVec6([0.1, 0.2, 0.3], [0.3, -0.1, 0.9]))
    q = Pose.from_json(p.to_json())
    assert q == p
    v = PoseVec6([1.5, 2, 3], [0.1, 0.2, 0.3])
    assert PoseVec6.from_json(v.to_json()) == v
    assert set(v.to_json()) == {"t", "r"}
    assert len(p.to_json()["rotation"]) == 9
