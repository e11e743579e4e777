import json
import math

import numpy as np
import pytest

from posesteer.errors import InvalidArgumentError, TrajectoryTooShortError
from posesteer.geometry import Pose, pose_compose, rotate_x, rotate_y, rotate_z
from posesteer.metrics import Trajectory, rot_err, trajectory_errors, trans_err

from conftest import random_pose


def random_traj(rng, n=6, frames=None) -> Trajectory:
    frames = tuple(frames or range(0, 2 * n, 2))
    return Trajectory(frames, tuple(random_pose(rng, 1.0, 3.0) for _ in frames))


def offset_traj(err: float) -> tuple[Trajectory, Trajectory]:
    gt = Trajectory((0, 1), (Pose.identity(), Pose.identity()))
    est = Trajectory((0, 1), (Pose.identity(), Pose(np.eye(3), [err, 0, 0])))
    return gt, est


def test_rot_err_examples():
    assert rot_err(np.eye(3), np.eye(3)) == 0.0
    assert abs(rot_err(rotate_z(math.radians(10)), np.eye(3)) - 10.0) <= 1e-9
    # quaternion product of two 2.5 deg half-angle rotations about x and y: w = cos^2(2.5 deg)
    h = math.radians(2.5)
    expected = math.degrees(2 * math.acos(math.cos(h) ** 2))
    assert abs(expected - 7.0706) < 1e-3
    got = rot_err(rotate_x(math.radians(5)) @ rotate_y(math.radians(5)), np.eye(3))
    assert abs(got - expected) <= 1e-9


def test_trans_err_examples():
    assert trans_err([1, 2, 3], [1, 2, 3]) == 0.0
    assert trans_err([1, 0, 0], [0, 0, 0]) == 1.0
    assert trans_err([1, 2, 2], [0, 0, 0]) == 3.0


def test_rot_err_symmetric_and_triangle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b, c = (random_pose(rng, 3.1).rotation for _ in range(3))
        assert abs(rot_err(a, b) - rot_err(b, a)) <= 1e-9
        assert rot_err(a, c) <= rot_err(a, b) + rot_err(b, c) + 1e-9


def test_identical_trajectories_all_zero():
    rng = np.random.default_rng(1)
    gt = {"a": random_traj(rng), "b": random_traj(rng, 3)}
    rep = trajectory_errors(gt, gt, {"a": "s1", "b": "s2"})
    assert rep.rot_err == 0.0 and rep.trans_err == 0.0
    for e in rep.sequences.values():
        assert max(e.rot_errors) == 0.0 and max(e.trans_errors) == 0.0
    assert all(v == 0.0 for v in rep.subset_rot.values())


def test_uniform_yaw_perturbation():
    rng = np.random.default_rng(2)
    gt = random_traj(rng, 8)
    rz = rotate_z(math.radians(2))
    est = Trajectory(gt.frames, (gt.poses[0],) + tuple(
        Pose(p.rotation @ rz, p.translation) for p in gt.poses[1:]))
    rep = trajectory_errors(gt, est)
    assert abs(rep.rot_err - 2.0) <= 1e-6
    assert rep.trans_err <= 1e-12
    assert all(abs(e - 2.0) <= 1e-6 for e in rep.sequences["0"].rot_errors)


def test_mean_of_subset_means():
    gts, ests, subsets = {}, {}, {}
    layout = {"w": [1.0], "x": [2.0, 2.0, 2.0], "y": [3.0, 3.0], "z": [4.0] * 5}
    for sid, errs in layout.items():
        for i, e in enumerate(errs):
            gts[f"{sid}{i}"], ests[f"{sid}{i}"] = offset_traj(e)
            subsets[f"{sid}{i}"] = sid
    rep = trajectory_errors(gts, ests, subsets)
    assert rep.subset_trans == {"w": 1.0, "x": 2.0, "y": 3.0, "z": 4.0}
    assert rep.trans_err == 2.5
    pooled = sum(sum(v) for v in layout.values()) / 11
    assert abs(pooled - 2.5) > 0.1


def test_left_composition_invariance():
    rng = np.random.default_rng(3)
    for _ in range(20):
        gt, est = random_traj(rng), random_traj(rng)
        g = random_pose(rng, 3.0, 5.0)
        moved = lambda t: Trajectory(t.frames, tuple(pose_compose(g, p) for p in t.poses))  # noqa: E731
        a = trajectory_errors(gt, est).sequences["0"]
        b = trajectory_errors(moved(gt), moved(est)).sequences["0"]
        assert np.max(np.abs(np.subtract(a.rot_errors, b.rot_errors))) <= 1e-9
        assert np.max(np.abs(np.subtract(a.trans_errors, b.trans_errors))) <= 1e-9


def test_scale_alignment_invariance():
    rng = np.random.default_rng(4)
    for _ in range(20):
        gt, est = random_traj(rng), random_traj(rng)
        s = float(rng.uniform(0.1, 10))
        first = est.poses[0]
        scaled = Trajectory(est.frames, tuple(
            Pose(p.rotation, first.translation + s * (p.translation - first.translation)) for p in est.poses))
        a = trajectory_errors(gt, est, scale_align=True)
        b = trajectory_errors(gt, scaled, scale_align=True)
        assert abs(a.trans_err - b.trans_err) <= 1e-9
        assert abs(a.rot_err - b.rot_err) <= 1e-9


def test_scale_alignment_recovers_scale():
    gt, est = offset_traj(2.0)
    est2 = Trajectory(est.frames, (Pose.identity(), Pose(np.eye(3), [4.0, 0, 0])))
    gt2 = Trajectory(gt.frames, (Pose.identity(), Pose(np.eye(3), [2.0, 0, 0])))
    rep = trajectory_errors(gt2, est2, scale_align=True)
    assert rep.sequences["0"].scale == 0.5 and rep.trans_err == 0.0
    assert trajectory_errors(gt2, est2).trans_err == 2.0


def test_errors():
    rng = np.random.default_rng(5)
    a = random_traj(rng, 4)
    b = random_traj(rng, 4, frames=(0, 1, 2, 4))
    with pytest.raises(InvalidArgumentError):
        trajectory_errors(a, b)
    with pytest.raises(TrajectoryTooShortError):
        Trajectory((0,), (Pose.identity(),))
    with pytest.raises(InvalidArgumentError):
        Trajectory((0, 0), (Pose.identity(), Pose.identity()))
    with pytest.raises(InvalidArgumentError, match="'b'"):
        trajectory_errors({"a": a, "b": a}, {"a": a, "b": a}, {"a": "s"})
    with pytest.raises(InvalidArgumentError):
        trajectory_errors({"a": a}, {"a": a}, {"a": "s", "q": "s"})
    with pytest.raises(InvalidArgumentError):
        trajectory_errors({"a": a}, {"c": a})


def test_json_roundtrip():
    rng = np.random.default_rng(6)
    t = random_traj(rng)
    back = Trajectory.from_json(json.loads(json.dumps(t.to_json())))
    assert back.frames == t.frames and all(p == q for p, q in zip(back.poses, t.poses))
    rep = trajectory_errors(t, random_traj(rng))
    obj = json.loads(json.dumps(rep.to_json()))
    assert obj["rot_err"] == rep.rot_err and obj["subsets"]["all"]["sequences"] == ["0"]
