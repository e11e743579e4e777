import math

import numpy as np
import pytest

from posesteer.errors import DimensionMismatchError
from posesteer.geometry import Pose, pose_inverse
from posesteer.images import DepthMap, Frame
from posesteer.losses import photometric_loss
from posesteer.synth import (
    discontinuity_band,
    oracle_warp,
    random_relative_pose,
    random_scene,
    relative_pose,
    render_view,
)
from posesteer.warp import compute_correspondence, inverse_warp, warp_frame

from conftest import plane_pair, translation


def test_correspondence_identity(k_example):
    assert compute_correspondence(k_example, Pose.identity(), 7.3, (10.0, 20.0)) == (10.0, 20.0)


def test_correspondence_translation(k_example):
    cu, cv = compute_correspondence(k_example, translation(0.4, 0, 0), 4.0, (64.0, 48.0))
    # fx * tx / d = 100 * 0.4 / 4
    assert abs(cu - 74.0) <= 1e-12 and cv == 48.0


def test_correspondence_behind_camera(k_example):
    assert compute_correspondence(k_example, translation(0, 0, -10), 4.0, (64.0, 48.0)) is None


def test_warp_identity_exact():
    spec = random_scene(3, "tilted", size=64)
    f, d = render_view(spec, Pose.identity())
    r = warp_frame(f, d, spec.intrinsics, Pose.identity())
    assert r.valid_fraction == 1.0
    assert np.array_equal(r.warped.data, f.data)


def test_analytic_shift(k128):
    spec, fi, di, fj, dj, T = plane_pair(depth=4.0, tx=0.4)
    assert k128.fx == 100.0
    r = warp_frame(fi, dj, k128, T)
    m = r.mask.data
    shift = r.correspondences[..., 0] - np.arange(128)[None, :]
    assert np.max(np.abs(shift[m] - 10.0)) <= 1e-12
    assert np.max(np.abs(r.correspondences[..., 1] - np.arange(128)[:, None])[m]) <= 1e-12
    # the valid region is exactly the columns whose shifted copy stays in the image
    assert m[:, :118].all() and not m[:, 118:].any()
    np.testing.assert_allclose(r.warped.data[:, :118], fi.data[:, 10:], atol=1e-12)
    # and the warped image is view j itself on the mask
    assert np.max(np.abs(r.warped.data - fj.data)[m]) <= 1e-12


def test_all_behind_camera_gives_empty_mask():
    spec, fi, di, fj, dj, T = plane_pair()
    r = warp_frame(fi, dj, spec.intrinsics, translation(0, 0, -10))
    assert r.mask.count == 0
    assert not r.warped.data.any()
    assert photometric_loss(fj, r.warped, r.mask) is None


def test_inverse_warp_identity():
    spec, fi, di, fj, dj, T = plane_pair()
    r = inverse_warp(fj, dj, spec.intrinsics, Pose.identity())
    assert r.valid_fraction == 1.0 and np.array_equal(r.warped.data, fj.data)


def test_inverse_warp_round_trip_psnr():
    spec = random_scene(11, "tilted", size=128)
    rng = np.random.default_rng(11)
    pi, pj = Pose.identity(), random_relative_pose(rng, 4.0, 0.3)
    fi, di = render_view(spec, pi)
    _, dj = render_view(spec, pj)
    T = relative_pose(pi, pj)  # j -> i
    fwd = warp_frame(fi, dj, spec.intrinsics, T)
    back = inverse_warp(fwd.warped, di, spec.intrinsics, pose_inverse(T))
    # composite mask: the back-projection must land where all four neighbours were valid
    c = back.correspondences
    m = back.mask.data.copy()
    fm = fwd.mask.data
    u0 = np.clip(np.floor(np.nan_to_num(c[..., 0])), 0, 126).astype(int)
    v0 = np.clip(np.floor(np.nan_to_num(c[..., 1])), 0, 126).astype(int)
    m &= fm[v0, u0] & fm[v0, u0 + 1] & fm[v0 + 1, u0] & fm[v0 + 1, u0 + 1]
    assert m.mean() > 0.5
    mse = np.mean((back.warped.data - fi.data)[m] ** 2)
    psnr = 10 * math.log10(1.0 / mse)
    assert psnr > 40.0


def test_single_valid_depth_pixel(k128):
    spec, fi, *_ = plane_pair()
    d = np.zeros((128, 128))
    d[40, 70] = 4.0
    r = warp_frame(fi, DepthMap(d), k128, translation(0.1, 0, 0))
    assert r.mask.count == 1 and r.mask.data[40, 70]
    w = r.warped.data.copy()
    w[40, 70] = 0.0
    assert not w.any()
    assert np.isnan(r.correspondences[0, 0]).all()


@pytest.mark.parametrize("seed", range(4))
def test_mask_sound_and_complete(seed):
    kind = ("fronto_parallel", "tilted", "step")[seed % 3]
    spec = random_scene(seed, kind, size=64)
    rng = np.random.default_rng(seed)
    pi, pj = Pose.identity(), random_relative_pose(rng, 15.0, 0.2 * spec.min_depth)
    fi, _ = render_view(spec, pi)
    _, dj = render_view(spec, pj)
    r = warp_frame(fi, dj, spec.intrinsics, relative_pose(pi, pj))
    m = r.mask.data
    cu, cv = r.correspondences[..., 0], r.correspondences[..., 1]
    inb = (cu >= 0) & (cu <= 63) & (cv >= 0) & (cv <= 63)
    assert np.all(dj.data[m] > 0)
    assert np.all(inb[m])
    assert np.array_equal(m, inb & (dj.data > 0))
    # brute-force per-pixel check on a sample, against explicit 3-D transforms
    T = relative_pose(pi, pj)
    k = spec.intrinsics
    for y, x in zip(rng.integers(0, 64, 40), rng.integers(0, 64, 40)):
        p = np.array([(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0]) * dj.data[y, x]
        q = T.rotation @ p + T.translation
        if q[2] <= 1e-9:
            assert not m[y, x]
            continue
        u, v = k.fx * q[0] / q[2] + k.cx, k.fy * q[1] / q[2] + k.cy
        assert abs(u - cu[y, x]) <= 1e-9 and abs(v - cv[y, x]) <= 1e-9


@pytest.mark.parametrize("kind", ["fronto_parallel", "tilted", "step"])
def test_matches_oracle(kind):
    rng = np.random.default_rng(7)
    for s in range(5):
        spec = random_scene(100 + s, kind, size=64)
        pi = random_relative_pose(rng, 10.0, 0.1 * spec.min_depth)
        pj = random_relative_pose(rng, 10.0, 0.1 * spec.min_depth)
        fi, _ = render_view(spec, pi)
        _, dj = render_view(spec, pj)
        got = warp_frame(fi, dj, spec.intrinsics, relative_pose(pi, pj))
        want = oracle_warp(spec, pi, pj, source=fi)
        keep = ~discontinuity_band(spec, pj)
        assert np.array_equal(got.mask.data & keep, want.mask.data & keep)
        both = got.mask.data & want.mask.data & keep
        assert np.max(np.abs(got.warped.data - want.warped.data)[both]) <= 1e-6


def test_thread_count_does_not_change_output():
    spec = random_scene(5, "step", size=96)
    rng = np.random.default_rng(5)
    pj = random_relative_pose(rng, 8.0, 0.3)
    fi, _ = render_view(spec, Pose.identity())
    _, dj = render_view(spec, pj)
    a = warp_frame(fi, dj, spec.intrinsics, pj, workers=1)
    for n in (2, 7, 8, 200):
        b = warp_frame(fi, dj, spec.intrinsics, pj, workers=n)
        assert np.array_equal(a.warped.data, b.warped.data)
        assert np.array_equal(a.mask.data, b.mask.data)
        assert np.array_equal(a.correspondences, b.correspondences, equal_nan=True)


def test_dimension_mismatch(k128):
    with pytest.raises(DimensionMismatchError):
        warp_frame(Frame(np.zeros((128, 128, 3))), DepthMap(np.ones((64, 128))), k128, Pose.identity())
    with pytest.raises(DimensionMismatchError):
        warp_frame(Frame(np.zeros((64, 64, 3))), DepthMap(np.ones((64, 64))), k128, Pose.identity())
