"""Camera-trajectory alignment errors with subset averaging.

Both trajectories are re-expressed relative to their first frame. Per-frame
rotation error is the geodesic angle in degrees, translation error the
Euclidean distance. The reported overall value is the unweighted mean of the
subset means, not a pooled per-frame mean. Frame 0 is excluded from the
averages since it is the identity on both sides by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError, TrajectoryTooShortError
from .geometry import Pose, pose_compose, pose_inverse


@dataclass(frozen=True)
class Trajectory:
    """Camera-to-world poses keyed by strictly increasing frame indices."""

    frames: tuple[int, ...]
    poses: tuple[Pose, ...]

    def __post_init__(self) -> None:
        if len(self.frames) != len(self.poses):
            raise InvalidArgumentError("frames and poses differ in length")
        if len(self.frames) < 2:
            raise TrajectoryTooShortError("a trajectory needs at least two poses")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise InvalidArgumentError("frame indices must be strictly increasing")

    def relative(self) -> list[Pose]:
        first = pose_inverse(self.poses[0])
        return [pose_compose(first, p) for p in self.poses]

    def to_json(self) -> list[dict]:
        return [{"frame": f, **p.to_json()} for f, p in zip(self.frames, self.poses)]

    @classmethod
    def from_json(cls, arr: Sequence[Mapping[str, Any]]) -> "Trajectory":
        if len(arr) < 2:
            raise TrajectoryTooShortError("a trajectory needs at least two poses")
        return cls(tuple(int(e["frame"]) for e in arr), tuple(Pose.from_json(e) for e in arr))


def rot_err(r_gt: np.ndarray, r_est: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees.

    atan2 of the sine and cosine parts of the relative rotation; unlike an
    arccos of the trace alone it stays accurate for tiny angles.
    """
    m = np.asarray(r_gt, dtype=np.float64).T @ np.asarray(r_est, dtype=np.float64)
    c = (float(np.trace(m)) - 1.0) / 2.0
    s = 0.5 * math.sqrt((m[2, 1] - m[1, 2]) ** 2 + (m[0, 2] - m[2, 0]) ** 2 + (m[1, 0] - m[0, 1]) ** 2)
    return math.degrees(math.atan2(s, c))


def trans_err(t_gt: Any, t_est: Any) -> float:
    d = np.asarray(t_gt, dtype=np.float64) - np.asarray(t_est, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InvalidArgumentError("translations must be finite")
    return float(np.linalg.norm(d))


def similarity_scale(t_gt: np.ndarray, t_est: np.ndarray) -> float:
    """Least-squares s minimising sum ||t_gt - s t_est||^2; 1 when t_est is all zero."""
    den = float(np.sum(t_est * t_est))
    if den == 0.0:
        return 1.0
    return float(np.sum(t_gt * t_est)) / den


@dataclass(frozen=True)
class SequenceErrors:
    rot_errors: tuple[float, ...]
    trans_errors: tuple[float, ...]
    scale: float

    @property
    def rot_mean(self) -> float:
        return _mean(self.rot_errors)

    @property
    def trans_mean(self) -> float:
        return _mean(self.trans_errors)


def _mean(xs: Sequence[float]) -> float:
    return float(sum(xs) / len(xs))


def sequence_errors(gt: Trajectory, est: Trajectory, scale_align: bool = False) -> SequenceErrors:
    if gt.frames != est.frames:
        raise InvalidArgumentError(f"frame indices differ: {gt.frames} vs {est.frames}")
    rg, re = gt.relative()[1:], est.relative()[1:]
    tg = np.array([p.translation for p in rg])
    te = np.array([p.translation for p in re])
    s = similarity_scale(tg, te) if scale_align else 1.0
    rots = tuple(rot_err(a.rotation, b.rotation) for a, b in zip(rg, re))
    trans = tuple(trans_err(a, s * b) for a, b in zip(tg, te))
    return SequenceErrors(rots, trans, s)


@dataclass(frozen=True)
class AlignmentReport:
    sequences: dict[str, SequenceErrors]
    assignment: dict[str, str]
    subset_rot: dict[str, float]
    subset_trans: dict[str, float]
    rot_err: float
    trans_err: float

    def to_json(self) -> dict:
        return {
            "rot_err": self.rot_err,
            "trans_err": self.trans_err,
            "subsets": {sid: {"rot_err": self.subset_rot[sid], "trans_err": self.subset_trans[sid],
                              "sequences": sorted(q for q, s in self.assignment.items() if s == sid)}
                        for sid in self.subset_rot},
            "sequences": {q: {"subset": self.assignment[q], "scale": e.scale,
                              "rot_err": e.rot_mean, "trans_err": e.trans_mean,
                              "rot_errors": list(e.rot_errors), "trans_errors": list(e.trans_errors)}
                          for q, e in self.sequences.items()},
        }


def trajectory_errors(gt: Mapping[str, Trajectory] | Trajectory, est: Mapping[str, Trajectory] | Trajectory,
                      subsets: Mapping[str, str] | None = None, scale_align: bool = False) -> AlignmentReport:
    """Per-frame, per-sequence, per-subset and overall alignment errors.

    ``subsets`` maps every sequence id to a subset id; omitted, all sequences
    share one subset.
    """
    if isinstance(gt, Trajectory):
        gt = {"0": gt}
    if isinstance(est, Trajectory):
        est = {"0": est}
    if set(gt) != set(est):
        raise InvalidArgumentError(f"sequence ids differ: {sorted(set(gt) ^ set(est))}")
    if subsets is None:
        subsets = {q: "all" for q in gt}
    for q in sorted(gt):
        if q not in subsets:
            raise InvalidArgumentError(f"sequence {q!r} is not assigned to a subset")
    extra = sorted(set(subsets) - set(gt))
    if extra:
        raise InvalidArgumentError(f"subset file names unknown sequences: {extra}")
    per_seq = {}
    for q in sorted(gt):
        try:
            per_seq[q] = sequence_errors(gt[q], est[q], scale_align)
        except InvalidArgumentError as exc:
            raise type(exc)(f"sequence {q!r}: {exc}") from None
    assignment = {q: str(subsets[q]) for q in per_seq}
    subset_rot, subset_trans = {}, {}
    for sid in sorted(set(assignment.values())):
        members = [per_seq[q] for q in per_seq if assignment[q] == sid]
        subset_rot[sid] = _mean([m.rot_mean for m in members])
        subset_trans[sid] = _mean([m.trans_mean for m in members])
    return AlignmentReport(per_seq, assignment, subset_rot, subset_trans,
                           _mean(list(subset_rot.values())), _mean(list(subset_trans.values())))
