"""Pose-aware frame warping, photometric losses, pose refinement and trajectory metrics."""

from .errors import (
    BehindCameraError,
    ChartBoundaryError,
    DimensionMismatchError,
    EmptyMaskError,
    EmptyViewError,
    InvalidArgumentError,
    InvalidDepthError,
    TrajectoryTooShortError,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    PoseVec6,
    pose_compose,
    pose_exp,
    pose_inverse,
    pose_log,
    project,
    unproject,
)
from .images import DepthMap, Frame, ValidMask, bilinear_sample, mask_mean
from .losses import (
    LossReport,
    LossWeights,
    photometric_l1,
    photometric_loss,
    pose_mse,
    ssim_map,
    total_objective,
)
from .warp import WarpResult, compute_correspondence, inverse_warp, warp_frame

__version__ = "0.1.0"
