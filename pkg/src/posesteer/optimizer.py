"""Photometric relative-pose refinement.

The unknown is the 6-parameter pose ``v`` whose exponential carries points of
camera j (the reference view, whose depth is given) into camera i (the view
being sampled). Levenberg-Marquardt runs on Huber-smoothed L1 residuals with
finite-difference Jacobians; steps are accepted only when the full
photometric objective decreases. All Jacobians here are numeric.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ChartBoundaryError, EmptyMaskError, InvalidArgumentError
from .geometry import CHART_MARGIN, CameraIntrinsics, Pose, PoseVec6, pose_exp, pose_inverse
from .images import DepthMap, Frame, sample_bilinear
from .losses import LossWeights, photometric_loss, pose_mse, pose_residual
from .warp import correspondence_field, inverse_warp, warp_frame


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 60
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.3
    convergence_tol: float = 1e-10
    fd_epsilon: float = 1e-6
    alpha_mse: float | None = None  # None: take alpha_mse from LossWeights
    use_inverse_loss: bool = False
    min_valid_fraction: float = 0.25
    huber_delta: float = 1e-3
    step_tol: float = 1e-10
    max_damping: float = 1e10
    min_curvature: float = 1e-12  # smallest Gauss-Newton eigenvalue still treated as observable
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        for name in ("initial_damping", "convergence_tol", "fd_epsilon", "huber_delta", "step_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not self.damping_up > 1:
            raise InvalidArgumentError("damping_up must exceed 1")
        if not 0 < self.damping_down < 1:
            raise InvalidArgumentError("damping_down must lie in (0, 1)")
        if not self.min_curvature >= 0:
            raise InvalidArgumentError("min_curvature must be non-negative")
        if self.alpha_mse is not None and not self.alpha_mse >= 0:
            raise InvalidArgumentError("alpha_mse must be non-negative")
        if not 0 <= self.min_valid_fraction <= 1:
            raise InvalidArgumentError("min_valid_fraction must lie in [0, 1]")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "OptimizerConfig":
        names = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in obj.items() if k in names})


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    pose: PoseVec6
    loss: float
    damping: float
    valid_fraction: float

    def to_json(self) -> dict:
        return {"iteration": self.iteration, "pose": self.pose.to_json(), "loss": self.loss,
                "damping": self.damping, "valid_fraction": self.valid_fraction}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "TraceRecord":
        return cls(int(obj["iteration"]), PoseVec6.from_json(obj["pose"]), float(obj["loss"]),
                   float(obj["damping"]), float(obj["valid_fraction"]))


@dataclass
class OptimizationTrace:
    """Initial state plus every accepted step, and how the run ended.

    ``status`` is one of ``converged``, ``max_iterations``,
    ``damping_overflow``, ``degenerate``, ``empty_mask``, ``non_finite``.
    """

    records: list[TraceRecord] = field(default_factory=list)
    final_pose: Pose | None = None
    status: str = "running"
    message: str = ""
    iterations: int = 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json()) + "\n" for r in self.records)

    def summary(self) -> dict:
        return {"status": self.status, "converged": self.converged, "message": self.message,
                "iterations": self.iterations,
                "final_pose": None if self.final_pose is None else self.final_pose.to_json(),
                "final_loss": self.records[-1].loss if self.records else None}


def _alpha_mse(w: LossWeights, cfg: OptimizerConfig) -> float:
    return w.alpha_mse if cfg.alpha_mse is None else cfg.alpha_mse


def _check_v(v: PoseVec6) -> None:
    if np.linalg.norm(v.rotation) >= math.pi - CHART_MARGIN:
        raise ChartBoundaryError("rotation magnitude at the axis-angle chart boundary")


def _objective_terms(frame_i: Frame, frame_j: Frame, depth: DepthMap, k: CameraIntrinsics,
                     v: PoseVec6, t_ref: Pose | None, w: LossWeights, cfg: OptimizerConfig,
                     depth_i: DepthMap | None) -> tuple[float, float]:
    _check_v(v)
    pose = pose_exp(v)
    fwd = warp_frame(frame_i, depth, k, pose, workers=cfg.workers)
    lp = photometric_loss(frame_j, fwd.warped, fwd.mask, w)
    if lp is None:
        raise EmptyMaskError("forward warp left no valid pixels")
    total = w.alpha_p * lp
    frac = fwd.valid_fraction
    if cfg.use_inverse_loss:
        if depth_i is None:
            raise InvalidArgumentError("the inverse loss needs the depth of frame i")
        inv = inverse_warp(frame_j, depth_i, k, pose_inverse(pose), workers=cfg.workers)
        lpi = photometric_loss(frame_i, inv.warped, inv.mask, w)
        if lpi is None:
            raise EmptyMaskError("inverse warp left no valid pixels")
        total += w.alpha_p_inv * lpi
        frac = min(frac, inv.valid_fraction)
    if t_ref is not None:
        total += _alpha_mse(w, cfg) * pose_mse(pose, t_ref)
    return float(total), frac


def pose_objective(frame_i: Frame, frame_j: Frame, depth: DepthMap, k: CameraIntrinsics,
                   v: PoseVec6, t_ref: Pose | None = None, w: LossWeights | None = None,
                   cfg: OptimizerConfig | None = None, depth_i: DepthMap | None = None) -> float:
    """Geometric part of the total objective at chart point ``v``.

    Forward term: frame i warped into view j (``depth`` is view j's) against
    frame j. Inverse term (``cfg.use_inverse_loss``): frame j warped into
    view i using ``depth_i`` against frame i. Regression term when ``t_ref``
    is given. Raises EmptyMaskError if a warp has no valid pixel.
    """
    return _objective_terms(frame_i, frame_j, depth, k, v, t_ref, w or LossWeights(),
                            cfg or OptimizerConfig(), depth_i)[0]


def numeric_gradient(objective: Callable[[np.ndarray], float], v: Any, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of the 6 pose parameters."""
    if not eps > 0:
        raise InvalidArgumentError("eps must be positive")
    x = v.as_array() if isinstance(v, PoseVec6) else np.asarray(v, dtype=np.float64).reshape(-1)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (objective(x + e) - objective(x - e)) / (2.0 * eps)
    return g


class _Residuals:
    """Residual stack on pixel sets frozen at the linearization point."""

    def __init__(self, frame_i, frame_j, depth, k, t_ref, w, cfg, depth_i, v0: np.ndarray):
        self.k, self.t_ref, self.w, self.cfg = k, t_ref, w, cfg
        self.alpha_mse = _alpha_mse(w, cfg)
        h, wd = depth.shape
        vv, uu = np.mgrid[0:h, 0:wd].astype(np.float64)
        pose = pose_exp(v0)
        self.terms = []
        fwd = warp_frame(frame_i, depth, k, pose)
        self.terms.append(self._term(frame_i, frame_j, depth, fwd.mask.data, uu, vv, w.alpha_p, False))
        if cfg.use_inverse_loss:
            inv = inverse_warp(frame_j, depth_i, k, pose_inverse(pose))
            self.terms.append(self._term(frame_j, frame_i, depth_i, inv.mask.data, uu, vv, w.alpha_p_inv, True))

    @staticmethod
    def _term(src, ref, depth, mask, uu, vv, alpha, inverse):
        sel = mask
        n = int(np.count_nonzero(sel)) * src.channels
        return dict(src=src.data, ref=ref.data[sel], d=depth.data[sel], u=uu[sel], v=vv[sel],
                    scale=math.sqrt(alpha / n) if n else 0.0, inverse=inverse)

    def _psi(self, e: np.ndarray) -> np.ndarray:
        d = self.cfg.huber_delta
        a = np.abs(e)
        rho = np.where(a <= d, e * e / (2.0 * d), a - 0.5 * d)
        return np.sign(e) * np.sqrt(rho)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        pose = pose_exp(PoseVec6.from_array(x))
        parts = []
        for t in self.terms:
            p = pose_inverse(pose) if t["inverse"] else pose
            cu, cv, front = correspondence_field(self.k, p, t["d"], t["u"], t["v"])
            h, w = t["src"].shape[:2]
            # Pixels leaving the image inside a finite-difference probe are clamped.
            cu = np.clip(np.where(front, cu, t["u"]), 0.0, w - 1)
            cv = np.clip(np.where(front, cv, t["v"]), 0.0, h - 1)
            vals, _ = sample_bilinear(t["src"], cu, cv)
            parts.append(t["scale"] * self._psi(vals - t["ref"]).ravel())
        if self.t_ref is not None and self.alpha_mse > 0:
            parts.append(math.sqrt(self.alpha_mse) * pose_residual(pose, self.t_ref))
        return np.concatenate(parts)

    def jacobian(self, x: np.ndarray, eps: float, workers: int) -> tuple[np.ndarray, np.ndarray]:
        probes = []
        for i in range(6):
            e = np.zeros(6)
            e[i] = eps
            probes += [x + e, x - e]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=min(workers, 12)) as pool:
                outs = list(pool.map(self, probes))
        else:
            outs = [self(p) for p in probes]
        J = np.stack([(outs[2 * i] - outs[2 * i + 1]) / (2.0 * eps) for i in range(6)], axis=1)
        return self(x), J


def refine_pose(frame_i: Frame, frame_j: Frame, depth: DepthMap, k: CameraIntrinsics,
                init: PoseVec6, t_ref: Pose | None = None, w: LossWeights | None = None,
                cfg: OptimizerConfig | None = None, depth_i: DepthMap | None = None) -> OptimizationTrace:
    """Levenberg-Marquardt over the 6-parameter chart, starting at ``init``."""
    w = w or LossWeights()
    cfg = cfg or OptimizerConfig()
    trace = OptimizationTrace()

    def evaluate(x: np.ndarray) -> tuple[float, float]:
        return _objective_terms(frame_i, frame_j, depth, k, PoseVec6.from_array(x), t_ref, w, cfg, depth_i)

    x = init.as_array().copy()
    try:
        loss, frac = evaluate(x)
    except EmptyMaskError as exc:
        trace.status, trace.message = "empty_mask", f"no valid pixels at the initial pose: {exc}"
        trace.final_pose = pose_exp(init)
        return trace
    if not math.isfinite(loss):
        trace.status, trace.message = "non_finite", "objective is not finite at the initial pose"
        trace.final_pose = pose_exp(init)
        return trace

    lam = cfg.initial_damping
    trace.records.append(TraceRecord(0, PoseVec6.from_array(x), loss, lam, frac))
    relinearize = True
    while trace.iterations < cfg.max_iterations:
        if relinearize:
            res = _Residuals(frame_i, frame_j, depth, k, t_ref, w, cfg, depth_i, x)
            r, J = res.jacobian(x, cfg.fd_epsilon, cfg.workers)
            H = J.T @ J
            g = J.T @ r
            eig = np.linalg.eigvalsh(H)
            if not np.all(np.isfinite(H)):
                trace.status, trace.message = "non_finite", "non-finite Jacobian"
                break
            if eig[0] < cfg.min_curvature or eig[0] <= 1e-12 * eig[-1]:
                trace.status = "degenerate"
                trace.message = "objective is flat in some pose direction; pose is unobservable"
                break
            relinearize = False
        trace.iterations += 1
        A = H + lam * np.diag(np.diag(H))
        step = np.linalg.solve(A, -g)
        cand = x + step
        accepted = False
        new_loss, new_frac = math.inf, 0.0
        if np.linalg.norm(cand[3:]) < math.pi - CHART_MARGIN:
            try:
                new_loss, new_frac = evaluate(cand)
            except EmptyMaskError:
                new_loss = math.inf
            accepted = (math.isfinite(new_loss) and new_frac >= cfg.min_valid_fraction
                        and new_loss < loss)
        if accepted:
            decrease = loss - new_loss
            x, loss, frac = cand, new_loss, new_frac
            lam = max(lam * cfg.damping_down, 1e-12)
            trace.records.append(TraceRecord(trace.iterations, PoseVec6.from_array(x), loss, lam, frac))
            relinearize = True
            if decrease <= cfg.convergence_tol:
                trace.status, trace.message = "converged", "loss decrease below tolerance"
                break
        else:
            if np.linalg.norm(step) <= cfg.step_tol * (1.0 + np.linalg.norm(x)):
                trace.status, trace.message = "converged", "no descent step above step tolerance"
                break
            lam *= cfg.damping_up
            if lam > cfg.max_damping:
                trace.status, trace.message = "damping_overflow", "damping exceeded its limit without descent"
                break
    else:
        trace.status, trace.message = "max_iterations", "iteration budget exhausted"
    trace.final_pose = pose_exp(PoseVec6.from_array(x))
    return trace
