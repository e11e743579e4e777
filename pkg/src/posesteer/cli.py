"""Command-line entry point: ``posesteer {warp,loss,refine,eval,synth}``.

Exit codes: 0 success, 2 unreadable or malformed input, 3 inconsistent
inputs (dimensions, frame indices, subset assignment), 4 empty mask or empty
view, 5 pose refinement did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import imageio
from .errors import DimensionMismatchError, EmptyMaskError, EmptyViewError, InvalidArgumentError
from .geometry import CameraIntrinsics, Pose, PoseVec6, pose_inverse, pose_log
from .imageio import FormatError
from .losses import LossWeights, photometric_loss, pose_mse, total_objective
from .metrics import Trajectory, trajectory_errors
from .optimizer import OptimizerConfig, refine_pose
from .synth import DEFAULT_TEXTURE, SceneSpec, render_view
from .warp import inverse_warp, warp_frame

EXIT_OK, EXIT_PARSE, EXIT_MISMATCH, EXIT_EMPTY, EXIT_NOT_CONVERGED = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        self.code = code
        super().__init__(msg)


# --- input loading -------------------------------------------------------------

def _parse_error(path, exc: Exception) -> CliError:
    if isinstance(exc, FormatError):
        return CliError(EXIT_PARSE, str(exc))
    return CliError(EXIT_PARSE, f"{path}: byte 0: {exc}")


def load_json(path) -> Any:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{path}: byte 0: cannot read file ({exc.strerror})") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{path}: byte {exc.start}: invalid UTF-8") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise CliError(EXIT_PARSE, f"{path}: byte {offset}: {exc.msg}") from None


def _load(path, parse: Callable[[Any], Any]) -> Any:
    obj = load_json(path)
    try:
        return parse(obj)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CliError(EXIT_PARSE, f"{path}: byte 0: malformed content ({type(exc).__name__}: {exc})") from None


def _read(path, reader: Callable[[Any], Any]) -> Any:
    try:
        return reader(path)
    except (FormatError, InvalidArgumentError, OSError) as exc:
        raise _parse_error(path, exc) from None


def _load_trajectories(path) -> dict[str, Trajectory]:
    def parse(obj):
        if isinstance(obj, list):
            return {"0": Trajectory.from_json(obj)}
        return {str(q): Trajectory.from_json(arr) for q, arr in obj.items()}
    return _load(path, parse)


def _write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# --- configuration ---------------------------------------------------------------

def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("POSE_STEER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(EXIT_PARSE, f"POSE_STEER_THREADS={env!r} is not an integer") from None
    return 1


def _config(args) -> dict:
    return load_json(args.config) if args.config else {}


def _weights(args, cfg: dict) -> LossWeights:
    vals = dict(cfg.get("weights", {}))
    vals.update({k: cfg[k] for k in ("alpha_p", "alpha_p_inv", "alpha_mse", "ssim_weight") if k in cfg})
    for key in ("alpha_p", "alpha_p_inv", "alpha_mse", "ssim_weight"):
        v = getattr(args, key, None)
        if v is not None:
            vals[key] = v
    try:
        return LossWeights.from_json(vals)
    except (InvalidArgumentError, ValueError, TypeError) as exc:
        raise CliError(EXIT_PARSE, f"{args.config or 'weights'}: byte 0: {exc}") from None


def _optimizer(args, cfg: dict, workers: int) -> OptimizerConfig:
    vals = dict(cfg.get("optimizer", {}))
    if args.inverse:
        vals["use_inverse_loss"] = True
    if getattr(args, "max_iterations", None) is not None:
        vals["max_iterations"] = args.max_iterations
    vals["workers"] = workers
    try:
        return OptimizerConfig.from_json(vals)
    except (InvalidArgumentError, ValueError, TypeError) as exc:
        raise CliError(EXIT_PARSE, f"{args.config or 'optimizer'}: byte 0: {exc}") from None


def _pose_obj(obj) -> Pose:
    # a refine result file carries its pose under "final_pose"
    if isinstance(obj, dict) and "final_pose" in obj:
        obj = obj["final_pose"]
    return Pose.from_json(obj)


def _pose(path) -> Pose:
    return Pose.identity() if path is None else _load(path, _pose_obj)


def _frames_and_depths(args, n_frames: int):
    if len(args.frames) != n_frames:
        raise CliError(EXIT_PARSE, f"--frames expects {n_frames} path(s), got {len(args.frames)}")
    if not args.depth:
        raise CliError(EXIT_PARSE, "--depth is required")
    if args.intrinsics is None:
        raise CliError(EXIT_PARSE, "--intrinsics is required")
    frames = [_read(p, imageio.read_frame) for p in args.frames]
    depths = [_read(p, imageio.read_depth) for p in args.depth]
    k = _load(args.intrinsics, CameraIntrinsics.from_json)
    return frames, depths, k


def _check_dims(k: CameraIntrinsics, *items) -> None:
    want = (k.height, k.width)
    for it in items:
        if tuple(it.shape) != want:
            raise CliError(EXIT_MISMATCH, f"dimension mismatch: {tuple(it.shape)} vs intrinsics {want}")
    chans = {it.channels for it in items if hasattr(it, "channels")}
    if len(chans) > 1:
        raise CliError(EXIT_MISMATCH, f"frames have different channel counts {sorted(chans)}")


def _out_dir(args) -> Path:
    try:
        return imageio.ensure_dir(args.out)
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"{args.out}: cannot create output directory ({exc.strerror})") from None


# --- subcommands ---------------------------------------------------------------

def cmd_warp(args) -> int:
    workers = _threads(args)
    (src,), depths, k = _frames_and_depths(args, 1)
    _check_dims(k, src, depths[0])
    pose = _pose(args.pose)
    op = inverse_warp if args.inverse else warp_frame
    res = op(src, depths[0], k, pose, workers=workers)
    out = _out_dir(args)
    ext = "ppm" if src.channels == 3 else "pgm"
    imageio.write_frame(out / f"warped.{ext}", res.warped)
    imageio.write_mask(out / "mask.pgm", res.mask)
    h, w = res.mask.shape
    v, u = np.mgrid[0:h, 0:w]
    m = res.mask.data
    shift = np.hypot(res.correspondences[..., 0] - u, res.correspondences[..., 1] - v)[m]
    summary = {
        "operation": "inverse_warp" if args.inverse else "warp_frame",
        "valid_fraction": res.valid_fraction,
        "valid_pixels": res.mask.count,
        "mean_shift": float(np.mean(shift)) if shift.size else None,
        "max_shift": float(np.max(shift)) if shift.size else None,
        "warped": f"warped.{ext}",
        "mask": "mask.pgm",
        "pose": pose.to_json(),
    }
    _write_json(out / "warp_summary.json", summary)
    if res.mask.count == 0:
        raise CliError(EXIT_EMPTY, "warp produced an empty mask")
    return EXIT_OK


def cmd_loss(args) -> int:
    workers = _threads(args)
    cfg = _config(args)
    w = _weights(args, cfg)
    (fi, fj), depths, k = _frames_and_depths(args, 2)
    if args.inverse and len(depths) < 2:
        raise CliError(EXIT_PARSE, "--inverse needs --depth DEPTH_J DEPTH_I")
    _check_dims(k, fi, fj, *depths)
    pose = _pose(args.pose)
    ref = None if args.ref_pose is None else _pose(args.ref_pose)
    fwd = warp_frame(fi, depths[0], k, pose, workers=workers)
    l_p = photometric_loss(fj, fwd.warped, fwd.mask, w)
    l_p_inv, frac_inv = 0.0, None
    if args.inverse:
        inv = inverse_warp(fj, depths[1], k, pose_inverse(pose), workers=workers)
        l_p_inv = photometric_loss(fi, inv.warped, inv.mask, w)
        frac_inv = inv.valid_fraction
    l_mse = pose_mse(pose, ref) if ref is not None else 0.0
    report = total_objective(args.l_g, l_p, l_p_inv, l_mse, w, fwd.valid_fraction, frac_inv)
    out = _out_dir(args)
    doc = report.to_json()
    doc["inverse"] = bool(args.inverse)
    doc["ref_pose"] = ref is not None
    _write_json(out / "loss.json", doc)
    if report.empty:
        raise CliError(EXIT_EMPTY, f"empty mask for {', '.join(report.empty)}")
    return EXIT_OK


def cmd_refine(args) -> int:
    workers = _threads(args)
    cfg = _config(args)
    w = _weights(args, cfg)
    opt = _optimizer(args, cfg, workers)
    (fi, fj), depths, k = _frames_and_depths(args, 2)
    if opt.use_inverse_loss and len(depths) < 2:
        raise CliError(EXIT_PARSE, "--inverse needs --depth DEPTH_J DEPTH_I")
    _check_dims(k, fi, fj, *depths)
    init = pose_log(_pose(args.pose))
    ref = None if args.ref_pose is None else _pose(args.ref_pose)
    trace = refine_pose(fi, fj, depths[0], k, init, ref, w, opt,
                        depth_i=depths[1] if len(depths) > 1 else None)
    out = _out_dir(args)
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    summary = trace.summary()
    summary["final_pose6"] = pose_log(trace.final_pose).to_json()
    _write_json(out / "final_pose.json", summary)
    if trace.status == "empty_mask":
        raise CliError(EXIT_EMPTY, trace.message)
    if not trace.converged:
        raise CliError(EXIT_NOT_CONVERGED, f"refinement ended with status {trace.status}: {trace.message}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.traj_gt is None or args.traj_est is None:
        raise CliError(EXIT_PARSE, "--traj-gt and --traj-est are required")
    gt = _load_trajectories(args.traj_gt)
    est = _load_trajectories(args.traj_est)
    subsets = None
    if args.subsets is not None:
        subsets = _load(args.subsets, lambda obj: {str(q): str(s) for q, s in obj.items()})
    try:
        report = trajectory_errors(gt, est, subsets, scale_align=args.scale_align)
    except InvalidArgumentError as exc:
        raise CliError(EXIT_MISMATCH, str(exc)) from None
    out = _out_dir(args)
    _write_json(out / "alignment.json", report.to_json())
    return EXIT_OK


def _reseed(layers, seed: int):
    if isinstance(layers, dict):
        layers = [layers]
    out = []
    for i, layer in enumerate(layers):
        layer = dict(layer)
        if layer.get("type") == "value_noise":
            layer["seed"] = seed + i
        out.append(layer)
    return out


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.scene is None and "scene" not in cfg:
        raise CliError(EXIT_PARSE, "--scene (or a 'scene' entry in --config) is required")
    src = args.scene or args.config
    raw = load_json(args.scene) if args.scene else cfg["scene"]
    if not isinstance(raw, dict):
        raise CliError(EXIT_PARSE, f"{src}: byte 0: scene must be a JSON object")
    raw = dict(raw)
    if args.seed is not None:
        raw["texture"] = _reseed(raw.get("texture", DEFAULT_TEXTURE), args.seed)
    try:
        spec = SceneSpec.from_json(raw)
        poses = [Pose.from_json(p) for p in raw.get("poses", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"{src}: byte 0: malformed scene ({type(exc).__name__}: {exc})") from None
    poses += [_pose(p) for p in (args.pose or [])]
    if not poses:
        poses = [Pose.identity()]
    out = _out_dir(args)
    ext = "ppm" if spec.channels == 3 else "pgm"
    written = []
    for n, pose in enumerate(poses):
        try:
            frame, depth = render_view(spec, pose)
        except EmptyViewError as exc:
            raise CliError(EXIT_EMPTY, f"view {n}: {exc}") from None
        imageio.write_frame(out / f"frame_{n:03d}.{ext}", frame)
        imageio.write_pfm(out / f"depth_{n:03d}.pfm", depth)
        imageio.write_depth_text(out / f"depth_{n:03d}.txt", depth)
        written.append({"pose": pose.to_json(), "frame": f"frame_{n:03d}.{ext}",
                        "depth_pfm": f"depth_{n:03d}.pfm", "depth_txt": f"depth_{n:03d}.txt"})
    _write_json(out / "scene.json", spec.to_json())
    _write_json(out / "synth_summary.json", {"views": written})
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config; CLI flags override it")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="random seed (synthetic textures)")
    p.add_argument("--threads", type=int, help="worker cap (falls back to POSE_STEER_THREADS)")


def _inputs(p: argparse.ArgumentParser, frames_help: str) -> None:
    p.add_argument("--frames", nargs="+", default=[], help=frames_help)
    p.add_argument("--depth", nargs="+", default=[], help="target-side depth (PFM or text), then optional depth of frame i")
    p.add_argument("--intrinsics", help="intrinsics JSON")
    p.add_argument("--pose", help="target-to-source pose JSON (identity if omitted)")
    p.add_argument("--inverse", action="store_true", help="enable the inverse warping path")


def _weight_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-p", dest="alpha_p", type=float)
    p.add_argument("--alpha-p-inv", dest="alpha_p_inv", type=float)
    p.add_argument("--alpha-mse", dest="alpha_mse", type=float)
    p.add_argument("--ssim-weight", dest="ssim_weight", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posesteer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("warp", help="synthesize a view from a frame, depth and pose")
    _common(p)
    _inputs(p, "source frame")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("loss", help="score a frame pair under a pose")
    _common(p)
    _inputs(p, "frame i (sampled) and frame j (reference)")
    _weight_flags(p)
    p.add_argument("--ref-pose", help="reference pose JSON for the regression term")
    p.add_argument("--l-g", dest="l_g", type=float, default=0.0, help="externally supplied generative loss")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("refine", help="recover the relative pose photometrically")
    _common(p)
    _inputs(p, "frame i (sampled) and frame j (reference)")
    _weight_flags(p)
    p.add_argument("--ref-pose", help="reference pose JSON for the regression term")
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="trajectory alignment errors")
    _common(p)
    p.add_argument("--traj-gt")
    p.add_argument("--traj-est")
    p.add_argument("--subsets", help="JSON mapping sequence id to subset id")
    p.add_argument("--scale-align", action="store_true", help="per-sequence least-squares scale")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="render synthetic scenes")
    _common(p)
    p.add_argument("--scene", help="SceneSpec JSON")
    p.add_argument("--pose", nargs="*", help="camera-to-world pose JSON files")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"posesteer {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except DimensionMismatchError as exc:
        print(f"posesteer {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (EmptyMaskError, EmptyViewError) as exc:
        print(f"posesteer {args.command}: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except InvalidArgumentError as exc:
        print(f"posesteer {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
