"""Align reconstruction submap pose sets into the world coordinate system.

Two registration methods are provided:

* ``PER_FRAME_MIN`` (default): every common frame proposes the rigid
  transform mapping its submap pose exactly onto its world pose; the
  candidate with minimal alignment error over all common frames wins.
  Ties break toward the lowest frame id.
* ``LEAST_SQUARES_SIM3``: closed-form similarity (rotation, translation,
  uniform scale) fitted to the camera centers of the common frames, for
  monocular reconstructions whose scale is not metric.

The alignment error of a transform T over frames F is
``mean_f [ ||center_world(f) - T(center_sub(f))|| + w * geo_angle(f) ]``
with ``w`` in meters/radian (default 1.0, configurable; set 0 for a pure
translation criterion).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, SchemaError, UnregistrableError
from .geometry import (
    PoseDirection,
    RigidPose,
    SimilarityTransform,
    compose,
    invert,
    matrix_to_quat,
    quat_multiply,
    rotation_geodesic_angle,
)

WORLD_LABEL = "world"


class PoseSetSource(enum.Enum):
    RECONSTRUCTION = "reconstruction"
    WORLD_ANCHOR = "world_anchor"


class RegistrationMethod(enum.Enum):
    PER_FRAME_MIN = "per_frame_min"
    LEAST_SQUARES_SIM3 = "least_squares_sim3"


_DEFAULT_MIN_COMMON = {
    RegistrationMethod.PER_FRAME_MIN: 1,
    RegistrationMethod.LEAST_SQUARES_SIM3: 3,
}


@dataclass(frozen=True)
class PoseSet:
    """frame_id -> RigidPose map tagged with its coordinate system.

    All poses must share one direction convention.
    """

    system_label: str
    poses: dict[int, RigidPose]
    source: PoseSetSource = PoseSetSource.RECONSTRUCTION

    def __post_init__(self):
        directions = {p.direction for p in self.poses.values()}
        if len(directions) > 1:
            raise DomainError(
                f"pose set {self.system_label!r} mixes direction conventions"
            )

    def frames(self) -> list[int]:
        return sorted(self.poses)

    def __len__(self) -> int:
        return len(self.poses)

    def __contains__(self, frame_id: int) -> bool:
        return frame_id in self.poses

    def centers(self, frames) -> np.ndarray:
        return np.array([self.poses[f].camera_center() for f in frames]).reshape(-1, 3)

    def rotations_c2w(self, frames) -> np.ndarray:
        return np.array([self.poses[f].rotation_c2w() for f in frames]).reshape(-1, 4)


@dataclass(frozen=True)
class FrameResidual:
    translation_m: float
    rotation_rad: float


@dataclass(frozen=True)
class RegistrationReport:
    submap_label: str
    method: RegistrationMethod
    transform: SimilarityTransform
    common_frames: list[int]
    residuals: dict[int, FrameResidual]
    chosen_frame: int | None
    rotation_weight: float

    def mean_translation_error(self) -> float:
        return float(np.mean([r.translation_m for r in self.residuals.values()]))

    def mean_rotation_error(self) -> float:
        return float(np.mean([r.rotation_rad for r in self.residuals.values()]))

    def mean_error(self) -> float:
        return float(
            np.mean(
                [
                    r.translation_m + self.rotation_weight * r.rotation_rad
                    for r in self.residuals.values()
                ]
            )
        )


def common_frames(a: PoseSet, b: PoseSet) -> list[int]:
    """Sorted intersection of the two key sets."""
    return sorted(a.poses.keys() & b.poses.keys())


def candidate_transform(frame: int, s_c: PoseSet, s_m: PoseSet) -> SimilarityTransform:
    """Rigid transform mapping the submap pose of ``frame`` exactly onto its
    world pose: T = P_m(frame) ∘ P_c(frame)^-1 on camera-to-world poses."""
    p_c = s_c.poses[frame].to_direction(PoseDirection.CAMERA_TO_WORLD)
    p_m = s_m.poses[frame].to_direction(PoseDirection.CAMERA_TO_WORLD)
    return compose(p_m, invert(p_c))


def transform_error(
    t: SimilarityTransform,
    s_c: PoseSet,
    s_m: PoseSet,
    frames,
    rotation_weight: float = 1.0,
) -> float:
    """Mean translation + weighted rotation misalignment of t over frames."""
    frames = list(frames)
    if not frames:
        raise DomainError("transform_error needs at least one frame")
    total = 0.0
    for f in frames:
        p_c = s_c.poses[f]
        p_m = s_m.poses[f]
        trans_err = float(np.linalg.norm(p_m.camera_center() - t.apply(p_c.camera_center())))
        rot_err = rotation_geodesic_angle(
            p_m.rotation_c2w(), quat_multiply(t.rotation, p_c.rotation_c2w())
        )
        total += trans_err + rotation_weight * rot_err
    return total / len(frames)


def umeyama_alignment(src: np.ndarray, dst: np.ndarray, with_scale: bool = True):
    """Closed-form least-squares similarity fit dst ≈ s R src + t.

    Returns (scale, rotation_matrix, translation).  Raises
    UnregistrableError when the source centers are collinear or coincident
    (rotation not recoverable from centers alone).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    xs = src - mu_src
    xd = dst - mu_dst
    cov = xd.T @ xs / n
    u, d, vt = np.linalg.svd(cov)
    if d[0] <= 0.0 or d[1] <= d[0] * 1e-9:
        raise UnregistrableError(
            "camera centers are collinear or coincident; similarity fit is degenerate"
        )
    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rot = u @ sign @ vt
    if with_scale:
        var_src = float((xs**2).sum()) / n
        scale = float((d * sign.diagonal()).sum()) / var_src
        if not (np.isfinite(scale) and scale > 0):
            raise UnregistrableError(f"degenerate similarity scale {scale}")
    else:
        scale = 1.0
    t = mu_dst - scale * rot @ mu_src
    return scale, rot, t


def register_submap(
    s_c: PoseSet,
    s_m: PoseSet,
    method: RegistrationMethod = RegistrationMethod.PER_FRAME_MIN,
    min_common: int | None = None,
    rotation_weight: float = 1.0,
) -> RegistrationReport:
    """Estimate the transform aligning submap ``s_c`` into the system of
    ``s_m``.

    Raises UnregistrableError when there are fewer common frames than
    ``min_common`` (default 1 for PER_FRAME_MIN, 3 for LEAST_SQUARES_SIM3)
    or when the geometry is degenerate; the submap then stays unposed.
    """
    if min_common is None:
        min_common = _DEFAULT_MIN_COMMON[method]
    frames = common_frames(s_c, s_m)
    if len(frames) == 0:
        raise UnregistrableError(
            f"no common frames between {s_c.system_label!r} and {s_m.system_label!r}"
        )
    if len(frames) < min_common:
        raise UnregistrableError(
            f"{len(frames)} common frames < required minimum {min_common}"
        )

    centers_c = s_c.centers(frames)
    centers_m = s_m.centers(frames)
    chosen: int | None = None
    if method is RegistrationMethod.PER_FRAME_MIN:
        quats_c = s_c.rotations_c2w(frames)
        quats_m = s_m.rotations_c2w(frames)
        errs = kernels.candidate_alignment_errors(
            centers_c, centers_m, quats_c, quats_m, float(rotation_weight)
        )
        chosen = frames[int(np.argmin(errs))]
        transform = candidate_transform(chosen, s_c, s_m)
    elif method is RegistrationMethod.LEAST_SQUARES_SIM3:
        scale, rot, t = umeyama_alignment(centers_c, centers_m, with_scale=True)
        transform = SimilarityTransform(scale, matrix_to_quat(rot), t)
    else:
        raise DomainError(f"unknown registration method {method!r}")

    residuals = {}
    for i, f in enumerate(frames):
        trans_err = float(np.linalg.norm(centers_m[i] - transform.apply(centers_c[i])))
        rot_err = rotation_geodesic_angle(
            s_m.poses[f].rotation_c2w(),
            quat_multiply(transform.rotation, s_c.poses[f].rotation_c2w()),
        )
        residuals[f] = FrameResidual(trans_err, rot_err)
    return RegistrationReport(
        submap_label=s_c.system_label,
        method=method,
        transform=transform,
        common_frames=frames,
        residuals=residuals,
        chosen_frame=chosen,
        rotation_weight=float(rotation_weight),
    )


def apply_registration(report: RegistrationReport, s_c: PoseSet) -> PoseSet:
    """Map every pose of the submap through the registration transform.

    Output poses are camera-to-world in the world system; camera centers
    satisfy center_out = T(center_in) exactly.
    """
    t = report.transform
    out = {}
    for frame_id, pose in s_c.poses.items():
        c2w = pose.to_direction(PoseDirection.CAMERA_TO_WORLD)
        out[frame_id] = RigidPose(
            quat_multiply(t.rotation, c2w.rotation),
            t.apply(c2w.translation),
            PoseDirection.CAMERA_TO_WORLD,
        )
    return PoseSet(WORLD_LABEL, out, s_c.source)


def filter_poses(s: PoseSet, reproj: dict[int, float], threshold: float | None) -> PoseSet:
    """Drop frames whose reprojection error exceeds the threshold.

    ``threshold=None`` disables filtering and returns the input unchanged;
    frames without a reprojection-error entry are always kept.
    """
    unknown = set(reproj) - set(s.poses)
    if unknown:
        raise DomainError(f"reprojection errors for unknown frames: {sorted(unknown)[:5]}")
    if threshold is None:
        return s
    kept = {
        f: p
        for f, p in s.poses.items()
        if f not in reproj or not (reproj[f] > threshold)
    }
    return PoseSet(s.system_label, kept, s.source)


def merge_registered(registered: list[tuple[RegistrationReport, PoseSet]]) -> PoseSet:
    """Union of registered submaps; on frame collisions the pose from the
    submap with the lower mean alignment error wins."""
    merged: dict[int, RigidPose] = {}
    owner_err: dict[int, float] = {}
    for report, poses in registered:
        err = report.mean_error()
        for frame_id, pose in poses.poses.items():
            if frame_id not in merged or err < owner_err[frame_id]:
                merged[frame_id] = pose
                owner_err[frame_id] = err
    return PoseSet(WORLD_LABEL, merged, PoseSetSource.RECONSTRUCTION)


# ---------------------------------------------------------------------------
# Pose-file and report serialization
# ---------------------------------------------------------------------------
#
# Pose file: JSON map  clip_id -> { frame_id -> {qw,qx,qy,qz,tx,ty,tz,
# direction} }  where direction is "camera_to_world" or "world_to_camera".
# Both anchor (world) poses and registered output use this one schema.

def pose_to_dict(pose: RigidPose) -> dict:
    q = pose.rotation
    t = pose.translation
    return {
        "qw": float(q[0]), "qx": float(q[1]), "qy": float(q[2]), "qz": float(q[3]),
        "tx": float(t[0]), "ty": float(t[1]), "tz": float(t[2]),
        "direction": pose.direction.value,
    }


def pose_from_dict(d: dict, where: str = "pose") -> RigidPose:
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object, got {type(d).__name__}")
    missing = {"qw", "qx", "qy", "qz", "tx", "ty", "tz", "direction"} - set(d)
    if missing:
        raise SchemaError(f"{where}: missing fields {sorted(missing)}")
    try:
        direction = PoseDirection(d["direction"])
    except ValueError:
        raise SchemaError(f"{where}: bad direction {d['direction']!r}") from None
    try:
        q = [float(d[k]) for k in ("qw", "qx", "qy", "qz")]
        t = [float(d[k]) for k in ("tx", "ty", "tz")]
        return RigidPose(np.array(q), np.array(t), direction)
    except (TypeError, ValueError, DomainError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def pose_sets_to_json(sets: dict[str, PoseSet]) -> str:
    doc = {
        clip: {str(f): pose_to_dict(p) for f, p in ps.poses.items()}
        for clip, ps in sets.items()
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def pose_sets_from_json(
    text: str, source: PoseSetSource = PoseSetSource.WORLD_ANCHOR
) -> dict[str, PoseSet]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"pose file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("pose file must be a JSON object keyed by clip id")
    sets = {}
    for clip, frames in doc.items():
        if not isinstance(frames, dict):
            raise SchemaError(f"clip {clip!r}: expected a frame->pose object")
        poses = {}
        for key, val in frames.items():
            try:
                frame_id = int(key)
            except ValueError:
                raise SchemaError(f"clip {clip!r}: frame key {key!r} is not an integer") from None
            poses[frame_id] = pose_from_dict(val, where=f"clip {clip!r} frame {key}")
        sets[clip] = PoseSet(clip, poses, source)
    return sets


def transform_to_dict(t: SimilarityTransform) -> dict:
    q = t.rotation
    tr = t.translation
    return {
        "scale": float(t.scale),
        "qw": float(q[0]), "qx": float(q[1]), "qy": float(q[2]), "qz": float(q[3]),
        "tx": float(tr[0]), "ty": float(tr[1]), "tz": float(tr[2]),
    }


def transform_from_dict(d: dict) -> SimilarityTransform:
    try:
        return SimilarityTransform(
            float(d["scale"]),
            np.array([float(d[k]) for k in ("qw", "qx", "qy", "qz")]),
            np.array([float(d[k]) for k in ("tx", "ty", "tz")]),
        )
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise SchemaError(f"bad transform record: {exc}") from None


def report_to_dict(report: RegistrationReport) -> dict:
    return {
        "submap": report.submap_label,
        "registered": True,
        "method": report.method.value,
        "transform": transform_to_dict(report.transform),
        "common_frames": list(report.common_frames),
        "chosen_frame": report.chosen_frame,
        "rotation_weight": report.rotation_weight,
        "residuals": {
            str(f): {"translation_m": r.translation_m, "rotation_rad": r.rotation_rad}
            for f, r in report.residuals.items()
        },
        "mean_translation_error_m": report.mean_translation_error(),
        "mean_rotation_error_rad": report.mean_rotation_error(),
    }
