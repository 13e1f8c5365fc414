"""Synthetic scenes with exact ground truth for end-to-end verification.

A scene is a deterministic function of its seed: an orbit-like camera
trajectory looking at the origin (piecewise-linear positions, slerped
orientations), point landmarks, and query objects placed near the origin
so that every object is seen from several frames.  From a scene one can

* fragment the trajectory into submaps, each re-expressed in its own
  coordinate system through a known similarity (plus optional noise and
  pose dropout), with the ground-truth transforms retained;
* render ideal observations: detection boxes centered on exact
  projections, depth grids carrying the true depth at those pixels, and
  visual queries whose track is the object's last contiguous visible run;
* run the whole register -> localize -> evaluate pipeline through the
  same file formats the CLI consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .colmap_model import (
    ModelCamera,
    ModelImage,
    ModelPoint3D,
    ReconstructionModel,
)
from .errors import DomainError
from .frames import ResponseTrack, TrackBox
from .geometry import (
    Intrinsics,
    PoseDirection,
    RigidPose,
    SimilarityTransform,
    matrix_to_quat,
    project,
    quat_from_axis_angle,
    quat_multiply,
    quat_slerp,
)
from .localization import DepthGrid, VisualQuery
from .registration import PoseSet, PoseSetSource

BOX_HALF_WIDTH = 10.0  # px, fixed ideal detection size
_VISIBILITY_MARGIN = BOX_HALF_WIDTH + 2.0

SYNTH_INTRINSICS = Intrinsics(fx=130.0, fy=130.0, cx=80.0, cy=60.0, width=160, height=120)


@dataclass(frozen=True)
class SyntheticScene:
    seed: int
    clip_id: str
    landmarks: np.ndarray  # (L, 3) world points
    trajectory: PoseSet  # camera-to-world, world system
    intrinsics: Intrinsics
    objects: tuple[tuple[str, np.ndarray], ...]  # (object_id, world position)


@dataclass(frozen=True)
class CorruptionSpec:
    """Failure modes applied when fragmenting a scene into submaps."""

    center_noise_sigma: float = 0.0  # meters
    rotation_noise_sigma: float = 0.0  # radians
    submap_cuts: tuple[int, ...] = ()  # first frame of each new submap
    submap_transforms: tuple[SimilarityTransform, ...] | None = None
    pose_dropout: float = 0.0
    depth_noise_sigma: float = 0.0  # meters
    anchor_stride: int = 1

    def __post_init__(self):
        if min(self.center_noise_sigma, self.rotation_noise_sigma, self.depth_noise_sigma) < 0:
            raise DomainError("noise sigmas must be non-negative")
        if not 0.0 <= self.pose_dropout <= 1.0:
            raise DomainError("pose_dropout must lie in [0, 1]")
        if self.anchor_stride < 1:
            raise DomainError("anchor_stride must be >= 1")
        object.__setattr__(self, "submap_cuts", tuple(sorted(self.submap_cuts)))


@dataclass(frozen=True)
class FragmentResult:
    submaps: tuple[PoseSet, ...]  # world-to-camera, one system per submap
    anchor: PoseSet  # noiseless camera-to-world world poses
    gt_transforms: tuple[SimilarityTransform, ...]  # submap system -> world
    submap_landmarks: tuple[np.ndarray, ...]  # landmarks in each submap system
    dropped_frames: frozenset[int]


@dataclass(frozen=True)
class Observations:
    queries: tuple[VisualQuery, ...]
    depth_grids: dict[int, DepthGrid]
    boxes: dict[int, dict[str, TrackBox]] = field(default_factory=dict)


def _look_at_quat(center: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera-to-world rotation with +z toward the target (x right, y down)."""
    fwd = target - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(np.dot(up, fwd))) > 0.999:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(up, fwd)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    return matrix_to_quat(np.stack([right, down, fwd], axis=1))


def _project_with_margin(pose_c2w: RigidPose, point: np.ndarray, k: Intrinsics, margin: float):
    """Pixel of a world point, or None if behind or within margin of the border."""
    cam = pose_c2w.inverse().apply(point)
    if cam[2] <= 0:
        return None
    pix, _ = project(cam, k)
    if not (margin <= pix[0] <= k.width - margin and margin <= pix[1] <= k.height - margin):
        return None
    return pix


def generate_scene(
    seed: int, n_frames: int = 40, n_objects: int = 3, n_landmarks: int = 50
) -> SyntheticScene:
    """Deterministic scene; every object is box-visible from several frames."""
    if n_frames < 2:
        raise DomainError("need at least 2 frames")
    if n_objects < 1:
        raise DomainError("need at least 1 object")
    rng = np.random.default_rng(seed)
    k = SYNTH_INTRINSICS

    # orbit waypoints around the origin
    n_way = max(2, n_frames // 4)
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    thetas = theta0 + np.linspace(0.0, 1.5 * math.pi, n_way)
    radii = 4.0 + rng.uniform(-0.2, 0.2, size=n_way)
    heights = rng.uniform(-0.3, 0.3, size=n_way)
    way_pos = np.stack(
        [radii * np.cos(thetas), heights, radii * np.sin(thetas)], axis=1
    )
    way_quat = [_look_at_quat(p, np.zeros(3)) for p in way_pos]

    poses = {}
    for i in range(n_frames):
        s = i / (n_frames - 1) * (n_way - 1)
        j = min(int(s), n_way - 2)
        t = s - j
        pos = (1.0 - t) * way_pos[j] + t * way_pos[j + 1]
        q = quat_slerp(way_quat[j], way_quat[j + 1], t)
        poses[i] = RigidPose(q, pos, PoseDirection.CAMERA_TO_WORLD)
    trajectory = PoseSet("world", poses, PoseSetSource.WORLD_ANCHOR)

    landmarks = np.stack(
        [
            rng.uniform(-1.6, 1.6, size=n_landmarks),
            rng.uniform(-0.7, 0.7, size=n_landmarks),
            rng.uniform(-1.6, 1.6, size=n_landmarks),
        ],
        axis=1,
    )

    objects = []
    occupied: set[tuple[int, int, int]] = set()
    for idx in range(n_objects):
        for _ in range(100):
            pos = np.array(
                [rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5), rng.uniform(-1.0, 1.0)]
            )
            visible = [
                f
                for f in range(n_frames)
                if _project_with_margin(poses[f], pos, k, _VISIBILITY_MARGIN) is not None
            ]
            # a usable query needs a visible run starting before the final
            # frame (the run is trimmed when it swallows the last frame)
            if not (len(visible) >= min(3, n_frames) and min(visible) <= n_frames - 2):
                continue
            # objects may not share a depth pixel with an earlier object in
            # any frame, so each rendered depth sample stays unambiguous
            cells = set()
            for f in range(n_frames):
                pix = _project_with_margin(poses[f], pos, k, BOX_HALF_WIDTH)
                if pix is not None:
                    cells.add((f, int(round(pix[0])), int(round(pix[1]))))
            if not cells & occupied:
                occupied |= cells
                break
        else:
            raise DomainError(f"seed {seed}: could not place object {idx}")
        objects.append((f"obj{idx}", pos))

    return SyntheticScene(
        seed=seed,
        clip_id=f"clip{seed:05d}",
        landmarks=landmarks,
        trajectory=trajectory,
        intrinsics=k,
        objects=tuple(objects),
    )


# ---------------------------------------------------------------------------
# Fragmentation into submaps
# ---------------------------------------------------------------------------

def _pose_through_inverse_similarity(pose_c2w: RigidPose, s: SimilarityTransform) -> RigidPose:
    """Re-express a world camera pose in the submap system defined by s
    (s maps submap coordinates to world coordinates)."""
    inv = s.inverse()
    center = inv.apply(pose_c2w.translation)
    rot = quat_multiply(inv.rotation, pose_c2w.rotation)
    return RigidPose(rot, center, PoseDirection.CAMERA_TO_WORLD)


def fragment_and_corrupt(scene: SyntheticScene, spec: CorruptionSpec) -> FragmentResult:
    """Split the trajectory at the cut frames and re-express each segment in
    its own coordinate system, with optional noise and pose dropout.

    The anchor set keeps noiseless world poses at ``anchor_stride``;
    ground-truth submap-to-world transforms are returned for assertions.
    """
    frames = scene.trajectory.frames()
    lo, hi = frames[0], frames[-1]
    for cut in spec.submap_cuts:
        if not lo < cut <= hi:
            raise DomainError(f"cut {cut} outside frame range ({lo}, {hi}]")

    bounds = [lo] + list(spec.submap_cuts) + [hi + 1]
    n_submaps = len(bounds) - 1
    if spec.submap_transforms is None:
        transforms = tuple(SimilarityTransform.identity() for _ in range(n_submaps))
    else:
        transforms = tuple(spec.submap_transforms)
        if len(transforms) != n_submaps:
            raise DomainError(
                f"{len(transforms)} submap transforms for {n_submaps} submaps"
            )

    rng = np.random.default_rng([scene.seed, 101])
    submaps = []
    submap_landmarks = []
    dropped = set()
    for si in range(n_submaps):
        seg = [f for f in frames if bounds[si] <= f < bounds[si + 1]]
        s = transforms[si]
        poses = {}
        for f in seg:
            # noise and dropout draw from the rng stream for every frame so
            # the stream position does not depend on earlier outcomes
            d_center = rng.normal(0.0, 1.0, size=3)
            axis = rng.normal(0.0, 1.0, size=3)
            angle = rng.normal(0.0, 1.0)
            drop = rng.random()
            if drop < spec.pose_dropout:
                dropped.add(f)
                continue
            local = _pose_through_inverse_similarity(scene.trajectory.poses[f], s)
            center = local.translation + spec.center_noise_sigma * d_center
            rot = local.rotation
            if spec.rotation_noise_sigma > 0 and np.linalg.norm(axis) > 0:
                rot = quat_multiply(
                    quat_from_axis_angle(axis, spec.rotation_noise_sigma * angle), rot
                )
            c2w = RigidPose(rot, center, PoseDirection.CAMERA_TO_WORLD)
            poses[f] = c2w.inverse()  # stored world-to-camera, like model files
        submaps.append(PoseSet(f"submap_{si}", poses, PoseSetSource.RECONSTRUCTION))
        inv = s.inverse()
        submap_landmarks.append(
            np.array([inv.apply(p) for p in scene.landmarks]).reshape(-1, 3)
        )

    anchor_poses = {
        f: scene.trajectory.poses[f] for f in frames if (f - lo) % spec.anchor_stride == 0
    }
    anchor = PoseSet("world", anchor_poses, PoseSetSource.WORLD_ANCHOR)
    return FragmentResult(
        submaps=tuple(submaps),
        anchor=anchor,
        gt_transforms=transforms,
        submap_landmarks=tuple(submap_landmarks),
        dropped_frames=frozenset(dropped),
    )


# ---------------------------------------------------------------------------
# Ideal observations: boxes, depth grids, queries
# ---------------------------------------------------------------------------

def _box_visible_frames(scene: SyntheticScene, pos: np.ndarray) -> dict[int, np.ndarray]:
    out = {}
    for f in scene.trajectory.frames():
        pix = _project_with_margin(
            scene.trajectory.poses[f], pos, scene.intrinsics, BOX_HALF_WIDTH
        )
        if pix is not None:
            out[f] = pix
    return out


def _last_run(frames: list[int]) -> list[int]:
    run = [frames[-1]]
    for f in reversed(frames[:-1]):
        if f == run[0] - 1:
            run.insert(0, f)
        else:
            break
    return run


def render_observations(
    scene: SyntheticScene, corruption: CorruptionSpec | None = None
) -> Observations:
    """Boxes centered at exact projections, depth grids with the true depth
    at those pixels, and one query per object whose track is the last
    contiguous visible run and whose query frame comes after it."""
    k = scene.intrinsics
    last_frame = scene.trajectory.frames()[-1]
    depth_sigma = corruption.depth_noise_sigma if corruption else 0.0
    rng = np.random.default_rng([scene.seed, 202])

    depth = {
        f: np.zeros((k.height, k.width), dtype=np.float64)
        for f in scene.trajectory.frames()
    }
    boxes: dict[int, dict[str, TrackBox]] = {f: {} for f in depth}
    queries = []
    for obj_id, pos in scene.objects:
        pix_by_frame = _box_visible_frames(scene, pos)
        if not pix_by_frame:
            continue
        for f, pix in pix_by_frame.items():
            u, v = float(pix[0]), float(pix[1])
            cam = scene.trajectory.poses[f].inverse().apply(pos)
            z = float(cam[2])
            if depth_sigma > 0:
                z = max(z + float(rng.normal(0.0, depth_sigma)), 1e-3)
            depth[f][int(round(v)), int(round(u))] = z
            boxes[f][obj_id] = TrackBox(
                f, u - BOX_HALF_WIDTH, v - BOX_HALF_WIDTH, u + BOX_HALF_WIDTH, v + BOX_HALF_WIDTH
            )
        run = _last_run(sorted(pix_by_frame))
        if run[-1] == last_frame:
            if len(run) < 2:
                continue  # cannot place a later query frame
            run = run[:-1]
            query_frame = last_frame
        else:
            query_frame = run[-1] + 1
        track = ResponseTrack(tuple(boxes[f][obj_id] for f in run))
        queries.append(
            VisualQuery(
                query_id=f"{scene.clip_id}_{obj_id}",
                clip_id=scene.clip_id,
                query_frame=query_frame,
                object_id=obj_id,
                track=track,
                gt_world=pos,
            )
        )

    grids = {f: DepthGrid(f, arr.astype(np.float32)) for f, arr in depth.items()}
    return Observations(queries=tuple(queries), depth_grids=grids, boxes=boxes)


# ---------------------------------------------------------------------------
# Reconstruction-model synthesis (keeps the model parser on the tested path)
# ---------------------------------------------------------------------------

def build_reconstruction_model(
    submap: PoseSet, landmarks: np.ndarray, k: Intrinsics
) -> ReconstructionModel:
    """Text/binary-serializable model for one submap: a single pinhole
    camera, the submap's world-to-camera image poses, and landmark
    observations with consistent tracks."""
    cameras = {
        1: ModelCamera(1, "PINHOLE", k.width, k.height, (k.fx, k.fy, k.cx, k.cy))
    }
    images = {}
    tracks: dict[int, list[tuple[int, int]]] = {i + 1: [] for i in range(len(landmarks))}
    observed: set[int] = set()
    for frame_id in submap.frames():
        pose = submap.poses[frame_id].to_direction(PoseDirection.WORLD_TO_CAMERA)
        image_id = frame_id + 1
        points2d = []
        for li, lm in enumerate(landmarks):
            cam = pose.apply(lm)
            if cam[2] <= 0:
                continue
            pix, _ = project(cam, k)
            if not (0 <= pix[0] < k.width and 0 <= pix[1] < k.height):
                continue
            tracks[li + 1].append((image_id, len(points2d)))
            points2d.append((float(pix[0]), float(pix[1]), li + 1))
            observed.add(li + 1)
        q = pose.rotation
        t = pose.translation
        images[image_id] = ModelImage(
            image_id,
            float(q[0]), float(q[1]), float(q[2]), float(q[3]),
            float(t[0]), float(t[1]), float(t[2]),
            1,
            f"frame_{frame_id:06d}.jpg",
            tuple(points2d),
        )
    points3d = {
        pid: ModelPoint3D(
            pid,
            tuple(float(c) for c in landmarks[pid - 1]),
            ((pid * 53) % 256, (pid * 101) % 256, (pid * 197) % 256),
            0.5,
            tuple(tracks[pid]),
        )
        for pid in sorted(observed)
    }
    return ReconstructionModel(cameras, images, points3d).validate()
