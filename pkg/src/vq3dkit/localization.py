"""Turn visual queries plus poses, depth, and detections into predicted 3D
displacement vectors.

A query's world prediction for one track frame f is
``P_f( d * K^-1 [u, v, 1]^T )`` where (u, v) is the box center in f, d the
metric depth sampled there, and P_f the camera-to-world pose.  Multi-frame
modes aggregate per-frame world predictions (component-wise mean or
median); the final answer is re-expressed in the query frame's camera
system as a displacement from the query camera center.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, MissingDataError, NoPoseError, ParseError, SchemaError
from .frames import Aggregation, ResponseTrack, TrackBox, select_track_frame
from .geometry import Intrinsics, PoseDirection, RigidPose, unproject
from .registration import PoseSet

DEPTH_GRID_MAGIC = b"DPG1"
DEPTH_GRID_SUFFIX = ".dgrid"


@dataclass(frozen=True)
class VisualQuery:
    query_id: str
    clip_id: str
    query_frame: int
    object_id: str
    track: ResponseTrack
    gt_world: np.ndarray
    crop_path: str | None = None

    def __post_init__(self):
        gt = np.asarray(self.gt_world, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(gt)):
            raise DomainError(f"query {self.query_id}: non-finite ground truth")
        ids = self.track.frame_ids()
        if ids[0] <= self.query_frame <= ids[-1]:
            raise DomainError(
                f"query {self.query_id}: query frame {self.query_frame} lies inside "
                f"the track range [{ids[0]}, {ids[-1]}]"
            )
        object.__setattr__(self, "gt_world", gt)
        self.gt_world.setflags(write=False)


@dataclass(frozen=True)
class DepthSample:
    frame_id: int
    u: float
    v: float
    value: float  # meters, positive

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0):
            raise MissingDataError(
                f"frame {self.frame_id}: no valid depth at ({self.u}, {self.v})"
            )


@dataclass(frozen=True)
class DepthGrid:
    frame_id: int
    values: np.ndarray  # (height, width) float32, <= 0 marks missing depth

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32)  # copy: no aliasing
        if v.ndim != 2 or v.size == 0:
            raise DomainError("depth grid must be a non-empty 2D array")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def sample(self, u: float, v: float) -> DepthSample:
        """Nearest-neighbor depth lookup; raises MissingDataError off-grid
        or where no depth was rendered."""
        col = int(round(u))
        row = int(round(v))
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise MissingDataError(
                f"frame {self.frame_id}: ({u}, {v}) outside the depth grid"
            )
        return DepthSample(self.frame_id, u, v, float(self.values[row, col]))


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    has_pose: bool
    pred_vec_world: np.ndarray | None = None
    pred_vec_q: np.ndarray | None = None
    gt_vec_q: np.ndarray | None = None
    used_frames: tuple[int, ...] = ()
    aggregation: Aggregation | None = None
    reason: str | None = None

    def __post_init__(self):
        if not self.has_pose and (
            self.pred_vec_world is not None or self.pred_vec_q is not None
        ):
            raise DomainError("pose-less results cannot carry predictions")


def predict_world(
    box: TrackBox, depth, k: Intrinsics, pose_world: RigidPose
) -> np.ndarray:
    """World-frame object location from one detection box.

    ``depth`` is a DepthSample or a positive scalar in meters sampled at
    the box center; ``pose_world`` must be camera-to-world (convert
    explicitly first).
    """
    pose_world.require_direction(PoseDirection.CAMERA_TO_WORLD)
    d = depth.value if isinstance(depth, DepthSample) else float(depth)
    u, v = box.center()
    return pose_world.apply(unproject((u, v), d, k))


def predict_query_vec(pred_world, query_pose_world: RigidPose) -> np.ndarray:
    """Express a world point in the query frame's camera system, i.e. the
    displacement from the query camera center."""
    query_pose_world.require_direction(PoseDirection.CAMERA_TO_WORLD)
    return query_pose_world.inverse().apply(pred_world)


def _aggregate(per_frame: np.ndarray, mode: Aggregation) -> np.ndarray:
    if mode is Aggregation.AVERAGE:
        return per_frame.mean(axis=0)
    if mode is Aggregation.MEDIAN:
        return np.median(per_frame, axis=0)
    return per_frame[-1]


def localize_query(
    query: VisualQuery,
    posed: PoseSet,
    depths: dict[int, DepthGrid],
    k: Intrinsics,
    mode: Aggregation = Aggregation.LAST,
) -> QueryResult:
    """Localize one query against world poses and depth grids.

    Never raises on per-query data gaps: a query without poses for both
    its query frame and at least one track frame reports has_pose=False,
    and one whose selected frames all lack depth keeps has_pose=True with
    empty predictions.  Both carry a reason string.
    """
    if query.query_frame not in posed:
        return QueryResult(query.query_id, False, reason="query frame has no pose")
    try:
        selection = select_track_frame(query.track, posed.poses, mode)
    except NoPoseError:
        return QueryResult(query.query_id, False, reason="no posed track frame")

    query_pose = posed.poses[query.query_frame].to_direction(PoseDirection.CAMERA_TO_WORLD)
    preds = []
    used = []
    for f in selection.frames:
        box = query.track.box_for(f)
        grid = depths.get(f)
        if grid is None:
            continue
        try:
            sample = grid.sample(*box.center())
        except MissingDataError:
            continue
        pose = posed.poses[f].to_direction(PoseDirection.CAMERA_TO_WORLD)
        preds.append(predict_world(box, sample, k, pose))
        used.append(f)
    if not preds:
        return QueryResult(
            query.query_id,
            True,
            used_frames=(),
            aggregation=mode,
            reason="no depth at any selected track frame",
        )
    pred_world = _aggregate(np.array(preds), mode)
    return QueryResult(
        query_id=query.query_id,
        has_pose=True,
        pred_vec_world=pred_world,
        pred_vec_q=predict_query_vec(pred_world, query_pose),
        gt_vec_q=predict_query_vec(query.gt_world, query_pose),
        used_frames=tuple(used),
        aggregation=mode,
    )


def localize_all(
    queries,
    posed: PoseSet,
    depths: dict[int, DepthGrid],
    k: Intrinsics,
    mode: Aggregation = Aggregation.LAST,
    pool=None,
) -> list[QueryResult]:
    """Localize queries independently; order follows the input regardless
    of the worker pool."""
    work = lambda q: localize_query(q, posed, depths, k, mode)  # noqa: E731
    if pool is None:
        return [work(q) for q in queries]
    return list(pool.map(work, queries))


# ---------------------------------------------------------------------------
# Depth-grid files: DPG1 magic, u32 width, u32 height, i64 frame_id, then
# width*height little-endian float32 samples in row-major order.
# ---------------------------------------------------------------------------

def depth_grid_to_bytes(grid: DepthGrid) -> bytes:
    header = DEPTH_GRID_MAGIC + struct.pack(
        "<IIq", grid.width, grid.height, grid.frame_id
    )
    return header + grid.values.astype("<f4").tobytes()


def depth_grid_from_bytes(data: bytes, path="<depth>") -> DepthGrid:
    if len(data) < 20 or data[:4] != DEPTH_GRID_MAGIC:
        raise ParseError("not a DPG1 depth grid", path=path)
    width, height, frame_id = struct.unpack_from("<IIq", data, 4)
    n = width * height
    if n == 0:
        raise ParseError(f"bad dimensions {width}x{height}", path=path, offset=4)
    if len(data) != 20 + 4 * n:
        raise ParseError(
            f"raster holds {len(data) - 20} bytes, expected {4 * n}", path=path, offset=20
        )
    values = np.frombuffer(data, dtype="<f4", count=n, offset=20).reshape(height, width)
    return DepthGrid(frame_id, values)


def write_depth_grid(grid: DepthGrid, dir_path) -> str:
    os.makedirs(dir_path, exist_ok=True)
    path = os.path.join(dir_path, f"depth_{grid.frame_id:06d}{DEPTH_GRID_SUFFIX}")
    with open(path, "wb") as fh:
        fh.write(depth_grid_to_bytes(grid))
    return path


def read_depth_grid(path) -> DepthGrid:
    with open(path, "rb") as fh:
        return depth_grid_from_bytes(fh.read(), path=path)


def load_depth_dir(dir_path) -> dict[int, DepthGrid]:
    """Index every *.dgrid file under a directory by its header frame id."""
    grids: dict[int, DepthGrid] = {}
    for name in sorted(os.listdir(dir_path)):
        if not name.endswith(DEPTH_GRID_SUFFIX):
            continue
        grid = read_depth_grid(os.path.join(dir_path, name))
        grids[grid.frame_id] = grid
    return grids


# ---------------------------------------------------------------------------
# Query and result JSON
# ---------------------------------------------------------------------------

def _vec(x) -> list[float] | None:
    return None if x is None else [float(v) for v in x]


def query_to_dict(q: VisualQuery) -> dict:
    d = {
        "query_id": q.query_id,
        "clip_id": q.clip_id,
        "query_frame": q.query_frame,
        "object_id": q.object_id,
        "track": [
            {"frame_id": b.frame_id, "box": [b.x_min, b.y_min, b.x_max, b.y_max]}
            for b in q.track.boxes
        ],
        "gt_world": _vec(q.gt_world),
    }
    if q.crop_path is not None:
        d["crop_path"] = q.crop_path
    return d


def query_from_dict(d: dict) -> VisualQuery:
    try:
        boxes = tuple(
            TrackBox(int(e["frame_id"]), *(float(c) for c in e["box"]))
            for e in d["track"]
        )
        return VisualQuery(
            query_id=str(d["query_id"]),
            clip_id=str(d["clip_id"]),
            query_frame=int(d["query_frame"]),
            object_id=str(d["object_id"]),
            track=ResponseTrack(boxes),
            gt_world=np.array([float(v) for v in d["gt_world"]]),
            crop_path=d.get("crop_path"),
        )
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise SchemaError(f"bad query record: {exc}") from None


def queries_to_json(queries) -> str:
    return json.dumps([query_to_dict(q) for q in queries], indent=2, sort_keys=True) + "\n"


def queries_from_json(text: str) -> list[VisualQuery]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"query file is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise SchemaError("query file must be a JSON list")
    return [query_from_dict(d) for d in doc]


def result_to_dict(r: QueryResult) -> dict:
    return {
        "query_id": r.query_id,
        "has_pose": r.has_pose,
        "pred_vec_world": _vec(r.pred_vec_world),
        "pred_vec_q": _vec(r.pred_vec_q),
        "gt_vec_q": _vec(r.gt_vec_q),
        "used_frames": list(r.used_frames),
        "aggregation": r.aggregation.value if r.aggregation else None,
        "reason": r.reason,
    }


def result_from_dict(d: dict) -> QueryResult:
    try:
        arr = lambda key: None if d.get(key) is None else np.array(d[key], dtype=np.float64)  # noqa: E731
        return QueryResult(
            query_id=str(d["query_id"]),
            has_pose=bool(d["has_pose"]),
            pred_vec_world=arr("pred_vec_world"),
            pred_vec_q=arr("pred_vec_q"),
            gt_vec_q=arr("gt_vec_q"),
            used_frames=tuple(int(f) for f in d.get("used_frames", ())),
            aggregation=Aggregation(d["aggregation"]) if d.get("aggregation") else None,
            reason=d.get("reason"),
        )
    except (KeyError, TypeError, ValueError, DomainError) as exc:
        raise SchemaError(f"bad result record: {exc}") from None


def results_to_json(results) -> str:
    return json.dumps([result_to_dict(r) for r in results], indent=2, sort_keys=True) + "\n"


def results_from_json(text: str) -> list[QueryResult]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"results file is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise SchemaError("results file must be a JSON list")
    return [result_from_dict(d) for d in doc]


def intrinsics_to_json(k: Intrinsics) -> str:
    doc = {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def intrinsics_from_json(text: str) -> Intrinsics:
    try:
        doc = json.loads(text)
        return Intrinsics(
            fx=float(doc["fx"]), fy=float(doc["fy"]),
            cx=float(doc["cx"]), cy=float(doc["cy"]),
            width=int(doc["width"]), height=int(doc["height"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, DomainError) as exc:
        raise SchemaError(f"bad intrinsics file: {exc}") from None
