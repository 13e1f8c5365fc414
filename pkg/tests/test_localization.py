import numpy as np
import pytest

from conftest import random_pose, random_similarity
from vq3dkit.errors import (
    DirectionError,
    DomainError,
    MissingDataError,
    ParseError,
    SchemaError,
)
from vq3dkit.frames import Aggregation, ResponseTrack, TrackBox
from vq3dkit.geometry import (
    Intrinsics,
    PoseDirection,
    RigidPose,
    project,
    quat_multiply,
)
from vq3dkit.localization import (
    DepthGrid,
    QueryResult,
    VisualQuery,
    depth_grid_from_bytes,
    depth_grid_to_bytes,
    intrinsics_from_json,
    intrinsics_to_json,
    load_depth_dir,
    localize_query,
    predict_query_vec,
    predict_world,
    queries_from_json,
    queries_to_json,
    read_depth_grid,
    result_from_dict,
    results_from_json,
    results_to_json,
    write_depth_grid,
)
from vq3dkit.registration import PoseSet, PoseSetSource

K = Intrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)
IDENTITY = RigidPose.identity()


def _box_at(frame, u, v, half=5.0):
    return TrackBox(frame, u - half, v - half, u + half, v + half)


def _grid(frame, value, u=50, v=50):
    arr = np.zeros((K.height, K.width), dtype=np.float32)
    arr[v, u] = value
    return DepthGrid(frame, arr)


def _world_posed(poses):
    return PoseSet("world", poses, PoseSetSource.RECONSTRUCTION)


# ---------------------------------------------------------------------------
# predict_world / predict_query_vec
# ---------------------------------------------------------------------------

def test_predict_world_principal_point_identity_pose():
    got = predict_world(_box_at(0, 50, 50), 3.0, K, IDENTITY)
    np.testing.assert_allclose(got, [0, 0, 3])


def test_predict_world_translated_pose():
    pose = RigidPose(np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0]),
                     PoseDirection.CAMERA_TO_WORLD)
    np.testing.assert_allclose(predict_world(_box_at(0, 50, 50), 3.0, K, pose), [1, 0, 3])


def test_predict_world_requires_camera_to_world(rng):
    w2c = random_pose(rng, PoseDirection.WORLD_TO_CAMERA)
    with pytest.raises(DirectionError):
        predict_world(_box_at(0, 50, 50), 3.0, K, w2c)


def test_predict_world_forward_render_oracle(rng):
    """Place a point, render its pixel and depth under a known pose, and
    the prediction must come back to the point."""
    for _ in range(100):
        pose = random_pose(rng)
        cam = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.5, 8)])
        point = pose.apply(cam)
        pix, depth = project(cam, K)
        box = _box_at(0, float(pix[0]), float(pix[1]))
        np.testing.assert_allclose(predict_world(box, depth, K, pose), point, atol=1e-9)


def test_query_vec_zero_at_camera_center(rng):
    pose = random_pose(rng)
    np.testing.assert_allclose(
        predict_query_vec(pose.camera_center(), pose), np.zeros(3), atol=1e-9
    )


def test_query_vec_identity_pose_passthrough():
    v = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(predict_query_vec(v, IDENTITY), v)


def test_query_vec_hand_constructed(rng):
    for _ in range(50):
        pose = random_pose(rng)
        cam_vec = rng.uniform(-3, 3, size=3)
        world = pose.apply(cam_vec)
        np.testing.assert_allclose(predict_query_vec(world, pose), cam_vec, atol=1e-9)


# ---------------------------------------------------------------------------
# localize_query
# ---------------------------------------------------------------------------

def _simple_query(track_frames=(0, 1, 2), query_frame=5):
    track = ResponseTrack(tuple(_box_at(f, 50, 50) for f in track_frames))
    return VisualQuery("q0", "clip", query_frame, "obj", track, np.array([0.0, 0.0, 2.0]))


def test_localize_no_poses_at_all():
    res = localize_query(_simple_query(), _world_posed({}), {}, K)
    assert res.has_pose is False
    assert res.pred_vec_world is None and res.pred_vec_q is None
    assert res.reason


def test_localize_query_frame_unposed():
    posed = _world_posed({0: IDENTITY, 1: IDENTITY})
    res = localize_query(_simple_query(), posed, {0: _grid(0, 2.0)}, K)
    assert res.has_pose is False


def test_localize_track_unposed():
    posed = _world_posed({5: IDENTITY})
    res = localize_query(_simple_query(), posed, {}, K)
    assert res.has_pose is False


def test_localize_aggregation_modes():
    posed = _world_posed({f: IDENTITY for f in (0, 1, 2, 5)})
    depths = {0: _grid(0, 1.0), 1: _grid(1, 2.0), 2: _grid(2, 9.0)}
    q = _simple_query()
    last = localize_query(q, posed, depths, K, Aggregation.LAST)
    avg = localize_query(q, posed, depths, K, Aggregation.AVERAGE)
    med = localize_query(q, posed, depths, K, Aggregation.MEDIAN)
    np.testing.assert_allclose(last.pred_vec_world, [0, 0, 9])
    np.testing.assert_allclose(avg.pred_vec_world, [0, 0, 4])
    np.testing.assert_allclose(med.pred_vec_world, [0, 0, 2])
    assert last.used_frames == (2,)
    assert avg.used_frames == (0, 1, 2)


def test_localize_single_posed_frame_mode_degeneracy():
    posed = _world_posed({1: IDENTITY, 5: IDENTITY})
    depths = {1: _grid(1, 4.0)}
    q = _simple_query()
    results = [
        localize_query(q, posed, depths, K, mode) for mode in Aggregation
    ]
    for res in results[1:]:
        np.testing.assert_array_equal(res.pred_vec_world, results[0].pred_vec_world)
        np.testing.assert_array_equal(res.pred_vec_q, results[0].pred_vec_q)


def test_localize_missing_depth_keeps_pose_flag():
    posed = _world_posed({f: IDENTITY for f in (0, 1, 2, 5)})
    res = localize_query(_simple_query(), posed, {}, K)
    assert res.has_pose is True
    assert res.pred_vec_world is None
    assert "depth" in res.reason


def test_localize_gt_vec_q_recorded():
    posed = _world_posed({f: IDENTITY for f in (0, 1, 2, 5)})
    res = localize_query(_simple_query(), posed, {2: _grid(2, 2.0)}, K)
    np.testing.assert_allclose(res.gt_vec_q, [0, 0, 2.0])


def test_localize_median_permutation_invariant(rng):
    # median of per-frame predictions does not depend on which frame carries
    # which depth value
    posed = _world_posed({f: IDENTITY for f in (0, 1, 2, 5)})
    values = [1.0, 5.0, 3.0]
    seen = set()
    for order in ((0, 1, 2), (2, 0, 1), (1, 2, 0)):
        depths = {f: _grid(f, values[order[f]]) for f in (0, 1, 2)}
        res = localize_query(_simple_query(), posed, depths, K, Aggregation.MEDIAN)
        seen.add(tuple(res.pred_vec_world))
    assert seen == {(0.0, 0.0, 3.0)}


def test_localize_last_ignores_non_maximal_frames():
    posed = _world_posed({f: IDENTITY for f in (0, 1, 2, 5)})
    base = {0: _grid(0, 1.0), 1: _grid(1, 5.0), 2: _grid(2, 7.0)}
    changed = {0: _grid(0, 4.4), 1: _grid(1, 0.2), 2: _grid(2, 7.0)}
    a = localize_query(_simple_query(), posed, base, K, Aggregation.LAST)
    b = localize_query(_simple_query(), posed, changed, K, Aggregation.LAST)
    np.testing.assert_array_equal(a.pred_vec_world, b.pred_vec_world)
    assert a.used_frames == (2,)


def test_world_frame_equivariance(rng):
    """A rigid change of world coordinates moves pred_vec_world through the
    transform and leaves pred_vec_q untouched."""
    g = random_similarity(rng, scale_range=(1.0, 1.0))
    obj = np.array([0.2, -0.1, 0.4])
    # draw poses that actually see the object (rejection sampling)
    poses = {}
    for f in (0, 1, 2, 5):
        while True:
            cand = random_pose(rng)
            cam = cand.inverse().apply(obj)
            if cam[2] > 0.3:
                pix, _ = project(cam, K)
                if 5 < pix[0] < K.width - 5 and 5 < pix[1] < K.height - 5:
                    poses[f] = cand
                    break
    depths = {}
    track_boxes = []
    for f in (0, 1, 2):
        pix, depth = project(poses[f].inverse().apply(obj), K)
        u, v = float(pix[0]), float(pix[1])
        arr = np.zeros((K.height, K.width), dtype=np.float64)
        arr[int(round(v)), int(round(u))] = depth
        depths[f] = DepthGrid(f, arr.astype(np.float32))
        track_boxes.append(_box_at(f, u, v, half=2.0))
    query = VisualQuery("q", "c", 5, "o", ResponseTrack(tuple(track_boxes)), obj)

    base = localize_query(query, _world_posed(poses), depths, K, Aggregation.AVERAGE)

    mapped_poses = {
        f: RigidPose(quat_multiply(g.rotation, p.rotation), g.apply(p.translation),
                     PoseDirection.CAMERA_TO_WORLD)
        for f, p in poses.items()
    }
    mapped_query = VisualQuery("q", "c", 5, "o", query.track, g.apply(obj))
    mapped = localize_query(mapped_query, _world_posed(mapped_poses), depths, K,
                            Aggregation.AVERAGE)
    assert base.has_pose and mapped.has_pose
    np.testing.assert_allclose(mapped.pred_vec_world, g.apply(base.pred_vec_world),
                               atol=1e-9)
    np.testing.assert_allclose(mapped.pred_vec_q, base.pred_vec_q, atol=1e-9)
    np.testing.assert_allclose(mapped.gt_vec_q, base.gt_vec_q, atol=1e-9)


# ---------------------------------------------------------------------------
# depth grids
# ---------------------------------------------------------------------------

def test_depth_grid_bytes_round_trip(rng):
    arr = rng.uniform(0.1, 9.0, size=(6, 4)).astype(np.float32)
    grid = DepthGrid(42, arr)
    back = depth_grid_from_bytes(depth_grid_to_bytes(grid))
    assert back.frame_id == 42
    np.testing.assert_array_equal(back.values, arr)


def test_depth_grid_file_round_trip(tmp_path, rng):
    grid = DepthGrid(7, rng.uniform(0.1, 9.0, size=(5, 5)).astype(np.float32))
    path = write_depth_grid(grid, tmp_path)
    assert path.endswith("depth_000007.dgrid")
    back = read_depth_grid(path)
    np.testing.assert_array_equal(back.values, grid.values)
    index = load_depth_dir(tmp_path)
    assert sorted(index) == [7]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b[:10],                       # truncated
        lambda b: b"XXXX" + b[4:],              # bad magic
        lambda b: b + b"\x00\x00\x00\x00",      # trailing bytes
    ],
)
def test_depth_grid_parse_errors(mutate, rng):
    blob = depth_grid_to_bytes(DepthGrid(1, rng.uniform(0.1, 1, (3, 3)).astype(np.float32)))
    with pytest.raises(ParseError):
        depth_grid_from_bytes(mutate(blob))


def test_depth_sampling_nearest_and_missing():
    arr = np.zeros((4, 4), dtype=np.float32)
    arr[2, 1] = 3.5
    grid = DepthGrid(0, arr)
    assert grid.sample(1.2, 2.4).value == pytest.approx(3.5)
    with pytest.raises(MissingDataError):
        grid.sample(0.0, 0.0)  # zero depth = missing
    with pytest.raises(MissingDataError):
        grid.sample(99.0, 0.0)  # off-grid


# ---------------------------------------------------------------------------
# JSON schemas
# ---------------------------------------------------------------------------

def test_query_json_round_trip():
    q = _simple_query()
    back = queries_from_json(queries_to_json([q]))
    assert len(back) == 1
    b = back[0]
    assert (b.query_id, b.clip_id, b.query_frame, b.object_id) == ("q0", "clip", 5, "obj")
    assert b.track.frame_ids() == [0, 1, 2]
    np.testing.assert_array_equal(b.gt_world, q.gt_world)


def test_query_invariant_rejects_query_inside_track():
    with pytest.raises(DomainError):
        _simple_query(track_frames=(0, 1, 2), query_frame=1)


@pytest.mark.parametrize(
    "text",
    [
        "{}",
        '[{"query_id": "a"}]',
        '[{"query_id": "a", "clip_id": "c", "query_frame": 9, "object_id": "o", '
        '"track": [], "gt_world": [0, 0, 0]}]',
    ],
)
def test_query_json_schema_errors(text):
    with pytest.raises(SchemaError):
        queries_from_json(text)


def test_results_json_round_trip(rng):
    results = [
        QueryResult("a", False, reason="query frame has no pose"),
        QueryResult(
            "b", True,
            pred_vec_world=np.array([1.0, 2.0, 3.0]),
            pred_vec_q=np.array([0.5, 0.25, 2.0]),
            gt_vec_q=np.array([0.5, 0.25, 2.0]),
            used_frames=(3, 4),
            aggregation=Aggregation.AVERAGE,
        ),
    ]
    back = results_from_json(results_to_json(results))
    assert back[0].has_pose is False and back[0].pred_vec_world is None
    np.testing.assert_array_equal(back[1].pred_vec_world, results[1].pred_vec_world)
    assert back[1].aggregation is Aggregation.AVERAGE
    assert back[1].used_frames == (3, 4)


def test_result_invariant_no_pose_no_predictions():
    with pytest.raises(SchemaError):
        result_from_dict(
            {"query_id": "x", "has_pose": False, "pred_vec_world": [1, 2, 3]}
        )


def test_intrinsics_json_round_trip():
    back = intrinsics_from_json(intrinsics_to_json(K))
    assert back == K
    with pytest.raises(SchemaError):
        intrinsics_from_json('{"fx": 1}')
