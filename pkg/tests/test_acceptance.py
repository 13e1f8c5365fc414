"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import random_pose, random_similarity
from vq3dkit import bench
from vq3dkit.cli import main
from vq3dkit.colmap_model import emit_mapper_command, read_model_binary, read_model_text
from vq3dkit.colmap_model.binary_io import (
    cameras_to_binary,
    images_to_binary,
    parse_cameras_binary,
    parse_images_binary,
    parse_points3d_binary,
    points3d_to_binary,
)
from vq3dkit.colmap_model.text_io import (
    cameras_to_text,
    images_to_text,
    parse_cameras_text,
    parse_images_text,
    parse_points3d_text,
    points3d_to_text,
)
from vq3dkit.config import PipelineConfig
from vq3dkit.errors import ParseError
from vq3dkit.evaluation import evaluate, render_report
from vq3dkit.frames import GrayImage, blur_score, write_pgm
from vq3dkit.geometry import (
    Intrinsics,
    PoseDirection,
    RigidPose,
    project,
    rotation_geodesic_angle,
    unproject,
)
from vq3dkit.localization import localize_query
from vq3dkit.registration import (
    PoseSet,
    PoseSetSource,
    RegistrationMethod,
    register_submap,
)
from vq3dkit.synth import fragment_and_corrupt, generate_scene, render_observations
from test_colmap_model import GOLDEN, GOLDEN_MODEL, random_model
from test_evaluation import _sets


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\n[acceptance] {name}: FAIL")
        raise
    else:
        print(f"\n[acceptance] {name}: PASS")


# ---------------------------------------------------------------------------

def test_oracle_closure(tmp_path):
    with criterion("oracle closure (10 seeds, zero corruption, < 30 s)"):
        t0 = time.monotonic()
        out = tmp_path / "sweep"
        assert main(["synth-bench", "--out", str(out), "--seeds", "10"]) == 0
        elapsed = time.monotonic() - t0
        rows = json.loads((out / "sweep.json").read_text())["cases"]
        assert len(rows) == 10
        for row in rows:
            assert row["qwp"] == 1.0, row
            assert row["succ"] == 1.0, row
            assert row["mean_l2"] < 1e-6, row
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_transform_recovery(rng):
    with criterion("transform recovery (rigid + Sim(3), noiseless and 1 cm noise)"):
        def make_sets(g, n, noise=0.0):
            base = {f: random_pose(rng) for f in range(n)}
            world = {}
            for f, p in base.items():
                center = g.apply(p.translation) + (
                    rng.normal(0, noise, 3) if noise else 0.0
                )
                from vq3dkit.geometry import quat_multiply
                world[f] = RigidPose(
                    quat_multiply(g.rotation, p.rotation), center,
                    PoseDirection.CAMERA_TO_WORLD,
                )
            return (
                PoseSet("sub", base, PoseSetSource.RECONSTRUCTION),
                PoseSet("world", world, PoseSetSource.WORLD_ANCHOR),
            )

        # 100 random rigid transforms, noiseless, default per-frame method
        for _ in range(100):
            g = random_similarity(rng, scale_range=(1.0, 1.0))
            s_c, s_m = make_sets(g, 10)
            t = register_submap(s_c, s_m).transform
            assert abs(t.scale - 1.0) < 1e-9
            assert rotation_geodesic_angle(t.rotation, g.rotation) < 1e-9
            assert np.linalg.norm(t.translation - g.translation) < 1e-9

        # 100 random Sim(3) with scale in [0.5, 2], noiseless least-squares
        for _ in range(100):
            g = random_similarity(rng, scale_range=(0.5, 2.0))
            s_c, s_m = make_sets(g, 10)
            t = register_submap(
                s_c, s_m, method=RegistrationMethod.LEAST_SQUARES_SIM3
            ).transform
            assert abs(t.scale - g.scale) < 1e-9
            assert rotation_geodesic_angle(t.rotation, g.rotation) < 1e-9
            assert np.linalg.norm(t.translation - g.translation) < 1e-9

        # 1 cm center noise on 20 common frames: translation within 5 sigma
        # in at least 95 of 100 trials
        sigma = 0.01
        hits = 0
        for _ in range(100):
            g = random_similarity(rng, scale_range=(1.0, 1.0))
            s_c, s_m = make_sets(g, 20, noise=sigma)
            t = register_submap(
                s_c, s_m, method=RegistrationMethod.LEAST_SQUARES_SIM3
            ).transform
            hits += np.linalg.norm(t.translation - g.translation) <= 5 * sigma
        assert hits >= 95, f"only {hits}/100 trials within 5 sigma"


def test_filtering_monotonicity(tmp_path):
    with criterion("filtering monotonicity (posed count maximal at threshold none)"):
        corruption = bench.make_corruption(6, center_noise=0.02, n_submaps=2)
        counts = []
        for i, tau in enumerate((0.002, 0.01, 0.03, 0.08, None)):
            cfg = PipelineConfig(filter_threshold=tau)
            case = bench.run_case(6, corruption, cfg, str(tmp_path / f"tau{i}"))
            counts.append(len(case.posed_frames))
            assert case.summary.succ <= case.summary.qwp
        assert counts == sorted(counts), counts
        assert counts[-1] == max(counts)


def test_table1_arithmetic():
    with criterion("published-table arithmetic ((40,23) and (175,68) of 264, < 1 s)"):
        t0 = time.monotonic()
        s = evaluate(*_sets(264, posed=40, success=23))
        text = render_report(s, "text")
        assert f"{100 * s.qwp:.2f}" == "15.15" and "15.15" in text
        assert f"{100 * s.succ:.2f}" == "8.71" and "8.71" in text
        s = evaluate(*_sets(264, posed=175, success=68))
        text = render_report(s, "text")
        assert f"{100 * s.qwp:.2f}" == "66.29" and "66.29" in text
        assert f"{100 * s.succ:.2f}" == "25.76" and "25.76" in text
        assert time.monotonic() - t0 < 1.0


def test_unprojection_correctness(rng):
    with criterion("unprojection (1e4 round trips at 1e-9; render oracle at 1e-6)"):
        k = Intrinsics(fx=481.5, fy=505.25, cx=321.0, cy=239.5, width=640, height=480)
        for _ in range(10_000):
            p = rng.uniform([0, 0], [k.width, k.height])
            d = float(rng.uniform(0.05, 80.0))
            pix, depth = project(unproject(p, d, k), k)
            assert abs(pix[0] - p[0]) < 1e-9 and abs(pix[1] - p[1]) < 1e-9
            assert abs(depth - d) < 1e-9

        # full forward-render oracle through float32 depth grids
        for seed in range(3):
            scene = generate_scene(seed, n_frames=20, n_objects=3)
            obs = render_observations(scene)
            posed = PoseSet(
                "world", dict(scene.trajectory.poses), PoseSetSource.RECONSTRUCTION
            )
            assert obs.queries
            for q in obs.queries:
                res = localize_query(q, posed, obs.depth_grids, scene.intrinsics)
                assert res.has_pose
                err = float(np.linalg.norm(res.pred_vec_world - q.gt_world))
                assert err < 1e-6, err


def test_parser_round_trip_and_fuzz(tmp_path, rng):
    with criterion("parser fixpoint (50 models), byte-exact goldens, 1e5-input fuzz"):
        # 50 randomized models, both formats
        for i in range(50):
            model = random_model(rng)
            tdir, bdir = tmp_path / f"t{i}", tmp_path / f"b{i}"
            from vq3dkit.colmap_model import write_model_binary, write_model_text
            write_model_text(model, tdir)
            write_model_binary(model, bdir)
            assert read_model_text(tdir) == model
            assert read_model_binary(bdir) == model

        # committed goldens parse to the expected model and re-serialize
        # byte-exactly
        assert read_model_text(os.path.join(GOLDEN, "model_text")) == GOLDEN_MODEL
        assert read_model_binary(os.path.join(GOLDEN, "model_binary")) == GOLDEN_MODEL
        rendered = {
            "model_text/cameras.txt": cameras_to_text(GOLDEN_MODEL.cameras).encode(),
            "model_text/images.txt": images_to_text(GOLDEN_MODEL.images).encode(),
            "model_text/points3D.txt": points3d_to_text(GOLDEN_MODEL.points3d).encode(),
            "model_binary/cameras.bin": cameras_to_binary(GOLDEN_MODEL.cameras),
            "model_binary/images.bin": images_to_binary(GOLDEN_MODEL.images),
            "model_binary/points3D.bin": points3d_to_binary(GOLDEN_MODEL.points3d),
        }
        for rel, blob in rendered.items():
            with open(os.path.join(GOLDEN, rel), "rb") as fh:
                assert fh.read() == blob, f"{rel} not byte-identical"

        # 1e5 random-byte inputs across the six parsers: ParseError only,
        # never a crash
        parsers = (
            parse_cameras_text, parse_images_text, parse_points3d_text,
            parse_cameras_binary, parse_images_binary, parse_points3d_binary,
        )
        blobs = rng.bytes(100_000 * 40)
        for i in range(100_000):
            blob = blobs[i * 40 : i * 40 + int(rng.integers(0, 40))]
            try:
                parsers[i % 6](blob)
            except ParseError:
                pass


def test_listing_flags_exact():
    with criterion("mapper flags match the published values and golden argv"):
        with open(os.path.join(GOLDEN, "mapper_argv.json")) as fh:
            want = json.load(fh)
        got = emit_mapper_command(
            "/data/clip/colmap/database.db", "/data/clip", "/data/clip/colmap/sparse"
        )
        assert got == want
        pairs = list(zip(got, got[1:]))
        for flag, value in (
            ("--Mapper.ba_global_max_num_iterations", "30"),
            ("--Mapper.ba_global_images_ratio", "1.4"),
            ("--Mapper.ba_global_max_refinement", "3"),
            ("--Mapper.ba_global_points_freq", "200000"),
        ):
            assert (flag, value) in pairs
        mapper_flags = [a for a in got if a.startswith("--Mapper.")]
        assert len(mapper_flags) == 4


def test_blur_metric(rng):
    with criterion("blur metric (constant zero, quadratic law, impulse case)"):
        assert blur_score(GrayImage(9, 7, np.full((7, 9), 0.42))) == 0.0
        px = rng.uniform(0, 1, size=(16, 16))
        base = blur_score(GrayImage(16, 16, px))
        for a in (0.1, 0.5, 0.75):
            scaled = blur_score(GrayImage(16, 16, a * px))
            assert abs(scaled - a * a * base) < 1e-9
        impulse = np.zeros((5, 5))
        impulse[2, 2] = 1.0
        assert blur_score(GrayImage(5, 5, impulse)) == pytest.approx(20.0 / 9.0, abs=1e-12)


def _tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


def test_determinism_all_verbs(tmp_path, rng):
    with criterion("determinism: every verb byte-identical on re-run, incl. --jobs 8"):
        # fixture bundle shared by register/localize/evaluate
        seed = 12
        corruption = bench.make_corruption(seed, n_submaps=2)
        scene = generate_scene(seed)
        frag = fragment_and_corrupt(scene, corruption)
        obs = render_observations(scene, corruption)
        paths = bench.write_scene_bundle(scene, frag, obs, str(tmp_path / "bundle"))
        clip = scene.clip_id

        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        for i in range(4):
            write_pgm(
                GrayImage(16, 16, rng.uniform(0, 1, size=(16, 16))),
                frames_dir / f"frame_{i:06d}.pgm",
            )
        clip_dir = tmp_path / "clip"
        clip_dir.mkdir()

        def run_all(root, jobs):
            j = ["--jobs", str(jobs)]
            assert main(["plan-sfm", str(clip_dir), "--out", f"{root}/plan"]) == 0
            assert main(["score-frames", "--images", str(frames_dir), "--out",
                         f"{root}/scores.csv", *j]) == 0
            assert main(["register", *map(str, paths["models"]),
                         "--anchor", paths["anchor"], "--clip", clip,
                         "--out-poses", f"{root}/poses.json",
                         "--out-report", f"{root}/report.json"]) == 0
            assert main(["localize", "--queries", paths["queries"],
                         "--poses", f"{root}/poses.json", "--depth", paths["depth"],
                         "--intrinsics", paths["intrinsics"],
                         "--out", f"{root}/results.json", *j]) == 0
            assert main(["evaluate", "--results", f"{root}/results.json",
                         "--queries", paths["queries"], "--format", "json",
                         "--out", f"{root}/eval.json"]) == 0
            assert main(["synth-bench", "--out", f"{root}/sweep", "--seeds", "2",
                         "--frames", "16", "--objects", "2", "--dropout", "0,0.5",
                         "--submaps", "2", *j]) == 0

        run_all(tmp_path / "run1", jobs=1)
        run_all(tmp_path / "run2", jobs=8)
        a = _tree_bytes(tmp_path / "run1")
        b = _tree_bytes(tmp_path / "run2")
        assert a.keys() == b.keys()
        for rel in a:
            assert a[rel] == b[rel], f"{rel} differs between runs"
