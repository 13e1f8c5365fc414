"""Synthetic benchmark harness: drive the full pipeline over corruption
grids, through the same files the CLI verbs exchange.

Each case writes a self-contained bundle under its work directory
(submap model directories in text format, anchor poses, queries, depth
grids, intrinsics), reads everything back, registers, localizes, and
evaluates.  With ``filter_threshold`` set, per-frame registration
residuals stand in for reprojection errors (the artifact has no live
reprojection source).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .colmap_model import extract_pose_set, read_model_text, write_model_text
from .config import PipelineConfig
from .errors import UnregistrableError
from .evaluation import EvaluationSummary, evaluate, render_csv
from .geometry import SimilarityTransform, random_unit_quat
from .localization import (
    intrinsics_from_json,
    intrinsics_to_json,
    load_depth_dir,
    localize_all,
    queries_from_json,
    queries_to_json,
    results_to_json,
    write_depth_grid,
)
from .registration import (
    PoseSet,
    PoseSetSource,
    apply_registration,
    filter_poses,
    merge_registered,
    pose_sets_from_json,
    pose_sets_to_json,
    register_submap,
    report_to_dict,
)
from .synth import (
    CorruptionSpec,
    SyntheticScene,
    build_reconstruction_model,
    fragment_and_corrupt,
    generate_scene,
    render_observations,
)


def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


@dataclass(frozen=True)
class CaseResult:
    seed: int
    corruption: CorruptionSpec
    summary: EvaluationSummary
    registration_report: dict
    posed_frames: frozenset[int]


def make_corruption(
    seed: int,
    dropout: float = 0.0,
    center_noise: float = 0.0,
    rotation_noise: float = 0.0,
    depth_noise: float = 0.0,
    n_submaps: int = 1,
    n_frames: int = 40,
    with_scale: bool = False,
) -> CorruptionSpec:
    """Corruption with one deterministic random transform per submap
    (rigid by default, scale in [0.5, 2] when with_scale)."""
    rng = np.random.default_rng([seed, 303])
    transforms = []
    for _ in range(n_submaps):
        scale = float(rng.uniform(0.5, 2.0)) if with_scale else 1.0
        transforms.append(
            SimilarityTransform(scale, random_unit_quat(rng), rng.uniform(-2.0, 2.0, size=3))
        )
    cuts = []
    if n_submaps > 1:
        step = n_frames // n_submaps
        cuts = [step * i for i in range(1, n_submaps)]
    return CorruptionSpec(
        center_noise_sigma=center_noise,
        rotation_noise_sigma=rotation_noise,
        submap_cuts=tuple(cuts),
        submap_transforms=tuple(transforms),
        pose_dropout=dropout,
        depth_noise_sigma=depth_noise,
    )


def write_scene_bundle(scene: SyntheticScene, frag, obs, out_dir: str) -> dict:
    """Serialize one case to disk; returns the paths the pipeline reads."""
    paths = {
        "models": [],
        "anchor": os.path.join(out_dir, "anchor.json"),
        "queries": os.path.join(out_dir, "queries.json"),
        "depth": os.path.join(out_dir, "depth"),
        "intrinsics": os.path.join(out_dir, "intrinsics.json"),
    }
    os.makedirs(out_dir, exist_ok=True)
    # empty submaps are still written so registration can report them
    for i, submap in enumerate(frag.submaps):
        model_dir = os.path.join(out_dir, "models", submap.system_label)
        write_model_text(
            build_reconstruction_model(submap, frag.submap_landmarks[i], scene.intrinsics),
            model_dir,
        )
        paths["models"].append(model_dir)
    with open(paths["anchor"], "w", encoding="utf-8") as fh:
        fh.write(pose_sets_to_json({scene.clip_id: frag.anchor}))
    with open(paths["queries"], "w", encoding="utf-8") as fh:
        fh.write(queries_to_json(obs.queries))
    for grid in (obs.depth_grids[f] for f in sorted(obs.depth_grids)):
        write_depth_grid(grid, paths["depth"])
    with open(paths["intrinsics"], "w", encoding="utf-8") as fh:
        fh.write(intrinsics_to_json(scene.intrinsics))
    return paths


def register_model_dirs(
    model_dirs,
    anchor: PoseSet,
    cfg: PipelineConfig,
    reproj_errors: dict[int, float] | None = None,
) -> tuple[PoseSet, dict]:
    """Register every submap directory against the anchor and merge.

    Unregistrable submaps are reported, not fatal.  Returns the merged
    world pose set (after optional reprojection filtering) and a JSON-able
    report.
    """
    registered = []
    entries = []
    for model_dir in model_dirs:
        label = os.path.basename(os.path.normpath(model_dir))
        model = read_model_text(model_dir)
        submap = extract_pose_set(model, label)
        try:
            report = register_submap(
                submap,
                anchor,
                method=cfg.registration_method,
                min_common=cfg.min_common,
                rotation_weight=cfg.rotation_weight,
            )
        except UnregistrableError as exc:
            entries.append({"submap": label, "registered": False, "reason": str(exc)})
            continue
        registered.append((report, apply_registration(report, submap)))
        entries.append(report_to_dict(report))
    merged = merge_registered(registered)
    if cfg.filter_threshold is not None:
        if reproj_errors is None:
            # registration residuals as the error proxy
            reproj_errors = {}
            for report, poses in registered:
                for f, r in report.residuals.items():
                    reproj_errors[f] = min(
                        r.translation_m, reproj_errors.get(f, float("inf"))
                    )
            reproj_errors = {f: e for f, e in reproj_errors.items() if f in merged.poses}
        merged = filter_poses(merged, reproj_errors, cfg.filter_threshold)
    report_doc = {"submaps": entries, "posed_frames": len(merged)}
    return merged, report_doc


def run_case(
    seed: int,
    corruption: CorruptionSpec,
    cfg: PipelineConfig,
    work_dir: str,
    n_frames: int = 40,
    n_objects: int = 3,
) -> CaseResult:
    """Generate, corrupt, serialize, and push one scene through the file-
    level pipeline."""
    scene = generate_scene(seed, n_frames=n_frames, n_objects=n_objects)
    frag = fragment_and_corrupt(scene, corruption)
    obs = render_observations(scene, corruption)
    paths = write_scene_bundle(scene, frag, obs, work_dir)

    anchors = pose_sets_from_json(_read_text(paths["anchor"]), PoseSetSource.WORLD_ANCHOR)
    merged, reg_report = register_model_dirs(paths["models"], anchors[scene.clip_id], cfg)

    registered_path = os.path.join(work_dir, "registered_poses.json")
    with open(registered_path, "w", encoding="utf-8") as fh:
        fh.write(pose_sets_to_json({scene.clip_id: merged}))
    with open(os.path.join(work_dir, "registration_report.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(reg_report, indent=2, sort_keys=True) + "\n")

    posed = pose_sets_from_json(_read_text(registered_path), PoseSetSource.RECONSTRUCTION)[
        scene.clip_id
    ]
    queries = queries_from_json(_read_text(paths["queries"]))
    depths = load_depth_dir(paths["depth"])
    k = intrinsics_from_json(_read_text(paths["intrinsics"]))

    results = localize_all(queries, posed, depths, k, cfg.aggregation)
    with open(os.path.join(work_dir, "results.json"), "w", encoding="utf-8") as fh:
        fh.write(results_to_json(results))
    summary = evaluate(results, queries, cfg.metrics)
    with open(os.path.join(work_dir, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(render_csv(summary))
    return CaseResult(
        seed=seed,
        corruption=corruption,
        summary=summary,
        registration_report=reg_report,
        posed_frames=frozenset(posed.poses),
    )


def case_row(case: CaseResult) -> dict:
    s = case.summary
    c = case.corruption
    return {
        "seed": case.seed,
        "pose_dropout": c.pose_dropout,
        "center_noise_sigma": c.center_noise_sigma,
        "rotation_noise_sigma": c.rotation_noise_sigma,
        "depth_noise_sigma": c.depth_noise_sigma,
        "n_submaps": len(c.submap_cuts) + 1,
        "n_queries": s.n_queries,
        "n_posed": s.n_posed,
        "qwp": s.qwp,
        "succ": s.succ,
        "succ_star": s.succ_star,
        "mean_l2": s.mean_l2,
        "mean_angle": s.mean_angle,
    }


_SWEEP_COLUMNS = [
    "seed", "pose_dropout", "center_noise_sigma", "rotation_noise_sigma",
    "depth_noise_sigma", "n_submaps", "n_queries", "n_posed", "qwp", "succ",
    "succ_star", "mean_l2", "mean_angle",
]


def sweep_to_csv(rows: list[dict]) -> str:
    lines = [",".join(_SWEEP_COLUMNS)]
    for row in rows:
        cells = []
        for col in _SWEEP_COLUMNS:
            v = row[col]
            cells.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def run_sweep(
    seeds,
    corruptions_for_seed,
    cfg: PipelineConfig,
    out_dir: str,
    n_frames: int = 40,
    n_objects: int = 3,
    pool=None,
) -> list[dict]:
    """Run the case grid and write sweep.json / sweep.csv under out_dir.

    Output order is the input order regardless of the worker pool, so
    re-runs are byte-identical.
    """
    cases = []
    for seed in seeds:
        for ci, corruption in enumerate(corruptions_for_seed(seed)):
            work = os.path.join(out_dir, f"seed_{seed:05d}", f"case_{ci:03d}")
            cases.append((seed, corruption, work))

    def _one(args):
        seed, corruption, work = args
        return run_case(seed, corruption, cfg, work, n_frames=n_frames, n_objects=n_objects)

    mapper = map if pool is None else pool.map
    rows = [case_row(case) for case in mapper(_one, cases)]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "sweep.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"cases": rows}, indent=2, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(sweep_to_csv(rows))
    return rows
