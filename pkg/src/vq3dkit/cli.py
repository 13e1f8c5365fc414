"""Command-line entry point.

Verbs: plan-sfm, score-frames, register, localize, evaluate, synth-bench.
All verbs share one JSON config (--config); individual flags override
config keys.  Exit codes: 0 success (including partially registered
clips), 1 usage or config error, 2 data or schema error.  Machine output
goes to stdout, diagnostics to stderr; identical inputs and seed produce
byte-identical outputs for any --jobs value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import bench
from .colmap_model import (
    emit_pipeline_plan,
    extract_pose_set,
    plan_to_json,
    plan_to_script,
    read_model,
)
from .config import ConfigError, PipelineConfig, load_config
from .errors import FrameNameError, SchemaError, UnregistrableError, VQ3DError
from .evaluation import MetricSpace, MetricThresholds, evaluate, render_report
from .frames import (
    FRAME_FILE_PATTERN,
    Aggregation,
    blur_score,
    read_pgm,
    scores_to_csv,
    select_sharp_window,
)
from .localization import (
    intrinsics_from_json,
    load_depth_dir,
    localize_all,
    queries_from_json,
    results_from_json,
    results_to_json,
)
from .registration import (
    PoseSetSource,
    RegistrationMethod,
    apply_registration,
    filter_poses,
    merge_registered,
    pose_sets_from_json,
    pose_sets_to_json,
    register_submap,
    report_to_dict,
)

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline config file")
    p.add_argument("--jobs", type=int, default=None, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vq3dkit", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("plan-sfm", parents=[], help="emit the reconstruction command plan")
    _common_flags(p)
    p.add_argument("clip_dir")
    p.add_argument("--out", help="directory for plan.sh/plan.json (default: clip dir)")
    p.add_argument("--emit", choices=["files", "json"], default="files",
                   help="'json' prints the argv array to stdout instead of writing files")

    p = sub.add_parser("score-frames", help="blur-score PGM frames and pick a sharp window")
    _common_flags(p)
    p.add_argument("--images", required=True, help="directory of frame_NNNNNN.pgm files")
    p.add_argument("--out", required=True, help="output CSV of frame_id,score")
    p.add_argument("--window-len", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("register", help="register submap model dirs into the world system")
    _common_flags(p)
    p.add_argument("model_dirs", nargs="+")
    p.add_argument("--anchor", required=True, help="anchor/world pose JSON")
    p.add_argument("--clip", required=True, help="clip id inside the anchor file")
    p.add_argument("--out-poses", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--method", choices=[m.value for m in RegistrationMethod], default=None)
    p.add_argument("--rotation-weight", type=float, default=None)
    p.add_argument("--min-common", type=int, default=None)
    p.add_argument("--filter-threshold", default=None,
                   help="reprojection-error cutoff in px, or 'none' to disable")
    p.add_argument("--reproj-errors", default=None,
                   help="JSON map frame_id -> reprojection error used by the filter")

    p = sub.add_parser("localize", help="predict displacement vectors for queries")
    _common_flags(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--depth", required=True, help="directory of .dgrid files")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregation", choices=[a.value for a in Aggregation], default=None)

    p = sub.add_parser("evaluate", help="compute QwP/Succ/Succ*/L2/angle for results")
    _common_flags(p)
    p.add_argument("--results", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--l2-max", type=float, default=None)
    p.add_argument("--angle-max", type=float, default=None)
    p.add_argument("--space", choices=[s.value for s in MetricSpace], default=None)

    p = sub.add_parser("synth-bench", help="synthetic end-to-end sweep with ground truth")
    _common_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=1, help="number of seeds, starting at --seed")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--objects", type=int, default=3)
    p.add_argument("--submaps", type=int, default=1)
    p.add_argument("--dropout", default="0", help="comma-separated pose-dropout grid")
    p.add_argument("--center-noise", default="0", help="comma-separated sigma grid (m)")
    p.add_argument("--rotation-noise", default="0", help="comma-separated sigma grid (rad)")
    p.add_argument("--depth-noise", default="0", help="comma-separated sigma grid (m)")
    p.add_argument("--with-scale", action="store_true",
                   help="draw submap scales in [0.5, 2] (pair with least_squares_sim3)")
    return parser


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = cfg.replace(workers=args.jobs)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _pool(cfg: PipelineConfig):
    return ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None


def _read_text(path) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None


def _write_text(path, text: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _floats(csv: str) -> list[float]:
    try:
        return [float(tok) for tok in csv.split(",")]
    except ValueError:
        raise ConfigError(f"bad numeric list {csv!r}") from None


def cmd_plan_sfm(args, cfg: PipelineConfig) -> int:
    if not os.path.isdir(args.clip_dir):
        raise SchemaError(f"clip directory {args.clip_dir!r} does not exist")
    plan = emit_pipeline_plan(args.clip_dir)
    if args.emit == "json":
        sys.stdout.write(plan_to_json(plan))
        return 0
    out = args.out or args.clip_dir
    _write_text(os.path.join(out, "plan.sh"), plan_to_script(plan))
    _write_text(os.path.join(out, "plan.json"), plan_to_json(plan))
    print(f"wrote plan.sh and plan.json to {out}", file=sys.stderr)
    return 0


def cmd_score_frames(args, cfg: PipelineConfig) -> int:
    if not os.path.isdir(args.images):
        raise SchemaError(f"image directory {args.images!r} does not exist")
    window_len = args.window_len if args.window_len is not None else cfg.blur_window_len
    threshold = args.threshold if args.threshold is not None else cfg.blur_threshold
    frame_files = []
    bad = []
    for name in sorted(os.listdir(args.images)):
        if not name.endswith(".pgm"):
            continue
        m = FRAME_FILE_PATTERN.search(name)
        if m is None:
            bad.append(name)
        else:
            frame_files.append((int(m.group(1)), os.path.join(args.images, name)))
    if bad:
        raise FrameNameError(bad, FRAME_FILE_PATTERN.pattern)
    if not frame_files:
        raise SchemaError(f"no frame_NNNNNN.pgm files under {args.images!r}")
    frame_files.sort()

    def _score(item):
        frame_id, path = item
        return frame_id, blur_score(read_pgm(path))

    pool = _pool(cfg)
    mapper = pool.map if pool else map
    scores = dict(mapper(_score, frame_files))
    _write_text(args.out, scores_to_csv(scores))
    ordered = [scores[f] for f, _ in frame_files]
    window = select_sharp_window(ordered, min(window_len, len(ordered)), threshold)
    if window is None:
        print("no window clears the threshold", file=sys.stderr)
    else:
        lo, hi = frame_files[window[0]][0], frame_files[window[1]][0]
        print(f"sharpest window: frames {lo}..{hi}", file=sys.stderr)
    return 0


def cmd_register(args, cfg: PipelineConfig) -> int:
    if args.method:
        cfg = cfg.replace(registration_method=RegistrationMethod(args.method))
    if args.rotation_weight is not None:
        cfg = cfg.replace(rotation_weight=args.rotation_weight)
    if args.min_common is not None:
        cfg = cfg.replace(min_common=args.min_common)
    if args.filter_threshold is not None:
        cfg = cfg.replace(
            filter_threshold=None if args.filter_threshold.lower() == "none"
            else float(args.filter_threshold)
        )
    anchors = pose_sets_from_json(_read_text(args.anchor), PoseSetSource.WORLD_ANCHOR)
    if args.clip not in anchors:
        raise SchemaError(f"clip {args.clip!r} not present in {args.anchor!r}")
    reproj = None
    if args.reproj_errors:
        doc = json.loads(_read_text(args.reproj_errors))
        reproj = {int(k): float(v) for k, v in doc.items()}
    if cfg.filter_threshold is not None and reproj is None:
        raise ConfigError("--filter-threshold needs --reproj-errors (or 'none')")

    registered = []
    entries = []
    for model_dir in args.model_dirs:
        label = os.path.basename(os.path.normpath(model_dir))
        submap = extract_pose_set(read_model(model_dir), label)
        try:
            report = register_submap(
                submap, anchors[args.clip],
                method=cfg.registration_method,
                min_common=cfg.min_common,
                rotation_weight=cfg.rotation_weight,
            )
        except UnregistrableError as exc:
            entries.append({"submap": label, "registered": False, "reason": str(exc)})
            print(f"submap {label}: unregistrable ({exc})", file=sys.stderr)
            continue
        registered.append((report, apply_registration(report, submap)))
        entries.append(report_to_dict(report))
    merged = merge_registered(registered)
    if cfg.filter_threshold is not None:
        merged = filter_poses(merged, {f: e for f, e in reproj.items() if f in merged.poses},
                              cfg.filter_threshold)
    _write_text(args.out_poses, pose_sets_to_json({args.clip: merged}))
    _write_text(
        args.out_report,
        json.dumps({"submaps": entries, "posed_frames": len(merged)},
                   indent=2, sort_keys=True) + "\n",
    )
    print(f"{len(merged)} posed frames across {len(registered)} registered submaps",
          file=sys.stderr)
    return 0


def cmd_localize(args, cfg: PipelineConfig) -> int:
    if args.aggregation:
        cfg = cfg.replace(aggregation=Aggregation(args.aggregation))
    queries = queries_from_json(_read_text(args.queries))
    pose_sets = pose_sets_from_json(_read_text(args.poses), PoseSetSource.RECONSTRUCTION)
    k = intrinsics_from_json(_read_text(args.intrinsics))
    if not os.path.isdir(args.depth):
        raise SchemaError(f"depth directory {args.depth!r} does not exist")

    results = []
    pool = _pool(cfg)
    for clip in sorted({q.clip_id for q in queries}):
        clip_queries = [q for q in queries if q.clip_id == clip]
        if clip not in pose_sets:
            raise SchemaError(f"clip {clip!r} missing from pose file {args.poses!r}")
        clip_depth = os.path.join(args.depth, clip)
        depths = load_depth_dir(clip_depth if os.path.isdir(clip_depth) else args.depth)
        results += localize_all(clip_queries, pose_sets[clip], depths, k,
                                cfg.aggregation, pool=pool)
    order = {q.query_id: i for i, q in enumerate(queries)}
    results.sort(key=lambda r: order[r.query_id])
    _write_text(args.out, results_to_json(results))
    n_posed = sum(r.has_pose for r in results)
    print(f"localized {len(results)} queries ({n_posed} with pose)", file=sys.stderr)
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    thresholds = cfg.metrics
    if args.l2_max is not None:
        thresholds = MetricThresholds(args.l2_max, thresholds.angle_max, thresholds.space)
    if args.angle_max is not None:
        thresholds = MetricThresholds(thresholds.l2_max, args.angle_max, thresholds.space)
    if args.space:
        thresholds = MetricThresholds(thresholds.l2_max, thresholds.angle_max,
                                      MetricSpace(args.space))
    results = results_from_json(_read_text(args.results))
    queries = queries_from_json(_read_text(args.queries))
    summary = evaluate(results, queries, thresholds)
    report = render_report(summary, args.format)
    if args.out:
        _write_text(args.out, report)
    else:
        sys.stdout.write(report)
    return 0


def cmd_synth_bench(args, cfg: PipelineConfig) -> int:
    dropouts = _floats(args.dropout)
    center_noises = _floats(args.center_noise)
    rotation_noises = _floats(args.rotation_noise)
    depth_noises = _floats(args.depth_noise)
    seeds = list(range(cfg.seed, cfg.seed + args.seeds))

    def corruptions_for_seed(seed: int):
        out = []
        for dropout in dropouts:
            for center in center_noises:
                for rot in rotation_noises:
                    for depth in depth_noises:
                        out.append(
                            bench.make_corruption(
                                seed,
                                dropout=dropout,
                                center_noise=center,
                                rotation_noise=rot,
                                depth_noise=depth,
                                n_submaps=args.submaps,
                                n_frames=args.frames,
                                with_scale=args.with_scale,
                            )
                        )
        return out

    rows = bench.run_sweep(
        seeds, corruptions_for_seed, cfg, args.out,
        n_frames=args.frames, n_objects=args.objects, pool=_pool(cfg),
    )
    print(f"{len(rows)} cases -> {os.path.join(args.out, 'sweep.csv')}", file=sys.stderr)
    return 0


_COMMANDS = {
    "plan-sfm": cmd_plan_sfm,
    "score-frames": cmd_score_frames,
    "register": cmd_register,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "synth-bench": cmd_synth_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args)
        return _COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"vq3dkit: config error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except VQ3DError as exc:
        print(f"vq3dkit: error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"vq3dkit: error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
