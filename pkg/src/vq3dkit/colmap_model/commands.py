"""Emit the external sparse-reconstruction commands for a video clip.

The tool itself runs out of process; this module only builds the exact
argument vectors (feature extraction, sequential matching, mapper with the
tuned bundle-adjustment flags) and serializes them as a POSIX shell script
or a JSON array-of-argv.
"""

from __future__ import annotations

import json
import os
import shlex

from ..errors import DomainError

# mapper bundle-adjustment flags, in emission order
MAPPER_FLAGS = (
    ("--Mapper.ba_global_max_num_iterations", "30"),
    ("--Mapper.ba_global_images_ratio", "1.4"),
    ("--Mapper.ba_global_max_refinement", "3"),
    ("--Mapper.ba_global_points_freq", "200000"),
)


def emit_mapper_command(db_path: str, image_path: str, output_path: str) -> list[str]:
    """Argument vector for the mapper step.

    Contains, in order: the mapper invocation, the four tuned flag/value
    pairs, then the three path arguments.  No other flags are added.
    """
    for label, p in (("db_path", db_path), ("image_path", image_path), ("output_path", output_path)):
        if not p:
            raise DomainError(f"{label} must be non-empty")
    argv = ["colmap", "mapper"]
    for flag, value in MAPPER_FLAGS:
        argv += [flag, value]
    argv += [
        "--database_path", str(db_path),
        "--image_path", str(image_path),
        "--output_path", str(output_path),
    ]
    return argv


def default_paths(clip_dir: str) -> tuple[str, str, str]:
    """(database, image dir, sparse output dir) convention under a clip."""
    clip_dir = str(clip_dir)
    workspace = os.path.join(clip_dir, "colmap")
    return os.path.join(workspace, "database.db"), clip_dir, os.path.join(workspace, "sparse")


def emit_pipeline_plan(clip_dir: str) -> list[list[str]]:
    """Ordered argument vectors: feature extraction, sequential matching, mapper.

    Extraction and matching run with tool defaults (SIFT features, the
    sequential matcher for consecutive video frames); only the mapper step
    carries tuned flags.
    """
    if not clip_dir:
        raise DomainError("clip_dir must be non-empty")
    db_path, image_path, output_path = default_paths(clip_dir)
    return [
        ["colmap", "feature_extractor", "--database_path", db_path, "--image_path", image_path],
        ["colmap", "sequential_matcher", "--database_path", db_path],
        emit_mapper_command(db_path, image_path, output_path),
    ]


def plan_to_script(plan: list[list[str]], output_path: str | None = None) -> str:
    """Render a plan as a deterministic, shell-safe POSIX script."""
    lines = ["#!/bin/sh", "set -e"]
    if output_path is None and plan and plan[-1][:2] == ["colmap", "mapper"]:
        output_path = plan[-1][-1]
    if output_path:
        lines.append("mkdir -p " + shlex.quote(str(output_path)))
    for argv in plan:
        lines.append(" ".join(shlex.quote(a) for a in argv))
    return "\n".join(lines) + "\n"


def plan_to_json(plan: list[list[str]]) -> str:
    return json.dumps(plan, indent=2) + "\n"
