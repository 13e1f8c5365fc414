"""Sparse reconstruction model I/O (text and binary), pose extraction, and
external-tool command emission."""

import os

from ..errors import IoError
from .binary_io import CAMERAS_BIN, read_model_binary, write_model_binary
from .commands import (
    MAPPER_FLAGS,
    default_paths,
    emit_mapper_command,
    emit_pipeline_plan,
    plan_to_json,
    plan_to_script,
)
from .poses import DEFAULT_FRAME_PATTERN, extract_pose_set
from .text_io import CAMERAS_TEXT, read_model_text, write_model_text
from .types import (
    CAMERA_MODELS,
    ModelCamera,
    ModelImage,
    ModelPoint3D,
    ReconstructionModel,
)

__all__ = [
    "CAMERA_MODELS",
    "ModelCamera",
    "ModelImage",
    "ModelPoint3D",
    "ReconstructionModel",
    "read_model_text",
    "write_model_text",
    "read_model_binary",
    "write_model_binary",
    "read_model",
    "extract_pose_set",
    "DEFAULT_FRAME_PATTERN",
    "emit_mapper_command",
    "emit_pipeline_plan",
    "plan_to_script",
    "plan_to_json",
    "default_paths",
    "MAPPER_FLAGS",
]


def read_model(dir_path) -> ReconstructionModel:
    """Read a model directory, auto-detecting text vs binary files."""
    if os.path.exists(os.path.join(dir_path, CAMERAS_BIN)):
        return read_model_binary(dir_path)
    if os.path.exists(os.path.join(dir_path, CAMERAS_TEXT)):
        return read_model_text(dir_path)
    raise IoError(f"{dir_path}: no cameras.bin or cameras.txt found")
