"""Pose-set extraction from a parsed reconstruction model."""

from __future__ import annotations

import re

from ..errors import FrameNameError
from ..geometry import PoseDirection, RigidPose, quat_normalize
from ..registration import PoseSet, PoseSetSource
from .types import ReconstructionModel

DEFAULT_FRAME_PATTERN = r"frame_(\d+)"


def extract_pose_set(
    model: ReconstructionModel,
    system_label: str,
    frame_pattern: str = DEFAULT_FRAME_PATTERN,
) -> PoseSet:
    """Build a frame_id -> pose map from the model's images.

    Model files store world-to-camera extrinsics; poses keep that
    direction and must be converted explicitly before unprojection.  Frame
    ids come from the first match group of ``frame_pattern`` applied to
    each image name; any non-matching name raises FrameNameError.
    """
    pattern = re.compile(frame_pattern)
    poses = {}
    bad = []
    for img in model.images.values():
        m = pattern.search(img.name)
        if m is None:
            bad.append(img.name)
            continue
        frame_id = int(m.group(1))
        poses[frame_id] = RigidPose(
            quat_normalize(img.quaternion()),
            img.translation(),
            PoseDirection.WORLD_TO_CAMERA,
        )
    if bad:
        raise FrameNameError(sorted(bad), frame_pattern)
    return PoseSet(system_label, poses, PoseSetSource.RECONSTRUCTION)
