"""vq3dkit: egocentric visual-query 3D localization pipeline stages.

Parses SfM sparse reconstruction models, registers reconstruction submaps
into a metric world frame, unprojects 2D query detections into 3D
displacement vectors, and computes the VQ3D metric suite (QwP, L2, angle,
Succ, Succ*) — all verifiable end-to-end against a built-in synthetic
scene oracle.
"""

__version__ = "0.1.0"

from .errors import (
    BehindCameraError,
    DirectionError,
    DomainError,
    FrameNameError,
    IntegrityError,
    IoError,
    MissingDataError,
    NoPoseError,
    ParseError,
    SchemaError,
    UnregistrableError,
    UnsupportedModel,
    VQ3DError,
)
from .geometry import (
    Intrinsics,
    PoseDirection,
    RigidPose,
    SimilarityTransform,
    compose,
    invert,
    project,
    rotation_geodesic_angle,
    transform_point,
    unproject,
)

__all__ = [
    "__version__",
    "VQ3DError",
    "DomainError",
    "DirectionError",
    "BehindCameraError",
    "ParseError",
    "IntegrityError",
    "IoError",
    "UnsupportedModel",
    "FrameNameError",
    "NoPoseError",
    "MissingDataError",
    "UnregistrableError",
    "SchemaError",
    "PoseDirection",
    "Intrinsics",
    "RigidPose",
    "SimilarityTransform",
    "unproject",
    "project",
    "transform_point",
    "compose",
    "invert",
    "rotation_geodesic_angle",
]
