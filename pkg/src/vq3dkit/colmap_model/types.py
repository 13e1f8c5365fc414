"""In-memory representation of an SfM sparse reconstruction model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import IntegrityError, UnsupportedModel
from ..geometry import Intrinsics

# model name -> (numeric id, parameter count); ids and arities follow the
# standard sparse-model file layout.
CAMERA_MODELS = {
    "SIMPLE_PINHOLE": (0, 3),
    "PINHOLE": (1, 4),
    "SIMPLE_RADIAL": (2, 4),
    "RADIAL": (3, 5),
    "OPENCV": (4, 8),
    "OPENCV_FISHEYE": (5, 8),
    "FULL_OPENCV": (6, 12),
    "FOV": (7, 5),
    "SIMPLE_RADIAL_FISHEYE": (8, 4),
    "RADIAL_FISHEYE": (9, 5),
    "THIN_PRISM_FISHEYE": (10, 12),
}
CAMERA_MODEL_IDS = {mid: (name, nparams) for name, (mid, nparams) in CAMERA_MODELS.items()}

# Models whose leading parameters are a plain pinhole; distortion terms are
# ignored on conversion (distortion handling is out of scope).
_PINHOLE_COMPATIBLE = {"SIMPLE_PINHOLE", "PINHOLE", "SIMPLE_RADIAL", "RADIAL", "OPENCV"}


@dataclass(frozen=True)
class ModelCamera:
    camera_id: int
    model_name: str
    width: int
    height: int
    params: tuple[float, ...]

    def to_intrinsics(self) -> Intrinsics:
        """Pinhole intrinsics for the pinhole-compatible model subset."""
        if self.model_name not in _PINHOLE_COMPATIBLE:
            raise UnsupportedModel(
                f"camera {self.camera_id}: cannot convert {self.model_name} to "
                "pinhole intrinsics"
            )
        p = self.params
        if self.model_name in ("SIMPLE_PINHOLE", "SIMPLE_RADIAL", "RADIAL"):
            fx, fy, cx, cy = p[0], p[0], p[1], p[2]
        else:  # PINHOLE, OPENCV
            fx, fy, cx, cy = p[0], p[1], p[2], p[3]
        return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=self.width, height=self.height)


@dataclass(frozen=True)
class ModelImage:
    image_id: int
    qw: float
    qx: float
    qy: float
    qz: float
    tx: float
    ty: float
    tz: float
    camera_id: int
    name: str
    # (x, y, point3d_id) with point3d_id == -1 for untriangulated observations
    points2d: tuple[tuple[float, float, int], ...] = ()

    def quaternion(self) -> np.ndarray:
        return np.array([self.qw, self.qx, self.qy, self.qz])

    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])


@dataclass(frozen=True)
class ModelPoint3D:
    point3d_id: int
    xyz: tuple[float, float, float]
    rgb: tuple[int, int, int]
    error: float
    # (image_id, point2d_idx) pairs
    track: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class ReconstructionModel:
    cameras: dict[int, ModelCamera] = field(default_factory=dict)
    images: dict[int, ModelImage] = field(default_factory=dict)
    points3d: dict[int, ModelPoint3D] = field(default_factory=dict)

    def validate(self) -> "ReconstructionModel":
        """Check referential integrity across the three collections."""
        for cam in self.cameras.values():
            expected = CAMERA_MODELS.get(cam.model_name)
            if expected is None:
                raise IntegrityError(
                    f"camera {cam.camera_id}: unknown model {cam.model_name!r}"
                )
            if len(cam.params) != expected[1]:
                raise IntegrityError(
                    f"camera {cam.camera_id}: model {cam.model_name} takes "
                    f"{expected[1]} params, got {len(cam.params)}"
                )
            if cam.width <= 0 or cam.height <= 0 or cam.camera_id <= 0:
                raise IntegrityError(f"camera {cam.camera_id}: non-positive field")
        for img in self.images.values():
            if img.camera_id not in self.cameras:
                raise IntegrityError(
                    f"image {img.image_id} references missing camera {img.camera_id}"
                )
            if not img.name:
                raise IntegrityError(f"image {img.image_id} has an empty name")
            norm = img.qw**2 + img.qx**2 + img.qy**2 + img.qz**2
            if not norm > 0:
                raise IntegrityError(f"image {img.image_id}: zero-norm quaternion")
            for x, y, pid in img.points2d:
                if pid != -1 and pid not in self.points3d:
                    raise IntegrityError(
                        f"image {img.image_id} references missing 3D point {pid}"
                    )
        for pt in self.points3d.values():
            for image_id, idx in pt.track:
                img = self.images.get(image_id)
                if img is None:
                    raise IntegrityError(
                        f"point {pt.point3d_id} track references missing image {image_id}"
                    )
                if not (0 <= idx < len(img.points2d)):
                    raise IntegrityError(
                        f"point {pt.point3d_id} track references 2D point {idx} "
                        f"out of range for image {image_id}"
                    )
        return self
