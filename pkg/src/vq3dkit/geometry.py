"""Camera and transform math with explicit pose-direction conventions.

Conventions used throughout the package:

* Quaternions are stored ``(qw, qx, qy, qz)``, scalar first, matching the
  SfM model-file layout.  All rotations are unit quaternions.
* A pose is a rigid map ``x -> R x + t``.  Its ``direction`` says what the
  map means: ``CAMERA_TO_WORLD`` sends camera-frame points to world-frame
  points, ``WORLD_TO_CAMERA`` the reverse.  SfM model files store
  world-to-camera; unprojection consumes camera-to-world.  Converting
  between the two is always an explicit call, never implicit.
* Similarity transforms act as ``x -> s R x + t`` with ``s > 0``.
* Pixel coordinates have their origin at the top-left corner; depth is
  metric and positive in front of the camera.  Angles are radians.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DirectionError, DomainError

__all__ = [
    "PoseDirection",
    "Intrinsics",
    "RigidPose",
    "SimilarityTransform",
    "quat_multiply",
    "quat_conjugate",
    "quat_rotate",
    "quat_to_matrix",
    "matrix_to_quat",
    "quat_from_axis_angle",
    "quat_slerp",
    "random_unit_quat",
    "rotation_geodesic_angle",
    "unproject",
    "project",
    "transform_point",
    "compose",
    "invert",
]

_UNIT_NORM_ATOL = 1e-6


class PoseDirection(enum.Enum):
    CAMERA_TO_WORLD = "camera_to_world"
    WORLD_TO_CAMERA = "world_to_camera"


def _as_vec(x, n, name) -> np.ndarray:
    # always copies, so stored arrays never alias caller-owned buffers
    v = np.array(x, dtype=np.float64).reshape(-1)
    if v.shape[0] != n:
        raise DomainError(f"{name} must have {n} components, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} has non-finite components: {v}")
    return v


# ---------------------------------------------------------------------------
# Quaternion helpers (scalar-first, Hamilton convention)
# ---------------------------------------------------------------------------

def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b; rotating by the result applies b first, then a."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = _as_vec(q, 4, "quaternion")
    n = float(np.linalg.norm(q))
    if n <= 0.0:
        raise DomainError("quaternion has zero norm")
    return q / n


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    # q * (0, v) * conj(q), expanded to avoid building intermediate quats
    w, x, y, z = q
    vx, vy, vz = v
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array(
        [
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion, numerically stable branch choice."""
    m = np.asarray(m, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
             (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
             (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
             (m[2, 1] + m[1, 2]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
             (m[2, 1] + m[1, 2]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = _as_vec(axis, 3, "axis")
    n = float(np.linalg.norm(axis))
    if n <= 0.0:
        raise DomainError("rotation axis has zero norm")
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis / n))


def quat_slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(q0 + t * (q1 - q0))
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    return (math.sin((1.0 - t) * theta) / s) * q0 + (math.sin(t * theta) / s) * q1


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_normalize(q)


def rotation_geodesic_angle(r1, r2) -> float:
    """Angle in [0, pi] of the relative rotation between two unit quaternions.

    Symmetric in its arguments and invariant under sign flips of either
    quaternion (double cover).  Uses the atan2 form, which stays accurate
    near zero where acos of the dot product loses ~8 digits.
    """
    r1 = quat_normalize(r1)
    r2 = quat_normalize(r2)
    rel = quat_multiply(r1, quat_conjugate(r2))
    return 2.0 * math.atan2(float(np.linalg.norm(rel[1:])), abs(float(rel[0])))


# ---------------------------------------------------------------------------
# Core value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels; principal point must lie inside the image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image dimensions must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DomainError("principal point must lie strictly inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RigidPose:
    """SE(3) pose with an explicit direction tag.

    ``rotation`` is a unit quaternion (qw, qx, qy, qz); ``translation`` is
    in meters.  Construction normalizes the quaternion and rejects inputs
    farther than 1e-6 from unit norm.
    """

    rotation: np.ndarray
    translation: np.ndarray
    direction: PoseDirection

    def __post_init__(self):
        q = _as_vec(self.rotation, 4, "rotation")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > _UNIT_NORM_ATOL:
            raise DomainError(f"quaternion norm {n} too far from 1")
        t = _as_vec(self.translation, 3, "translation")
        if not isinstance(self.direction, PoseDirection):
            raise DomainError("direction must be a PoseDirection")
        object.__setattr__(self, "rotation", q / n)
        object.__setattr__(self, "translation", t)
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls, direction: PoseDirection = PoseDirection.CAMERA_TO_WORLD):
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), direction)

    def apply(self, x) -> np.ndarray:
        """Apply the stored map R x + t (meaning given by ``direction``)."""
        x = _as_vec(x, 3, "point")
        return quat_rotate(self.rotation, x) + self.translation

    def inverse(self) -> "RigidPose":
        """Inverse map; the direction tag flips accordingly."""
        qc = quat_conjugate(self.rotation)
        flipped = (
            PoseDirection.WORLD_TO_CAMERA
            if self.direction is PoseDirection.CAMERA_TO_WORLD
            else PoseDirection.CAMERA_TO_WORLD
        )
        return RigidPose(qc, -quat_rotate(qc, self.translation), flipped)

    def to_direction(self, direction: PoseDirection) -> "RigidPose":
        return self if self.direction is direction else self.inverse()

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates, whichever way the pose is stored."""
        if self.direction is PoseDirection.CAMERA_TO_WORLD:
            return self.translation.copy()
        return -quat_rotate(quat_conjugate(self.rotation), self.translation)

    def rotation_c2w(self) -> np.ndarray:
        """Camera-to-world rotation quaternion."""
        if self.direction is PoseDirection.CAMERA_TO_WORLD:
            return self.rotation.copy()
        return quat_conjugate(self.rotation)

    def require_direction(self, direction: PoseDirection) -> "RigidPose":
        if self.direction is not direction:
            raise DirectionError(
                f"pose stored as {self.direction.value}, operation requires "
                f"{direction.value}; convert explicitly with to_direction()"
            )
        return self


@dataclass(frozen=True)
class SimilarityTransform:
    """Sim(3) map x -> s R x + t with s > 0."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"scale must be positive, got {self.scale}")
        q = _as_vec(self.rotation, 4, "rotation")
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > _UNIT_NORM_ATOL:
            raise DomainError(f"quaternion norm {n} too far from 1")
        t = _as_vec(self.translation, 3, "translation")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", q / n)
        object.__setattr__(self, "translation", t)
        self.rotation.setflags(write=False)
        self.translation.setflags(write=False)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_pose(cls, pose: RigidPose) -> "SimilarityTransform":
        """Lift a pose to a scale-1 similarity; the direction tag is dropped,
        the underlying map is unchanged."""
        return cls(1.0, pose.rotation, pose.translation)

    def apply(self, x) -> np.ndarray:
        x = _as_vec(x, 3, "point")
        return self.scale * quat_rotate(self.rotation, x) + self.translation

    def inverse(self) -> "SimilarityTransform":
        qc = quat_conjugate(self.rotation)
        inv_s = 1.0 / self.scale
        return SimilarityTransform(inv_s, qc, -inv_s * quat_rotate(qc, self.translation))

    def compose_with(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return SimilarityTransform(
            self.scale * other.scale,
            quat_multiply(self.rotation, other.rotation),
            self.scale * quat_rotate(self.rotation, other.translation)
            + self.translation,
        )


Transform = RigidPose | SimilarityTransform


def _lift(t: Transform) -> SimilarityTransform:
    if isinstance(t, SimilarityTransform):
        return t
    if isinstance(t, RigidPose):
        return SimilarityTransform.from_pose(t)
    raise DomainError(f"not a transform: {type(t).__name__}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def unproject(p, d: float, k: Intrinsics) -> np.ndarray:
    """Lift pixel p at metric depth d into the camera frame.

    Returns ((u-cx)*d/fx, (v-cy)*d/fy, d), i.e. the d * K^-1 [u, v, 1]^T ray
    point for a pinhole camera.
    """
    p = _as_vec(p, 2, "pixel")
    if not (np.isfinite(d) and d > 0):
        raise DomainError(f"depth must be positive and finite, got {d}")
    u, v = p
    return np.array([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d])


def project(x, k: Intrinsics) -> tuple[np.ndarray, float]:
    """Project a camera-frame point to (pixel, depth).

    Raises BehindCameraError when z <= 0.  The pixel is not clamped to the
    image bounds.
    """
    x = _as_vec(x, 3, "point")
    if x[2] <= 0:
        raise BehindCameraError(f"point has non-positive depth z={x[2]}")
    z = float(x[2])
    return np.array([k.fx * x[0] / z + k.cx, k.fy * x[1] / z + k.cy]), z


def transform_point(t: Transform, x) -> np.ndarray:
    """Apply a pose or similarity to a point: s R x + t (s = 1 for poses)."""
    return t.apply(x)


def compose(a: Transform, b: Transform) -> SimilarityTransform:
    """Composite map applying b first, then a.

    Poses are lifted to scale-1 similarities; direction bookkeeping is the
    caller's job (a world-to-world composite is not a camera pose).
    """
    return _lift(a).compose_with(_lift(b))


def invert(t: Transform):
    """Inverse transform; preserves the operand type."""
    if isinstance(t, (RigidPose, SimilarityTransform)):
        return t.inverse()
    raise DomainError(f"not a transform: {type(t).__name__}")
