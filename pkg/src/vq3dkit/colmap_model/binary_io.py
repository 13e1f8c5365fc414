"""Binary-format sparse model reader/writer.

All fields are little-endian with fixed widths; collection counts are
unsigned 64-bit.  Record layouts (see also docs/formats.md):

* ``cameras.bin``:  ``u64 n``, then per camera ``i32 camera_id,
  i32 model_id, u64 width, u64 height, f64 params[arity(model_id)]``.
* ``images.bin``:   ``u64 n``, then per image ``i32 image_id, f64 qw qx qy
  qz tx ty tz, i32 camera_id, name bytes + NUL, u64 n_points2d,
  (f64 x, f64 y, i64 point3d_id) * n_points2d`` (id -1 = untriangulated).
* ``points3D.bin``: ``u64 n``, then per point ``u64 point3d_id, f64 x y z,
  u8 r g b, f64 error, u64 track_len, (i32 image_id, i32 point2d_idx) *
  track_len``.

Declared counts are checked against the remaining byte budget before any
allocation, so corrupt headers fail with ParseError instead of exhausting
memory.
"""

from __future__ import annotations

import os
import struct

from ..errors import IoError, ParseError
from .types import (
    CAMERA_MODEL_IDS,
    CAMERA_MODELS,
    ModelCamera,
    ModelImage,
    ModelPoint3D,
    ReconstructionModel,
)

CAMERAS_BIN = "cameras.bin"
IMAGES_BIN = "images.bin"
POINTS3D_BIN = "points3D.bin"


class _Cursor:
    """Bounds-checked sequential reader over a bytes buffer."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.offset = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ParseError(
                f"truncated record (wanted {size} bytes)", path=self.path, offset=self.offset
            )
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def read_count(self, what: str, min_record_size: int) -> int:
        (n,) = self.unpack("<Q")
        remaining = len(self.data) - self.offset
        if min_record_size > 0 and n > remaining // min_record_size:
            raise ParseError(
                f"{what} count {n} exceeds what {remaining} remaining bytes can hold",
                path=self.path,
                offset=self.offset - 8,
            )
        return n

    def read_cstring(self) -> str:
        end = self.data.find(b"\x00", self.offset)
        if end < 0:
            raise ParseError("unterminated name string", path=self.path, offset=self.offset)
        raw = self.data[self.offset : end]
        self.offset = end + 1
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("name is not valid UTF-8", path=self.path, offset=self.offset) from None

    def expect_eof(self) -> None:
        if self.offset != len(self.data):
            raise ParseError(
                f"{len(self.data) - self.offset} trailing bytes", path=self.path, offset=self.offset
            )


def parse_cameras_binary(data: bytes, path=CAMERAS_BIN) -> dict[int, ModelCamera]:
    cur = _Cursor(data, path)
    n = cur.read_count("camera", 24)
    cameras: dict[int, ModelCamera] = {}
    for _ in range(n):
        camera_id, model_id, width, height = cur.unpack("<iiQQ")
        spec = CAMERA_MODEL_IDS.get(model_id)
        if spec is None:
            raise ParseError(f"unknown camera model id {model_id}", path=path, offset=cur.offset)
        model_name, nparams = spec
        params = cur.unpack(f"<{nparams}d")
        if camera_id in cameras:
            raise ParseError(f"duplicate camera id {camera_id}", path=path, offset=cur.offset)
        cameras[camera_id] = ModelCamera(camera_id, model_name, width, height, tuple(params))
    cur.expect_eof()
    return cameras


def parse_images_binary(data: bytes, path=IMAGES_BIN) -> dict[int, ModelImage]:
    cur = _Cursor(data, path)
    # smallest possible image record: ids + pose + empty name + zero points
    n = cur.read_count("image", 4 + 7 * 8 + 4 + 1 + 8)
    images: dict[int, ModelImage] = {}
    for _ in range(n):
        (image_id,) = cur.unpack("<i")
        qw, qx, qy, qz, tx, ty, tz = cur.unpack("<7d")
        (camera_id,) = cur.unpack("<i")
        name = cur.read_cstring()
        n_pts = cur.read_count(f"image {image_id} 2D-point", 24)
        flat = cur.unpack("<" + "ddq" * n_pts) if n_pts else ()
        points2d = tuple(
            (flat[j], flat[j + 1], int(flat[j + 2])) for j in range(0, len(flat), 3)
        )
        if image_id in images:
            raise ParseError(f"duplicate image id {image_id}", path=path, offset=cur.offset)
        images[image_id] = ModelImage(
            image_id, qw, qx, qy, qz, tx, ty, tz, camera_id, name, points2d
        )
    cur.expect_eof()
    return images


def parse_points3d_binary(data: bytes, path=POINTS3D_BIN) -> dict[int, ModelPoint3D]:
    cur = _Cursor(data, path)
    n = cur.read_count("point", 8 + 3 * 8 + 3 + 8 + 8)
    points: dict[int, ModelPoint3D] = {}
    for _ in range(n):
        point3d_id, x, y, z, r, g, b, error = cur.unpack("<QdddBBBd")
        track_len = cur.read_count(f"point {point3d_id} track", 8)
        flat = cur.unpack(f"<{2 * track_len}i") if track_len else ()
        track = tuple((flat[j], flat[j + 1]) for j in range(0, len(flat), 2))
        if point3d_id in points:
            raise ParseError(f"duplicate point id {point3d_id}", path=path, offset=cur.offset)
        points[point3d_id] = ModelPoint3D(int(point3d_id), (x, y, z), (r, g, b), error, track)
    cur.expect_eof()
    return points


def _read_file(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def read_model_binary(dir_path) -> ReconstructionModel:
    """Parse a binary model directory and verify referential integrity."""
    cameras = parse_cameras_binary(
        _read_file(os.path.join(dir_path, CAMERAS_BIN)), os.path.join(dir_path, CAMERAS_BIN)
    )
    images = parse_images_binary(
        _read_file(os.path.join(dir_path, IMAGES_BIN)), os.path.join(dir_path, IMAGES_BIN)
    )
    points3d = parse_points3d_binary(
        _read_file(os.path.join(dir_path, POINTS3D_BIN)),
        os.path.join(dir_path, POINTS3D_BIN),
    )
    return ReconstructionModel(cameras, images, points3d).validate()


def cameras_to_binary(cameras: dict[int, ModelCamera]) -> bytes:
    out = [struct.pack("<Q", len(cameras))]
    for cam in (cameras[k] for k in sorted(cameras)):
        model_id, nparams = CAMERA_MODELS[cam.model_name]
        out.append(struct.pack("<iiQQ", cam.camera_id, model_id, cam.width, cam.height))
        out.append(struct.pack(f"<{nparams}d", *cam.params))
    return b"".join(out)


def images_to_binary(images: dict[int, ModelImage]) -> bytes:
    out = [struct.pack("<Q", len(images))]
    for img in (images[k] for k in sorted(images)):
        out.append(
            struct.pack(
                "<i7di",
                img.image_id,
                img.qw, img.qx, img.qy, img.qz,
                img.tx, img.ty, img.tz,
                img.camera_id,
            )
        )
        out.append(img.name.encode("utf-8") + b"\x00")
        out.append(struct.pack("<Q", len(img.points2d)))
        for x, y, pid in img.points2d:
            out.append(struct.pack("<ddq", x, y, pid))
    return b"".join(out)


def points3d_to_binary(points3d: dict[int, ModelPoint3D]) -> bytes:
    out = [struct.pack("<Q", len(points3d))]
    for pt in (points3d[k] for k in sorted(points3d)):
        out.append(struct.pack("<QdddBBBd", pt.point3d_id, *pt.xyz, *pt.rgb, pt.error))
        out.append(struct.pack("<Q", len(pt.track)))
        for image_id, idx in pt.track:
            out.append(struct.pack("<ii", image_id, idx))
    return b"".join(out)


def write_model_binary(model: ReconstructionModel, dir_path) -> None:
    """Write the three binary files; the model is validated first."""
    model.validate()
    try:
        os.makedirs(dir_path, exist_ok=True)
        for fname, blob in (
            (CAMERAS_BIN, cameras_to_binary(model.cameras)),
            (IMAGES_BIN, images_to_binary(model.images)),
            (POINTS3D_BIN, points3d_to_binary(model.points3d)),
        ):
            with open(os.path.join(dir_path, fname), "wb") as fh:
                fh.write(blob)
    except OSError as exc:
        raise IoError(f"cannot write model to {dir_path}: {exc}") from None
