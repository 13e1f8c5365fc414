"""Text-format sparse model reader/writer.

Layout (one directory, three files, comment lines start with ``#``):

* ``cameras.txt``  — ``CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]``
* ``images.txt``   — two lines per image: the pose line
  ``IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME`` followed by the 2D-point
  line ``(X Y POINT3D_ID)*`` (empty when the image has no observations).
* ``points3D.txt`` — ``POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*``

Floats are written with the shortest decimal representation that parses
back to the identical double, so read∘write is an exact fixpoint.
"""

from __future__ import annotations

import os

from ..errors import IoError, ParseError
from .types import (
    CAMERA_MODELS,
    ModelCamera,
    ModelImage,
    ModelPoint3D,
    ReconstructionModel,
)

CAMERAS_TEXT = "cameras.txt"
IMAGES_TEXT = "images.txt"
POINTS3D_TEXT = "points3D.txt"


def _fmt(x: float) -> str:
    return repr(float(x))


def _decode(data: bytes, path) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc})", path=path) from None


def _data_lines(text: str):
    """Yield (line_number, line) for non-blank, non-comment lines."""
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield i, stripped


def parse_cameras_text(data: bytes, path="cameras.txt") -> dict[int, ModelCamera]:
    text = _decode(data, path)
    cameras: dict[int, ModelCamera] = {}
    for lineno, line in _data_lines(text):
        tok = line.split()
        if len(tok) < 4:
            raise ParseError("camera line needs at least 4 fields", path=path, line=lineno)
        try:
            camera_id = int(tok[0])
            model_name = tok[1]
            width = int(tok[2])
            height = int(tok[3])
            params = tuple(float(t) for t in tok[4:])
        except ValueError as exc:
            raise ParseError(f"bad camera field: {exc}", path=path, line=lineno) from None
        spec = CAMERA_MODELS.get(model_name)
        if spec is None:
            raise ParseError(f"unknown camera model {model_name!r}", path=path, line=lineno)
        if len(params) != spec[1]:
            raise ParseError(
                f"model {model_name} takes {spec[1]} params, got {len(params)}",
                path=path,
                line=lineno,
            )
        if camera_id in cameras:
            raise ParseError(f"duplicate camera id {camera_id}", path=path, line=lineno)
        cameras[camera_id] = ModelCamera(camera_id, model_name, width, height, params)
    return cameras


def parse_images_text(data: bytes, path="images.txt") -> dict[int, ModelImage]:
    text = _decode(data, path)
    lines = text.splitlines()
    images: dict[int, ModelImage] = {}
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        lineno = i + 1
        tok = stripped.split()
        if len(tok) < 10:
            raise ParseError("image pose line needs 10 fields", path=path, line=lineno)
        try:
            image_id = int(tok[0])
            qw, qx, qy, qz = (float(t) for t in tok[1:5])
            tx, ty, tz = (float(t) for t in tok[5:8])
            camera_id = int(tok[8])
        except ValueError as exc:
            raise ParseError(f"bad image field: {exc}", path=path, line=lineno) from None
        name = " ".join(tok[9:])
        # the next line is positionally the 2D-point line, even when empty
        if i + 1 >= len(lines):
            raise ParseError(
                f"image {image_id} is missing its 2D-point line", path=path, line=lineno
            )
        pt_tok = lines[i + 1].split()
        if len(pt_tok) % 3 != 0:
            raise ParseError(
                "2D-point line must hold (X, Y, POINT3D_ID) triples",
                path=path,
                line=lineno + 1,
            )
        try:
            points2d = tuple(
                (float(pt_tok[j]), float(pt_tok[j + 1]), int(pt_tok[j + 2]))
                for j in range(0, len(pt_tok), 3)
            )
        except ValueError as exc:
            raise ParseError(f"bad 2D point: {exc}", path=path, line=lineno + 1) from None
        if image_id in images:
            raise ParseError(f"duplicate image id {image_id}", path=path, line=lineno)
        images[image_id] = ModelImage(
            image_id, qw, qx, qy, qz, tx, ty, tz, camera_id, name, points2d
        )
        i += 2
    return images


def parse_points3d_text(data: bytes, path="points3D.txt") -> dict[int, ModelPoint3D]:
    text = _decode(data, path)
    points: dict[int, ModelPoint3D] = {}
    for lineno, line in _data_lines(text):
        tok = line.split()
        if len(tok) < 8:
            raise ParseError("point line needs at least 8 fields", path=path, line=lineno)
        if (len(tok) - 8) % 2 != 0:
            raise ParseError(
                "track must hold (IMAGE_ID, POINT2D_IDX) pairs", path=path, line=lineno
            )
        try:
            point3d_id = int(tok[0])
            xyz = (float(tok[1]), float(tok[2]), float(tok[3]))
            rgb = (int(tok[4]), int(tok[5]), int(tok[6]))
            error = float(tok[7])
            track = tuple(
                (int(tok[j]), int(tok[j + 1])) for j in range(8, len(tok), 2)
            )
        except ValueError as exc:
            raise ParseError(f"bad point field: {exc}", path=path, line=lineno) from None
        if not all(0 <= c <= 255 for c in rgb):
            raise ParseError(f"rgb out of byte range: {rgb}", path=path, line=lineno)
        if point3d_id in points:
            raise ParseError(f"duplicate point id {point3d_id}", path=path, line=lineno)
        points[point3d_id] = ModelPoint3D(point3d_id, xyz, rgb, error, track)
    return points


def _read_file(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def read_model_text(dir_path) -> ReconstructionModel:
    """Parse a text model directory and verify referential integrity."""
    cameras = parse_cameras_text(
        _read_file(os.path.join(dir_path, CAMERAS_TEXT)), os.path.join(dir_path, CAMERAS_TEXT)
    )
    images = parse_images_text(
        _read_file(os.path.join(dir_path, IMAGES_TEXT)), os.path.join(dir_path, IMAGES_TEXT)
    )
    points3d = parse_points3d_text(
        _read_file(os.path.join(dir_path, POINTS3D_TEXT)),
        os.path.join(dir_path, POINTS3D_TEXT),
    )
    return ReconstructionModel(cameras, images, points3d).validate()


def cameras_to_text(cameras: dict[int, ModelCamera]) -> str:
    out = [
        "# Camera list with one line of data per camera:",
        "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]",
        f"# Number of cameras: {len(cameras)}",
    ]
    for cam in (cameras[k] for k in sorted(cameras)):
        fields = [str(cam.camera_id), cam.model_name, str(cam.width), str(cam.height)]
        fields += [_fmt(p) for p in cam.params]
        out.append(" ".join(fields))
    return "\n".join(out) + "\n"


def images_to_text(images: dict[int, ModelImage]) -> str:
    n_obs = sum(len(img.points2d) for img in images.values())
    mean_obs = n_obs / len(images) if images else 0.0
    out = [
        "# Image list with two lines of data per image:",
        "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME",
        "#   POINTS2D[] as (X, Y, POINT3D_ID)",
        f"# Number of images: {len(images)}, mean observations per image: {mean_obs}",
    ]
    for img in (images[k] for k in sorted(images)):
        pose = [
            str(img.image_id),
            _fmt(img.qw), _fmt(img.qx), _fmt(img.qy), _fmt(img.qz),
            _fmt(img.tx), _fmt(img.ty), _fmt(img.tz),
            str(img.camera_id),
            img.name,
        ]
        out.append(" ".join(pose))
        out.append(
            " ".join(
                f"{_fmt(x)} {_fmt(y)} {pid}" for x, y, pid in img.points2d
            )
        )
    return "\n".join(out) + "\n"


def points3d_to_text(points3d: dict[int, ModelPoint3D]) -> str:
    n_track = sum(len(pt.track) for pt in points3d.values())
    mean_track = n_track / len(points3d) if points3d else 0.0
    out = [
        "# 3D point list with one line of data per point:",
        "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)",
        f"# Number of points: {len(points3d)}, mean track length: {mean_track}",
    ]
    for pt in (points3d[k] for k in sorted(points3d)):
        fields = [str(pt.point3d_id)]
        fields += [_fmt(c) for c in pt.xyz]
        fields += [str(c) for c in pt.rgb]
        fields.append(_fmt(pt.error))
        for image_id, idx in pt.track:
            fields.append(str(image_id))
            fields.append(str(idx))
        out.append(" ".join(fields))
    return "\n".join(out) + "\n"


def write_model_text(model: ReconstructionModel, dir_path) -> None:
    """Write the three text files; the model is validated first."""
    model.validate()
    _check_names(model)
    try:
        os.makedirs(dir_path, exist_ok=True)
        for fname, text in (
            (CAMERAS_TEXT, cameras_to_text(model.cameras)),
            (IMAGES_TEXT, images_to_text(model.images)),
            (POINTS3D_TEXT, points3d_to_text(model.points3d)),
        ):
            with open(os.path.join(dir_path, fname), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write model to {dir_path}: {exc}") from None


def _check_names(model: ReconstructionModel) -> None:
    # names sit at the end of a whitespace-split line: single internal
    # spaces survive the round trip, anything else cannot
    for img in model.images.values():
        if img.name != " ".join(img.name.split()) or "\n" in img.name:
            raise IoError(
                f"image {img.image_id}: name {img.name!r} is not text-serializable"
            )
