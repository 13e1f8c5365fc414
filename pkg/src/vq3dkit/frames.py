"""Frame sharpness scoring and response-track frame selection.

Sharpness is the variance of the 4-neighbor discrete Laplacian
([0,1,0; 1,-4,1; 0,1,0], interior pixels only, no padding) over luminance
in [0, 1]; higher means sharper.  Images come in as PGM (ASCII ``P2`` or
binary ``P5``); per-frame scores export as ``frame_id,score`` CSV.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, NoPoseError, ParseError

DEFAULT_WINDOW_LEN = 30
# no authoritative value exists for this cutoff; scaled for [0,1] luminance
DEFAULT_BLUR_THRESHOLD = 1e-3


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) float64 luminance in [0, 1]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image dimensions must be positive")
        px = np.array(self.pixels, dtype=np.float64)  # copy: no aliasing
        if px.size != self.width * self.height:
            raise DomainError(
                f"pixel count {px.size} != width*height {self.width * self.height}"
            )
        px = px.reshape(self.height, self.width)
        if not np.all(np.isfinite(px)):
            raise DomainError("pixels must be finite")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise DomainError("luminance must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)
        self.pixels.setflags(write=False)


@dataclass(frozen=True)
class TrackBox:
    frame_id: int
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DomainError(f"degenerate box on frame {self.frame_id}")

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))


@dataclass(frozen=True)
class ResponseTrack:
    """Temporally contiguous detection boxes; frame ids strictly increasing."""

    boxes: tuple[TrackBox, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise DomainError("response track must be non-empty")
        ids = [b.frame_id for b in self.boxes]
        if any(x >= y for x, y in zip(ids, ids[1:])):
            raise DomainError("track frame ids must be strictly increasing")

    def frame_ids(self) -> list[int]:
        return [b.frame_id for b in self.boxes]

    def box_for(self, frame_id: int) -> TrackBox:
        for b in self.boxes:
            if b.frame_id == frame_id:
                return b
        raise KeyError(frame_id)


class Aggregation(enum.Enum):
    LAST = "last"
    AVERAGE = "average"
    MEDIAN = "median"


@dataclass(frozen=True)
class TrackSelection:
    """Posed track frames to localize from, plus how to combine them."""

    frames: tuple[int, ...]
    aggregation: Aggregation


def blur_score(img: GrayImage) -> float:
    """Sharpness score: variance of the interior Laplacian response.

    Zero for constant images; invariant to constant intensity offsets and
    quadratic under intensity scaling.
    """
    if img.width < 3 or img.height < 3:
        raise DomainError("blur_score needs at least a 3x3 image")
    return float(kernels.laplacian_variance(img.pixels))


def select_sharp_window(scores, window_len: int, threshold: float):
    """Contiguous window of ``window_len`` frames maximizing the minimum
    score.

    Returns the inclusive index range (start, end), or None when even the
    best window's minimum falls below ``threshold``.  Ties break toward
    the earliest start.
    """
    scores = [float(s) for s in scores]
    if window_len < 1:
        raise DomainError("window_len must be >= 1")
    if window_len > len(scores):
        raise DomainError(f"window_len {window_len} exceeds {len(scores)} frames")
    best_start = 0
    best_min = -np.inf
    for start in range(len(scores) - window_len + 1):
        m = min(scores[start : start + window_len])
        if m > best_min:
            best_min = m
            best_start = start
    if best_min < threshold:
        return None
    return (best_start, best_start + window_len - 1)


def select_track_frame(
    track: ResponseTrack, posed, mode: Aggregation = Aggregation.LAST
) -> TrackSelection:
    """Pick the track frames used for localization.

    LAST keeps only the most recent posed track frame; AVERAGE and MEDIAN
    keep every posed track frame and tag how downstream code aggregates
    the per-frame predictions.  Raises NoPoseError when no track frame has
    a pose (the query then counts as pose-less).
    """
    posed_frames = [f for f in track.frame_ids() if f in posed]
    if not posed_frames:
        raise NoPoseError("no response-track frame has an estimated pose")
    if mode is Aggregation.LAST:
        return TrackSelection((max(posed_frames),), mode)
    return TrackSelection(tuple(posed_frames), mode)


# ---------------------------------------------------------------------------
# PGM decoding / encoding
# ---------------------------------------------------------------------------

def parse_pgm(data: bytes, path="<pgm>") -> GrayImage:
    """Decode an ASCII (P2) or binary (P5) PGM into [0,1] luminance."""
    if len(data) < 2 or data[:2] not in (b"P2", b"P5"):
        raise ParseError("not a P2/P5 PGM file", path=path)
    magic = data[:2]
    pos = 2

    def next_token():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated header", path=path, offset=start)
        return data[start:pos]

    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ParseError(f"bad header field: {exc}", path=path) from None
    if width <= 0 or height <= 0:
        raise ParseError(f"bad dimensions {width}x{height}", path=path)
    if not (0 < maxval < 65536):
        raise ParseError(f"maxval {maxval} out of range", path=path)
    n = width * height
    if magic == b"P2":
        toks = data[pos:].split()
        if len(toks) != n:
            raise ParseError(f"expected {n} samples, got {len(toks)}", path=path, offset=pos)
        try:
            raw = np.array([int(t) for t in toks], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad sample: {exc}", path=path) from None
    else:
        pos += 1  # single whitespace byte separates header from raster
        bytes_per = 1 if maxval < 256 else 2
        raster = data[pos : pos + n * bytes_per]
        if len(raster) != n * bytes_per:
            raise ParseError(
                f"raster holds {len(raster)} bytes, expected {n * bytes_per}",
                path=path,
                offset=pos,
            )
        dtype = np.uint8 if bytes_per == 1 else np.dtype(">u2")
        raw = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    if raw.size and raw.max() > maxval:
        raise ParseError("sample exceeds maxval", path=path)
    if raw.size and raw.min() < 0:
        raise ParseError("negative sample", path=path)
    return GrayImage(width, height, raw.reshape(height, width) / maxval)


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read(), path=path)


def write_pgm(img: GrayImage, path) -> None:
    """Encode as binary P5 with maxval 255."""
    raw = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.width, img.height))
        fh.write(raw.tobytes())


FRAME_FILE_PATTERN = re.compile(r"frame_(\d+)\.pgm$")


def scores_to_csv(scores: dict[int, float]) -> str:
    lines = ["frame_id,score"]
    for frame_id in sorted(scores):
        lines.append(f"{frame_id},{scores[frame_id]!r}")
    return "\n".join(lines) + "\n"
