"""Raster images, face annotations, and their file formats.

Images are numpy arrays shaped (height, width, channels) with channels 1 or
3, stored either as uint8 in [0, 255] or as floats in [0, 1]. Outputs of the
normalization step may leave the unit interval; such images carry
``bounded=False`` and only require finite values.

File formats: binary PGM (P5) for grayscale, binary PPM (P6) for color, and
a sidecar text format for annotations with one face per line::

    x_min y_min x_max y_max lx1 ly1 lx2 ly2 lx3 ly3 lx4 ly4 lx5 ly5

Landmark-free faces write -1 for all ten landmark fields; bare 4-field
lines are accepted on read.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import MagicError, ParseError, TruncatedFileError

_FLOAT_DTYPES = (np.float32, np.float64)


@dataclass(frozen=True)
class RasterImage:
    """A 2-D pixel grid, grayscale or RGB.

    ``bounded`` asserts the value range (uint8 in [0,255], floats in
    [0,1]); normalization output drops it and only guarantees finiteness.
    """

    pixels: np.ndarray
    bounded: bool = True

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w) or (h, w, 1|3) pixels, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        if px.dtype == np.uint8:
            pass
        elif px.dtype in _FLOAT_DTYPES:
            if not np.all(np.isfinite(px)):
                raise ValueError("float pixels must be finite")
            if self.bounded and (px.min() < 0.0 or px.max() > 1.0):
                raise ValueError("bounded float pixels must lie in [0, 1]")
        else:
            raise ValueError(f"unsupported pixel dtype {px.dtype}")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def is_integer(self) -> bool:
        return self.pixels.dtype == np.uint8

    def to_unit_float(self) -> "RasterImage":
        """Same image with float64 pixels in [0, 1]."""
        if self.is_integer:
            return RasterImage(self.pixels.astype(np.float64) / 255.0)
        if not self.bounded:
            raise ValueError("cannot rescale an unbounded image to [0, 1]")
        return RasterImage(self.pixels.astype(np.float64))

    def to_uint8(self) -> "RasterImage":
        if self.is_integer:
            return self
        if not self.bounded:
            raise ValueError("cannot quantize an unbounded image")
        return RasterImage(np.rint(self.pixels * 255.0).astype(np.uint8))


@dataclass(frozen=True)
class FaceAnnotation:
    """One face: bounding box, optional 5-point landmarks, validity flag.

    ``valid`` is cleared by augmentation when too little of the face
    survives cropping.
    """

    bbox: tuple[float, float, float, float]
    landmarks: Optional[tuple[tuple[float, float], ...]] = None
    valid: bool = True

    def __post_init__(self):
        if len(self.bbox) != 4:
            raise ValueError("bbox must be (x_min, y_min, x_max, y_max)")
        bbox = tuple(float(v) for v in self.bbox)
        x0, y0, x1, y1 = bbox
        if self.valid and (x0 >= x1 or y0 >= y1):
            raise ValueError(f"valid annotation needs x_min < x_max and y_min < y_max, got {bbox}")
        object.__setattr__(self, "bbox", bbox)
        if self.landmarks is not None:
            pts = tuple((float(x), float(y)) for x, y in self.landmarks)
            if len(pts) != 5:
                raise ValueError(f"expected 5 landmarks, got {len(pts)}")
            object.__setattr__(self, "landmarks", pts)

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return max(x1 - x0, 0.0) * max(y1 - y0, 0.0)


# ----------------------------------------------------------------------
# PGM / PPM

def write_image(path, img: RasterImage) -> None:
    """Write binary PGM (1 channel) or PPM (3 channels). Floats quantize."""
    u8 = img.to_uint8()
    magic = b"P5" if u8.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, u8.width, u8.height)
    Path(path).write_bytes(header + u8.pixels.tobytes())


def _read_header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise TruncatedFileError("image header ended early")
    return data[start:pos], pos


def read_image(path) -> RasterImage:
    """Read a binary PGM (P5) or PPM (P6) file."""
    data = Path(path).read_bytes()
    if len(data) < 2:
        raise TruncatedFileError(f"{path}: not an image file")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise MagicError(f"{path}: expected P5 or P6, found {magic!r}")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_header_token(data, pos)
        fields.append(tok)
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise ParseError(f"{path}: non-numeric image header") from None
    if width < 1 or height < 1:
        raise ParseError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * channels
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise TruncatedFileError(f"{path}: expected {need} pixel bytes, found {len(raw)}")
    px = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return RasterImage(px.copy())


# ----------------------------------------------------------------------
# annotation sidecars

_ABSENT = -1.0


def write_annotations(path, anns: Sequence[FaceAnnotation]) -> None:
    lines = []
    for ann in anns:
        parts = [repr(v) for v in ann.bbox]
        if ann.landmarks is None:
            parts.extend(["-1"] * 10)
        else:
            for x, y in ann.landmarks:
                parts.append(repr(x))
                parts.append(repr(y))
        lines.append(" ".join(parts))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_annotations(path) -> list[FaceAnnotation]:
    anns = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (4, 14):
            raise ParseError(
                f"{path}:{lineno}: expected 4 or 14 fields, got {len(fields)}"
            )
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-numeric field") from None
        bbox = tuple(vals[:4])
        landmarks = None
        if len(vals) == 14 and not all(v == _ABSENT for v in vals[4:]):
            pts = vals[4:]
            landmarks = tuple((pts[i], pts[i + 1]) for i in range(0, 10, 2))
        try:
            anns.append(FaceAnnotation(bbox=bbox, landmarks=landmarks))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return anns
