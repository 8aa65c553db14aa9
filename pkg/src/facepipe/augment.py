"""Multi-scale crop augmentation for detector training data.

Each crop picks a random scale, resizes the whole frame so the fixed crop
window covers a different fraction of it, cuts a random window, and carries
the face annotations through the same transform. Faces that mostly fall
outside the window are kept but marked invalid.

Crops record the realized transform (resize factors and window origin) so
coordinates can be mapped back to the source frame exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import AugmentationError
from .raster import FaceAnnotation, RasterImage

log = logging.getLogger(__name__)

DEFAULT_SCALES = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class AugmentConfig:
    crop_size: int = 320
    scales: tuple[float, ...] = DEFAULT_SCALES
    crops_per_image: int = 25
    min_face_overlap: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.crop_size < 1:
            raise ValueError("crop_size must be positive")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be a non-empty sequence of positive factors")
        if self.crops_per_image < 1:
            raise ValueError("crops_per_image must be positive")
        if not 0.0 <= self.min_face_overlap <= 1.0:
            raise ValueError("min_face_overlap must lie in [0, 1]")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


@dataclass(frozen=True)
class CropResult:
    """One augmented crop plus the transform that produced it.

    Iterates as (image, annotations) so callers can unpack it like a pair;
    the transform fields support mapping coordinates back to the source.
    """

    image: RasterImage
    annotations: tuple[FaceAnnotation, ...]
    scale: float
    origin: tuple[int, int]
    factors: tuple[float, float]

    def __iter__(self) -> Iterator:
        yield self.image
        yield self.annotations


def resize_bilinear(img: RasterImage, new_height: int, new_width: int) -> RasterImage:
    """Bilinear resize with half-pixel sample centers and replicate edges."""
    if new_height < 1 or new_width < 1:
        raise ValueError("target dimensions must be positive")
    px = img.pixels
    h, w, _ = px.shape
    xs = (np.arange(new_width) + 0.5) * (w / new_width) - 0.5
    ys = (np.arange(new_height) + 0.5) * (h / new_height) - 0.5
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[np.newaxis, :, np.newaxis]
    fy = (ys - y0)[:, np.newaxis, np.newaxis]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    p = px.astype(np.float64)
    top = p[y0c][:, x0c] * (1.0 - fx) + p[y0c][:, x1c] * fx
    bottom = p[y1c][:, x0c] * (1.0 - fx) + p[y1c][:, x1c] * fx
    out = top * (1.0 - fy) + bottom * fy
    if img.is_integer:
        return RasterImage(np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8))
    return RasterImage(np.clip(out, 0.0, 1.0) if img.bounded else out, bounded=img.bounded)


def _transform_annotation(
    ann: FaceAnnotation,
    fx: float,
    fy: float,
    x_origin: int,
    y_origin: int,
    crop_size: int,
    min_overlap: float,
) -> FaceAnnotation:
    x0, y0, x1, y1 = ann.bbox
    # Into resized-image coordinates, then into the crop window.
    bx0 = x0 * fx - x_origin
    by0 = y0 * fy - y_origin
    bx1 = x1 * fx - x_origin
    by1 = y1 * fy - y_origin
    full_area = max(bx1 - bx0, 0.0) * max(by1 - by0, 0.0)
    cx0 = min(max(bx0, 0.0), float(crop_size))
    cy0 = min(max(by0, 0.0), float(crop_size))
    cx1 = min(max(bx1, 0.0), float(crop_size))
    cy1 = min(max(by1, 0.0), float(crop_size))
    clipped_area = max(cx1 - cx0, 0.0) * max(cy1 - cy0, 0.0)
    valid = ann.valid and full_area > 0.0 and clipped_area >= min_overlap * full_area
    landmarks = None
    if ann.landmarks is not None:
        landmarks = tuple(
            (lx * fx - x_origin, ly * fy - y_origin) for lx, ly in ann.landmarks
        )
    return FaceAnnotation(bbox=(cx0, cy0, cx1, cy1), landmarks=landmarks, valid=valid)


def multiscale_augment(
    img: RasterImage,
    annotations: Sequence[FaceAnnotation],
    config: AugmentConfig = AugmentConfig(),
) -> list[CropResult]:
    """Produce ``config.crops_per_image`` random crops at random scales.

    A scale is feasible when the resized frame still contains the crop
    window; infeasible draws are logged and redrawn. If no configured
    scale is feasible for this image the whole call fails.
    """
    rng = np.random.Generator(np.random.PCG64(config.rng_seed))
    size = config.crop_size
    w, h = img.width, img.height

    def resized_dims(s: float) -> tuple[int, int]:
        return int(round(h / s)), int(round(w / s))

    if not any(
        rh >= size and rw >= size for rh, rw in (resized_dims(s) for s in config.scales)
    ):
        raise AugmentationError(
            f"no scale in {config.scales} fits a {size}px crop inside {w}x{h}"
        )

    resized_cache: dict[int, RasterImage] = {}
    crops: list[CropResult] = []
    for _ in range(config.crops_per_image):
        while True:
            idx = int(rng.integers(len(config.scales)))
            scale = config.scales[idx]
            new_h, new_w = resized_dims(scale)
            if new_h >= size and new_w >= size:
                break
            log.warning(
                "scale %.3g infeasible for %dx%d (resized %dx%d < crop %d), redrawing",
                scale, w, h, new_w, new_h, size,
            )
        x_origin = int(rng.integers(new_w - size + 1))
        y_origin = int(rng.integers(new_h - size + 1))
        if idx not in resized_cache:
            resized_cache[idx] = resize_bilinear(img, new_h, new_w)
        resized = resized_cache[idx]
        window = RasterImage(
            resized.pixels[y_origin : y_origin + size, x_origin : x_origin + size],
            bounded=resized.bounded,
        )
        # Rounding the resized dimensions changes the factor slightly, so
        # annotations use the realized factor rather than 1/scale.
        fx = new_w / w
        fy = new_h / h
        anns = tuple(
            _transform_annotation(a, fx, fy, x_origin, y_origin, size, config.min_face_overlap)
            for a in annotations
        )
        crops.append(
            CropResult(
                image=window,
                annotations=anns,
                scale=scale,
                origin=(x_origin, y_origin),
                factors=(fx, fy),
            )
        )
    return crops
