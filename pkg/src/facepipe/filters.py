"""Image enhancement for low-quality footage.

The chain applied before recognition is a small median filter to knock out
impulse noise, an adaptive local-statistics restoration step for blur and
sensor noise, and an affine normalization of pixel values. Each step is
also usable on its own.

All filtering runs per channel with replicate edge padding, so output
dimensions always match the input.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import ndimage

from .raster import RasterImage


def _check_window(img: RasterImage, window: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if window > min(img.width, img.height):
        raise ValueError(
            f"window {window} exceeds smaller image dimension "
            f"{min(img.width, img.height)}"
        )


def median_filter(img: RasterImage, window: int = 3) -> RasterImage:
    """Per-channel median with a square window and replicate padding.

    Keeps the input's storage type: uint8 in, uint8 out.
    """
    _check_window(img, window)
    out = ndimage.median_filter(img.pixels, size=(window, window, 1), mode="nearest")
    return RasterImage(out)


def wiener_restore(
    img: RasterImage,
    window: int = 3,
    noise_variance: Optional[float] = None,
) -> RasterImage:
    """Adaptive local-statistics restoration (Wiener style).

    For each pixel, with local mean ``m`` and local variance ``v`` over the
    window and noise power ``n``::

        out = m + max(v - n, 0) / max(v, n) * (pixel - m)

    Flat regions collapse toward the local mean while detailed regions pass
    through. When ``noise_variance`` is omitted it is estimated as the mean
    of the local variances. Operates on the unit-interval scale; uint8
    input is converted first, and the result is float in [0, 1].
    """
    _check_window(img, window)
    if noise_variance is not None and noise_variance < 0:
        raise ValueError(f"noise_variance must be nonnegative, got {noise_variance}")
    x = img.to_unit_float().pixels
    size = (window, window, 1)
    m = ndimage.uniform_filter(x, size=size, mode="nearest")
    m2 = ndimage.uniform_filter(x * x, size=size, mode="nearest")
    v = np.maximum(m2 - m * m, 0.0)
    n = float(np.mean(v)) if noise_variance is None else float(noise_variance)
    # A fully flat image has v == n == 0; the gain is 0 there by convention.
    with np.errstate(invalid="ignore"):
        gain = np.nan_to_num(np.maximum(v - n, 0.0) / np.maximum(v, n), nan=0.0)
    out = np.clip(m + gain * (x - m), 0.0, 1.0)
    return RasterImage(out)


def normalize(img: RasterImage, mean: float, scale: float) -> RasterImage:
    """Affine value normalization: ``(stored_value - mean) * scale``.

    Works on the stored scale (0..255 for uint8 images, 0..1 for float
    images). The output is real-valued and deliberately not clamped, so it
    is marked unbounded.
    """
    if scale == 0:
        raise ValueError("scale must be nonzero")
    if not (np.isfinite(mean) and np.isfinite(scale)):
        raise ValueError("mean and scale must be finite")
    x = img.pixels.astype(np.float64)
    return RasterImage((x - mean) * scale, bounded=False)


def enhance_for_recognition(img: RasterImage) -> RasterImage:
    """Full preprocessing chain: median, adaptive restoration, normalize.

    Uses 3x3 windows, estimated noise power, and a final mapping of the
    unit interval onto [-1, 1]. A constant image comes out constant.
    """
    step = median_filter(img, window=3)
    step = wiener_restore(step, window=3, noise_variance=None)
    return normalize(step, mean=0.5, scale=2.0)
