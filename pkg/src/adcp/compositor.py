"""Band rendering and linear fusion of a translucent patch with a clean image.

Images are plain ``uint8`` arrays of shape ``(height, width, 3)`` in RGB
order; coverage masks are ``float64`` arrays of shape ``(height, width)``
with values in [0, 1]. Compositing blends, per pixel and channel,

    out = (1 - opacity * coverage) * in + opacity * coverage * color

in float arithmetic, then quantizes to 8 bits with round-half-away-from-zero
so results are bit-reproducible across platforms.
"""

from __future__ import annotations

from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image as PILImage

from .patch_model import PatchParams


def require_rgb8(img: np.ndarray) -> np.ndarray:
    """Validate the internal image format: (h, w, 3) uint8 with h, w > 0."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 image, got shape {img.shape} dtype {img.dtype}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ValueError("zero-area image")
    return img


def band_centers(params: PatchParams, dims: Tuple[int, int]) -> np.ndarray:
    """Per-row horizontal center of the band, in pixels.

    Row 0 is anchored at ``ps1_x * w`` and the last row at ``ps2_x * w``;
    rows in between interpolate linearly. ``dims`` is (width_px, height_px).
    """
    w, h = dims
    if w <= 0 or h <= 0:
        raise ValueError("zero-area image")
    if h == 1:
        t = np.zeros(1)
    else:
        t = np.arange(h) / (h - 1)
    return (params.ps1_x + (params.ps2_x - params.ps1_x) * t) * w


def patch_mask(params: PatchParams, dims: Tuple[int, int]) -> np.ndarray:
    """Render the band's per-pixel coverage for an image of size ``dims`` (w, h).

    Interior pixels get coverage 1; boundary pixels get fractional coverage
    from the clamped signed distance between the pixel center and the band
    edge, which removes staircase sensitivity at the band borders. The band
    is clipped to the image extents.
    """
    w, h = dims
    centers = band_centers(params, dims)          # (h,)
    half = params.width * w / 2.0
    x_centers = np.arange(w) + 0.5                # (w,)
    dist = np.abs(x_centers[None, :] - centers[:, None])
    return np.clip(half + 0.5 - dist, 0.0, 1.0)


def coverage_fraction(mask: np.ndarray) -> float:
    """Mean coverage over the image, i.e. patch area as a fraction of the frame."""
    return float(np.mean(mask))


def composite(image: np.ndarray, params: PatchParams) -> np.ndarray:
    """Fuse the band with a clean image; the input array is left untouched."""
    image = require_rgb8(image)
    h, w = image.shape[:2]
    mask = patch_mask(params, (w, h))
    alpha = (params.opacity * mask)[:, :, None]
    color = np.array(params.quantized_color(), dtype=float)
    out = (1.0 - alpha) * image.astype(float) + alpha * color
    return quantize_u8(out)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero to uint8."""
    clipped = np.clip(values, 0.0, 255.0)
    return np.floor(clipped + 0.5).astype(np.uint8)


def load_image(path: Union[str, Path]) -> np.ndarray:
    """Read a PNG or JPEG file into the internal RGB format."""
    with PILImage.open(path) as im:
        return require_rgb8(np.asarray(im.convert("RGB")))


def save_png(image: np.ndarray, path: Union[str, Path]) -> None:
    """Write losslessly; PNG is the only supported output format."""
    image = require_rgb8(image)
    PILImage.fromarray(image, mode="RGB").save(path, format="PNG")


def png_bytes(image: np.ndarray) -> bytes:
    """PNG-encode in memory (wire format for detector oracles)."""
    import io

    image = require_rgb8(image)
    buf = io.BytesIO()
    PILImage.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
