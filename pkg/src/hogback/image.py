"""Image container and PNG/PGM I/O.

Pixel data is stored as float64 in [0, 1] (intermediates produced by the
inverters may leave that range; saving clamps back). Grayscale images are
(h, w) arrays, color images (h, w, 3).
"""

from __future__ import annotations

import dataclasses

import numpy as np
from PIL import Image as PilImage

from .errors import DimensionError, IoError

# Rec. 601 luminance weights used everywhere color is collapsed to gray.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclasses.dataclass(frozen=True)
class Image:
    data: np.ndarray  # (h, w) or (h, w, 3) float64

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise DimensionError(f"expected (h, w) or (h, w, 3) pixel array, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DimensionError("pixel data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def to_gray(self) -> "Image":
        if self.channels == 1:
            return self
        return Image(self.data @ LUMA_WEIGHTS)

    def gray_array(self) -> np.ndarray:
        return self.to_gray().data


def luminance(arr: np.ndarray) -> np.ndarray:
    """Collapse an (h, w, 3) array to (h, w); pass 2-D arrays through."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    return arr @ LUMA_WEIGHTS


def load_image(path) -> Image:
    try:
        with PilImage.open(path) as im:
            if im.mode in ("L", "I;16", "I", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        raise IoError(f"cannot read image: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot decode image {path}: {exc}") from exc
    return Image(arr)


def save_image(image: Image, path) -> None:
    """Write PNG or PGM (by extension), clamping to [0,1] and quantizing to 8 bits."""
    arr = np.clip(image.data, 0.0, 1.0)
    quant = (arr * 255.0 + 0.5).astype(np.uint8)
    pil = PilImage.fromarray(quant, mode="L" if image.channels == 1 else "RGB")
    suffix = str(path).lower()
    if suffix.endswith((".pgm", ".ppm")):
        if image.channels == 3 and suffix.endswith(".pgm"):
            pil = pil.convert("L")
    try:
        pil.save(path)
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (h, w) or (h, w, 3) float array."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        pil = PilImage.fromarray(arr.astype(np.float32), mode="F")
        out = pil.resize((out_w, out_h), PilImage.BILINEAR)
        return np.asarray(out, dtype=np.float64)
    chans = [resize(arr[:, :, c], out_h, out_w) for c in range(arr.shape[2])]
    return np.stack(chans, axis=2)


def display_rescale(arr: np.ndarray, lo_pct: float = 1.0, hi_pct: float = 99.0) -> np.ndarray:
    """Affinely map the [lo_pct, hi_pct] percentile range to [0, 1] and clip.

    HOG discards absolute intensity, so inverter outputs are only defined up
    to an affine map; this fixes the display convention.
    """
    lo = np.percentile(arr, lo_pct)
    hi = np.percentile(arr, hi_pct)
    if hi - lo < 1e-12:
        return np.full_like(np.asarray(arr, dtype=np.float64), 0.5)
    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0)
