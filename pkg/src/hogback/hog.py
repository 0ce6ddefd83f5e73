"""31-channel HOG descriptors (the DPM variant) plus glyph rendering.

Channel layout per cell, for the default 9 orientations:
  [0, 18)   contrast-sensitive (signed) orientation channels
  [18, 27)  contrast-insensitive (unsigned) orientation channels
  [27, 31)  texture-energy channels, one per 2x2 normalization block

Boundary cells are dropped: a (h, w) image yields (h // cell - 2) x
(w // cell - 2) output cells, and conversely a descriptor of c cells maps
back to (c + 2) * cell pixels per side.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import kernels
from .errors import DimensionError
from .image import Image

# Small epsilon in the block-normalization denominator; kept tiny so that
# multiplicative gain cancels to well below the 1e-5 contract.
NORM_EPS = 1e-12

# Quadrant order for the four 2x2 normalization blocks around a cell,
# as (sign_y, sign_x). Texture channels 27..30 follow this order.
BLOCK_QUADRANTS = ((-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclasses.dataclass(frozen=True)
class HogConfig:
    cell_size: int = 8
    orientations: int = 9  # unsigned bins; signed bins = 2x this
    truncation: float = 0.2

    def __post_init__(self):
        if self.cell_size < 2:
            raise DimensionError(f"cell_size must be >= 2, got {self.cell_size}")
        if self.orientations < 2:
            raise DimensionError(f"orientations must be >= 2, got {self.orientations}")

    @property
    def n_signed(self) -> int:
        return 2 * self.orientations

    @property
    def depth(self) -> int:
        return 3 * self.orientations + 4

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class HogDescriptor:
    data: np.ndarray  # (cells_y, cells_x, depth) float64
    cell_size: int = 8

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionError(f"descriptor data must be 3-D, got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def cells_y(self) -> int:
        return self.data.shape[0]

    @property
    def cells_x(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[2]

    @property
    def pixel_shape(self) -> tuple[int, int]:
        """Pixel geometry of the image window this descriptor came from."""
        return ((self.cells_y + 2) * self.cell_size, (self.cells_x + 2) * self.cell_size)

    def flat(self) -> np.ndarray:
        return self.data.ravel()


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centered differences on the interior, one-sided at the borders."""
    dx = np.empty_like(gray)
    dy = np.empty_like(gray)
    dx[:, 1:-1] = gray[:, 2:] - gray[:, :-2]
    dx[:, 0] = gray[:, 1] - gray[:, 0]
    dx[:, -1] = gray[:, -1] - gray[:, -2]
    dy[1:-1, :] = gray[2:, :] - gray[:-2, :]
    dy[0, :] = gray[1, :] - gray[0, :]
    dy[-1, :] = gray[-1, :] - gray[-2, :]
    return dx, dy


def _pixel_gradients(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if arr.ndim == 2:
        return gradients(arr)
    # Color: per pixel, keep the channel with the largest gradient magnitude.
    dxs = np.empty_like(arr)
    dys = np.empty_like(arr)
    for c in range(arr.shape[2]):
        dxs[:, :, c], dys[:, :, c] = gradients(arr[:, :, c])
    mag = dxs * dxs + dys * dys
    pick = np.argmax(mag, axis=2)
    take = np.take_along_axis
    return (
        take(dxs, pick[:, :, None], axis=2)[:, :, 0],
        take(dys, pick[:, :, None], axis=2)[:, :, 0],
    )


def compute_hog(image, config: HogConfig = HogConfig()) -> HogDescriptor:
    """Compute the HOG descriptor of an image (Image or float array).

    Color input is handled with the max-gradient-magnitude channel rule;
    callers that want the luminance convention convert first.
    """
    arr = image.data if isinstance(image, Image) else np.ascontiguousarray(image, dtype=np.float64)
    sbin = config.cell_size
    h, w = arr.shape[:2]
    if h < 3 * sbin or w < 3 * sbin:
        raise DimensionError(
            f"image {h}x{w} too small for one interior cell at cell_size {sbin}"
        )

    dx, dy = _pixel_gradients(arr)
    hist = kernels.bin_cells(
        np.ascontiguousarray(dx), np.ascontiguousarray(dy), sbin, config.n_signed
    )
    return HogDescriptor(_normalize_cells(hist, config), cell_size=sbin)


def _normalize_cells(hist: np.ndarray, config: HogConfig) -> np.ndarray:
    """Block-normalize signed cell histograms into the 31-channel descriptor."""
    n_or = config.orientations
    n_signed = config.n_signed
    trunc = config.truncation
    by, bx = hist.shape[:2]
    if by < 3 or bx < 3:
        raise DimensionError("need at least a 3x3 cell grid for one output cell")

    unsigned = hist[:, :, :n_or] + hist[:, :, n_or:n_signed]
    energy = np.sum(unsigned**2, axis=2)

    out = np.zeros((by - 2, bx - 2, config.depth))
    ys = np.arange(1, by - 1)
    xs = np.arange(1, bx - 1)
    cen = hist[1:-1, 1:-1]  # (by-2, bx-2, n_signed)
    cen_u = unsigned[1:-1, 1:-1]

    for k, (sy, sx) in enumerate(BLOCK_QUADRANTS):
        block = (
            energy[np.ix_(ys, xs)]
            + energy[np.ix_(ys + sy, xs)]
            + energy[np.ix_(ys, xs + sx)]
            + energy[np.ix_(ys + sy, xs + sx)]
        )
        scale = 1.0 / np.sqrt(block + NORM_EPS)
        hs = np.minimum(cen * scale[:, :, None], trunc)
        hu = np.minimum(cen_u * scale[:, :, None], trunc)
        out[:, :, :n_signed] += 0.5 * hs
        out[:, :, n_signed : n_signed + n_or] += 0.5 * hu
        out[:, :, n_signed + n_or + k] = 0.2357 * np.sum(hs, axis=2)
    return out


def positive_part(descriptor: HogDescriptor) -> HogDescriptor:
    """Elementwise clamp at zero; used to visualize learned detector weights."""
    return HogDescriptor(np.maximum(descriptor.data, 0.0), cell_size=descriptor.cell_size)


def _draw_segment(canvas: np.ndarray, r0: int, c0: int, r1: int, c1: int, value: float) -> None:
    """Bresenham line, combining by max so crossing segments keep the brighter."""
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    r, c = r0, c0
    if dc >= dr:
        err = dc // 2
        for _ in range(dc + 1):
            canvas[r, c] = max(canvas[r, c], value)
            c += sc
            err -= dr
            if err < 0:
                r += sr
                err += dc
    else:
        err = dr // 2
        for _ in range(dr + 1):
            canvas[r, c] = max(canvas[r, c], value)
            r += sr
            err -= dc
            if err < 0:
                c += sc
                err += dr


def render_glyph(
    descriptor: HogDescriptor, cell_pixels: int = 20, config: HogConfig = HogConfig()
) -> Image:
    """Render the black-and-white oriented-line diagram of a descriptor.

    Uses only the unsigned orientation channels; each bin is drawn as a line
    through the cell center perpendicular to its gradient orientation, with
    intensity proportional to the bin weight. The whole diagram is scaled so
    its maximum is 1 whenever any weight is positive.
    """
    if cell_pixels < 8:
        raise DimensionError(f"cell_pixels must be >= 8, got {cell_pixels}")
    n_or = config.orientations
    n_signed = config.n_signed
    weights = np.maximum(descriptor.data[:, :, n_signed : n_signed + n_or], 0.0)

    canvas = np.zeros((descriptor.cells_y * cell_pixels, descriptor.cells_x * cell_pixels))
    half = cell_pixels / 2.0 - 1.0
    for cy in range(descriptor.cells_y):
        for cx in range(descriptor.cells_x):
            rc = cy * cell_pixels + cell_pixels // 2
            cc = cx * cell_pixels + cell_pixels // 2
            for o in range(n_or):
                wgt = weights[cy, cx, o]
                if wgt <= 0.0:
                    continue
                # Edge direction is perpendicular to the gradient orientation.
                psi = o * np.pi / n_or + np.pi / 2.0
                drow = half * np.sin(psi)
                dcol = half * np.cos(psi)
                _draw_segment(
                    canvas,
                    int(round(rc - drow)),
                    int(round(cc - dcol)),
                    int(round(rc + drow)),
                    int(round(cc + dcol)),
                    wgt,
                )
    peak = canvas.max()
    if peak > 0:
        canvas /= peak
    return Image(canvas)
