"""Exemplar-LDA inversion: whiten the descriptor into a linear detector,
score it over a corpus pyramid with sliding windows, and average the top
detections.

The detector is w = Sigma^-1 (y - mu) using the background statistics of
the materialized Gaussian. Detections carry enough geometry to crop the
window's inverse-geometry pixel rectangle from the scaled image, so the
inversion is literally a mean of real image crops.
"""

from __future__ import annotations

import dataclasses
import heapq
import warnings

import numpy as np

from .errors import DimensionError, EmptyCorpusError, GeometryError
from .gaussian import MaterializedGaussian
from .hog import HogConfig, HogDescriptor, compute_hog
from .image import Image, display_rescale, luminance, resize

SCALE_STEP = 2.0 ** (-0.25)


@dataclasses.dataclass(frozen=True)
class Detection:
    image_id: int
    x: int  # left edge of the window's pixel rect, scaled-image coords
    y: int
    scale: float
    score: float

    def sort_key(self):
        """Total order: score descending, then image, position, scale."""
        return (-self.score, self.image_id, self.x, self.y, self.scale)


@dataclasses.dataclass(frozen=True)
class EldaTemplate:
    weights: np.ndarray  # (cells_y, cells_x, depth)
    cell_size: int = 8

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise DimensionError("template weights must be finite")

    @property
    def cells(self) -> tuple[int, int]:
        return self.weights.shape[0], self.weights.shape[1]

    @property
    def pixel_shape(self) -> tuple[int, int]:
        return (
            (self.weights.shape[0] + 2) * self.cell_size,
            (self.weights.shape[1] + 2) * self.cell_size,
        )


def make_template(g: MaterializedGaussian, y: HogDescriptor) -> EldaTemplate:
    """Whitened detector weights w solving (sigma_yy + lambda I) w = y - mu."""
    if (y.cells_y, y.cells_x) != (g.height_cells, g.width_cells) or y.depth != g.depth:
        raise DimensionError("descriptor geometry does not match the model")
    rhs = y.data.ravel() - g.mu_y
    w = g.solve_yy(rhs)
    return EldaTemplate(
        weights=w.reshape(y.cells_y, y.cells_x, y.depth), cell_size=g.cell_size
    )


def default_scales(template: EldaTemplate, max_pixels: int) -> list[float]:
    """Geometric ladder from 1.0 downward while the template still fits."""
    ph, pw = template.pixel_shape
    smallest = max(ph, pw) / max_pixels
    scales = []
    s = 1.0
    while s >= smallest and len(scales) < 64:
        scales.append(s)
        s *= SCALE_STEP
    return scales or [1.0]


def _score_map(H: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Dense window scores: sum over cell offsets of channel dot products."""
    tc_y, tc_x = w.shape[:2]
    hcy, hcx = H.shape[:2]
    ny, nx = hcy - tc_y + 1, hcx - tc_x + 1
    if ny <= 0 or nx <= 0:
        return np.zeros((0, 0))
    scores = np.zeros((ny, nx))
    for dy in range(tc_y):
        for dx in range(tc_x):
            scores += H[dy : dy + ny, dx : dx + nx] @ w[dy, dx]
    return scores


def sliding_scores(
    template: EldaTemplate,
    corpus,
    scales: list[float] | None = None,
    stride_cells: int = 1,
    config: HogConfig = HogConfig(),
) -> list[Detection]:
    """Score every stride-aligned window of every image at every scale."""
    if stride_cells < 1:
        raise GeometryError("stride must be at least one cell")
    sbin = template.cell_size
    detections = []
    n_images = 0
    for image_id, item in enumerate(_as_arrays(corpus)):
        n_images += 1
        gray = luminance(item)
        if scales is None:
            scale_list = default_scales(template, max(gray.shape))
        else:
            scale_list = scales
        for scale in scale_list:
            h = int(round(gray.shape[0] * scale))
            w = int(round(gray.shape[1] * scale))
            ph, pw = template.pixel_shape
            if h < ph or w < pw:
                continue
            scaled = gray if scale == 1.0 else resize(gray, h, w)
            H = compute_hog(scaled, config).data
            scores = _score_map(H, template.weights)
            for iy in range(0, scores.shape[0], stride_cells):
                for ix in range(0, scores.shape[1], stride_cells):
                    detections.append(
                        Detection(
                            image_id=image_id,
                            x=ix * sbin,
                            y=iy * sbin,
                            scale=scale,
                            score=float(scores[iy, ix]),
                        )
                    )
    if n_images == 0:
        raise EmptyCorpusError("sliding_scores needs a non-empty corpus")
    return detections


def _as_arrays(corpus):
    for item in corpus:
        yield item.data if isinstance(item, Image) else np.asarray(item, float)


def top_detections(detections: list[Detection], k: int) -> list[Detection]:
    """Streamed top-k selection under the deterministic total order."""
    heap = []
    for i, d in enumerate(detections):
        entry = tuple(-v for v in d.sort_key())  # min-heap keeps the best k
        if len(heap) < k:
            heapq.heappush(heap, (entry, i))
        elif entry > heap[0][0]:
            heapq.heapreplace(heap, (entry, i))
    picked = [detections[i] for _, i in heap]
    return sorted(picked, key=Detection.sort_key)


def _iou(a, b, ph, pw):
    ax0, ay0 = a.x / a.scale, a.y / a.scale
    ax1, ay1 = (a.x + pw) / a.scale, (a.y + ph) / a.scale
    bx0, by0 = b.x / b.scale, b.y / b.scale
    bx1, by1 = (b.x + pw) / b.scale, (b.y + ph) / b.scale
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def nms(detections: list[Detection], pixel_shape, iou_threshold: float = 0.5):
    """Greedy per-image suppression of overlapping windows (original-image
    coordinates, so overlap across pyramid scales counts)."""
    ph, pw = pixel_shape
    kept: list[Detection] = []
    for d in sorted(detections, key=Detection.sort_key):
        ok = True
        for other in kept:
            if other.image_id == d.image_id and _iou(d, other, ph, pw) > iou_threshold:
                ok = False
                break
        if ok:
            kept.append(d)
    return kept


def elda_invert(
    g: MaterializedGaussian,
    y: HogDescriptor,
    corpus,
    k: int = 100,
    scales: list[float] | None = None,
    config: HogConfig = HogConfig(),
    display: bool = True,
) -> Image:
    """Invert by averaging the top-k detection crops of the whitened
    detector over the corpus."""
    if k < 1:
        raise GeometryError("k must be at least 1")
    template = make_template(g, y)
    images = [im.data if isinstance(im, Image) else np.asarray(im, float) for im in corpus]
    detections = sliding_scores(template, images, scales, config=config)
    survivors = nms(detections, template.pixel_shape)
    if not survivors:
        raise EmptyCorpusError("no detections survived; corpus too small")
    if len(survivors) < k:
        warnings.warn(
            f"only {len(survivors)} detections available, requested top {k}"
        )
    picked = top_detections(survivors, min(k, len(survivors)))

    ph, pw = template.pixel_shape
    acc = np.zeros((ph, pw))
    for d in picked:
        gray = luminance(images[d.image_id])
        if d.scale == 1.0:
            scaled = gray
        else:
            scaled = resize(
                gray,
                int(round(gray.shape[0] * d.scale)),
                int(round(gray.shape[1] * d.scale)),
            )
        acc += scaled[d.y : d.y + ph, d.x : d.x + pw]
    out = acc / len(picked)
    return Image(display_rescale(out)) if display else Image(np.clip(out, 0.0, 1.0))
