"""Evaluation harness: normalized cross correlation scoring, per-category
benchmark tables, template-size sweeps, and feature-space error.

Algorithms are passed as a name -> callable map; each callable takes a
HogDescriptor and returns an Image. The harness owns cropping, resizing,
feature computation, scoring, and report serialization, so every inverter
is benchmarked under identical conditions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import warnings
from pathlib import Path

import numpy as np
from scipy.ndimage import laplace

from .errors import ConfigError, DimensionError, EmptyCorpusError
from .hog import HogConfig, HogDescriptor, compute_hog
from .image import Image, luminance, resize

CONTEXT_PAD = 16


def ncc(a, b) -> float:
    """Zero-mean, unit-norm correlation of two equally sized images.

    Channels are collapsed to luminance first. Defined as 0 when either
    input has no variance.
    """
    x = luminance(a.data if isinstance(a, Image) else np.asarray(a, float))
    y = luminance(b.data if isinstance(b, Image) else np.asarray(b, float))
    if x.shape != y.shape:
        raise DimensionError(f"ncc shape mismatch: {x.shape} vs {y.shape}")
    xc = x - x.mean()
    yc = y - y.mean()
    nx = np.linalg.norm(xc)
    nyv = np.linalg.norm(yc)
    if nx == 0.0 or nyv == 0.0:
        return 0.0
    return float(xc.ravel() @ yc.ravel() / (nx * nyv))


def feature_error(x_hat, y: HogDescriptor, config: HogConfig = HogConfig()) -> float:
    """Euclidean distance between the reconstruction's descriptor and y."""
    arr = x_hat.data if isinstance(x_hat, Image) else np.asarray(x_hat, float)
    h = compute_hog(luminance(arr), config)
    if h.data.shape != y.data.shape:
        raise DimensionError(
            f"reconstruction descriptor {h.data.shape[:2]} does not match "
            f"target {y.data.shape[:2]}"
        )
    return float(np.linalg.norm(h.data.ravel() - y.data.ravel()))


def highpass_energy(img) -> float:
    """Variance of the Laplacian-filtered image; a proxy for sharpness."""
    arr = luminance(img.data if isinstance(img, Image) else np.asarray(img, float))
    return float(np.var(laplace(arr)))


@dataclasses.dataclass
class BenchmarkReport:
    rows: dict  # (category, algorithm) -> {"mean": .., "std": .., "count": ..}
    per_patch: list  # dicts: {image, x, y, w, h, category, algorithm, ncc}
    metadata: dict

    def __post_init__(self):
        for key, row in self.rows.items():
            if not (-1.0 - 1e-12 <= row["mean"] <= 1.0 + 1e-12) or row["count"] <= 0:
                raise DimensionError(f"invalid benchmark row {key}: {row}")

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf,
            fieldnames=["image", "x", "y", "w", "h", "category", "algorithm", "ncc"],
            lineterminator="\n",
        )
        writer.writeheader()
        for rec in self.per_patch:
            writer.writerow({k: rec[k] for k in writer.fieldnames})
        return buf.getvalue()

    def markdown_text(self) -> str:
        lines = ["| category | algorithm | mean NCC | std | count |",
                 "| --- | --- | --- | --- | --- |"]
        for (cat, algo) in sorted(self.rows):
            row = self.rows[(cat, algo)]
            lines.append(
                f"| {cat} | {algo} | {row['mean']:.4f} | {row['std']:.4f} "
                f"| {row['count']} |"
            )
        return "\n".join(lines) + "\n"

    def write(self, csv_path=None, md_path=None) -> None:
        if csv_path is not None:
            Path(csv_path).write_text(self.csv_text())
        if md_path is not None:
            Path(md_path).write_text(self.markdown_text())

    def mean_over(self, algorithm: str) -> float:
        vals = [r["ncc"] for r in self.per_patch if r["algorithm"] == algorithm]
        return float(np.mean(vals))


def _patch_crop(gray, rec, pad, out_h, out_w):
    """Crop the annotated box with context padding, clipped to the image,
    then resize to the requested raster."""
    h, w = gray.shape
    x0 = max(0, int(rec["x"]) - pad)
    y0 = max(0, int(rec["y"]) - pad)
    x1 = min(w, int(rec["x"]) + int(rec["w"]) + pad)
    y1 = min(h, int(rec["y"]) + int(rec["h"]) + pad)
    if x1 <= x0 or y1 <= y0:
        raise DimensionError(f"annotation box outside image: {rec}")
    return resize(gray[y0:y1, x0:x1], out_h, out_w)


def _load_gray_map(corpus):
    """Map image name -> grayscale array for annotation lookup."""
    out = {}
    for i in range(len(corpus)):
        name = corpus.entries[i]["path"]
        out[name] = luminance(corpus.load(i).data)
    return out


def run_benchmark(
    corpus,
    algorithms: dict,
    seed: int = 0,
    cells: int = 8,
    pad: int = CONTEXT_PAD,
    config: HogConfig = HogConfig(),
) -> BenchmarkReport:
    """Invert every annotated patch with every algorithm and score NCC
    against the source crop."""
    for name, fn in algorithms.items():
        if not callable(fn):
            raise ConfigError(f"algorithm {name!r} has no trained model")
    records = corpus.annotations()
    if not records:
        raise EmptyCorpusError("benchmark corpus has no annotated patches")
    grays = _load_gray_map(corpus)
    side = (cells + 2) * config.cell_size

    per_patch = []
    for rec in records:
        gray = grays.get(rec["image"])
        if gray is None:
            raise ConfigError(f"annotation references unknown image {rec['image']}")
        crop = _patch_crop(gray, rec, pad, side, side)
        y = compute_hog(crop, config)
        for name in sorted(algorithms):
            inverted = algorithms[name](y)
            score = ncc(inverted, Image(crop))
            per_patch.append(
                {
                    "image": rec["image"],
                    "x": rec["x"],
                    "y": rec["y"],
                    "w": rec["w"],
                    "h": rec["h"],
                    "category": rec.get("category", "unknown"),
                    "algorithm": name,
                    "ncc": score,
                }
            )

    rows = {}
    for rec in per_patch:
        rows.setdefault((rec["category"], rec["algorithm"]), []).append(rec["ncc"])
    rows = {
        key: {
            "mean": float(np.mean(v)),
            "std": float(np.std(v)),
            "count": len(v),
        }
        for key, v in rows.items()
    }
    return BenchmarkReport(
        rows=rows,
        per_patch=per_patch,
        metadata={"seed": seed, "cells": cells, "pad": pad, "n_patches": len(records)},
    )


def size_sweep(
    corpus,
    algorithm,
    sizes=(5, 10, 20),
    pad: int = CONTEXT_PAD,
    config: HogConfig = HogConfig(),
) -> dict:
    """Mean NCC per template size (cells per side) over the annotated
    patches; sizes whose rasters exceed the source crop are skipped."""
    records = corpus.annotations()
    if not records:
        raise EmptyCorpusError("sweep corpus has no annotated patches")
    grays = _load_gray_map(corpus)

    out = {}
    for cells in sizes:
        side = (cells + 2) * config.cell_size
        scores = []
        skipped = 0
        for rec in records:
            gray = grays[rec["image"]]
            if side > int(rec["w"]) + 2 * pad or side > int(rec["h"]) + 2 * pad:
                skipped += 1
                continue
            crop = _patch_crop(gray, rec, pad, side, side)
            y = compute_hog(crop, config)
            scores.append(ncc(algorithm(y), Image(crop)))
        if skipped:
            warnings.warn(f"size {cells}: skipped {skipped} undersized patches")
        if scores:
            out[cells] = {"mean": float(np.mean(scores)), "count": len(scores)}
    return out
