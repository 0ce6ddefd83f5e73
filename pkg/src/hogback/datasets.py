"""Bundled desk-scale sample corpus built from scikit-image's data module.

Everything here works offline: the source images ship with scikit-image.
The builder writes PNG crops, a manifest, and a JSONL annotation file with
one category per source image, sized for tests and quick CLI demos rather
than paper-scale benchmarks.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .image import Image, resize, save_image
from .store import write_manifest

SOURCE_NAMES = (
    "camera",
    "astronaut",
    "coins",
    "moon",
    "page",
    "text",
    "chelsea",
    "coffee",
    "cat",
    "clock",
    "brick",
    "grass",
)

CROP_SIZE = 240


def _load_source(name: str) -> np.ndarray:
    import skimage.data

    arr = np.asarray(getattr(skimage.data, name)())
    return arr.astype(np.float64) / 255.0


def _crops(arr: np.ndarray, size: int, rng) -> list[np.ndarray]:
    h, w = arr.shape[:2]
    out = []
    for _ in range(2):
        if h < size or w < size:
            s = min(h, w)
            y = int(rng.integers(h - s + 1))
            x = int(rng.integers(w - s + 1))
            out.append(resize(arr[y : y + s, x : x + s], size, size))
        else:
            y = int(rng.integers(h - size + 1))
            x = int(rng.integers(w - size + 1))
            out.append(arr[y : y + size, x : x + size])
    return out


def build_sample_corpus(
    dest: str | Path,
    seed: int = 0,
    patches_per_image: int = 5,
    patch_size: int = 80,
) -> Path:
    """Write the sample corpus under dest; returns the manifest path.

    Produces two crops per source image, a manifest with hashes, and a
    JSONL annotation file whose categories are the source image names.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    names = []
    categories = []
    for source in SOURCE_NAMES:
        arr = _load_source(source)
        for j, crop in enumerate(_crops(arr, CROP_SIZE, rng)):
            name = f"{source}_{j}.png"
            save_image(Image(crop), dest / name)
            names.append(name)
            categories.append(source)

    records = []
    for name, category in zip(names, categories):
        for _ in range(patches_per_image):
            x = int(rng.integers(CROP_SIZE - patch_size + 1))
            y = int(rng.integers(CROP_SIZE - patch_size + 1))
            records.append(
                {
                    "image": name,
                    "x": x,
                    "y": y,
                    "w": patch_size,
                    "h": patch_size,
                    "category": category,
                }
            )
    ann_path = dest / "annotations.jsonl"
    ann_path.write_text("\n".join(json.dumps(r) for r in records) + "\n")

    manifest_path = dest / "manifest.json"
    write_manifest(manifest_path, dest, names, annotations="annotations.jsonl")
    return manifest_path
