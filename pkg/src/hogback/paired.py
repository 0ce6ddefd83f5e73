"""Paired dictionary inversion, the main algorithm.

Training draws aligned (image patch, HOG patch) pairs from a corpus, stacks
each pair into one vector, and learns a single dictionary on the stack; the
row split of that dictionary gives a coupled pair (U, V) sharing coefficient
space. Inversion sparse-codes a HOG patch against V and decodes the same
coefficients through U. Full descriptors are handled by sliding a patch
window with stride one cell and averaging overlapping pixel predictions.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DimensionError, EmptyCorpusError, NumericalError
from .hog import HogConfig, HogDescriptor, compute_hog
from .image import Image, display_rescale, luminance
from .sparse import Dictionary, learn_dictionary, sparse_code


@dataclasses.dataclass
class PairedDictionary:
    u: Dictionary  # image-patch rows, dim (patch_cells*cell_size)^2 * channels
    v: Dictionary  # HOG-patch rows, dim patch_cells^2 * depth
    patch_cells: int
    channels: int
    lam: float
    scale_img: float  # image part divided by this during training
    scale_hog: float  # centered HOG part divided by this during training
    mean_hog: np.ndarray  # (v.dim,) global HOG patch mean
    mean_pixel: float  # global mean of removed per-patch pixel means
    hog_config: HogConfig = HogConfig()

    def __post_init__(self):
        sbin = self.hog_config.cell_size
        depth = self.hog_config.depth
        d_img = (self.patch_cells * sbin) ** 2 * self.channels
        d_hog = self.patch_cells**2 * depth
        if self.u.atoms != self.v.atoms:
            raise DimensionError("paired dictionaries must share coefficient space")
        if self.u.dim != d_img or self.v.dim != d_hog:
            raise DimensionError(
                f"dictionary dims ({self.u.dim}, {self.v.dim}) inconsistent with "
                f"patch_cells={self.patch_cells}, channels={self.channels}"
            )
        if self.mean_hog.shape != (d_hog,):
            raise DimensionError("mean_hog length does not match the HOG patch dim")

    @property
    def patch_pixels(self) -> int:
        return self.patch_cells * self.hog_config.cell_size

    def config_dict(self) -> dict:
        return {
            "patch_cells": self.patch_cells,
            "channels": self.channels,
            "lambda": self.lam,
            "hog": self.hog_config.to_dict(),
        }

    def to_tensors(self):
        scalars = np.array([self.scale_img, self.scale_hog, self.mean_pixel])
        return (
            {
                "u": self.u.matrix,
                "v": self.v.matrix,
                "mean_hog": self.mean_hog,
                "scalars": scalars,
                "objectives": np.asarray(self.u.training_objectives, dtype=np.float64),
            },
            {"config": self.config_dict()},
        )

    @classmethod
    def from_tensors(cls, tensors, meta):
        cfg = meta["config"]
        objs = tuple(float(o) for o in tensors["objectives"])
        return cls(
            u=Dictionary(tensors["u"], training_objectives=objs),
            v=Dictionary(tensors["v"], training_objectives=objs),
            patch_cells=int(cfg["patch_cells"]),
            channels=int(cfg["channels"]),
            lam=float(cfg["lambda"]),
            scale_img=float(tensors["scalars"][0]),
            scale_hog=float(tensors["scalars"][1]),
            mean_hog=tensors["mean_hog"],
            mean_pixel=float(tensors["scalars"][2]),
            hog_config=HogConfig(**cfg["hog"]),
        )


def sample_pairs(
    corpus,
    patch_cells: int = 5,
    n_samples: int = 10000,
    channels: int = 1,
    seed: int = 0,
    config: HogConfig = HogConfig(),
):
    """Draw aligned (image patch, HOG patch) sample matrices from a corpus.

    Returns (X, Y): X is (patch_px^2 * channels, n) with per-patch means
    removed, Y is (patch_cells^2 * depth, n) uncentered. Also returns the
    mean of the removed patch means.
    """
    if channels not in (1, 3):
        raise DimensionError("channels must be 1 or 3")
    sbin = config.cell_size
    ppx = patch_cells * sbin
    sources = []
    for item in corpus:
        arr = item.data if isinstance(item, Image) else np.asarray(item, float)
        gray = luminance(arr)
        h, w = gray.shape
        hcy, hcx = h // sbin - 2, w // sbin - 2
        if hcy < patch_cells or hcx < patch_cells:
            continue
        if channels == 3:
            pix = arr if arr.ndim == 3 else np.repeat(arr[:, :, None], 3, axis=2)
        else:
            pix = gray
        sources.append((pix, compute_hog(gray, config).data))
    if not sources:
        raise EmptyCorpusError("no corpus image is large enough for one patch window")

    rng = np.random.default_rng(seed)
    X = np.empty((ppx * ppx * channels, n_samples))
    Y = np.empty((patch_cells * patch_cells * config.depth, n_samples))
    means = np.empty(n_samples)
    for i in range(n_samples):
        pix, H = sources[int(rng.integers(len(sources)))]
        hcy, hcx = H.shape[:2]
        iy = int(rng.integers(hcy - patch_cells + 1))
        ix = int(rng.integers(hcx - patch_cells + 1))
        py, px = (iy + 1) * sbin, (ix + 1) * sbin
        patch = np.asarray(pix[py : py + ppx, px : px + ppx], dtype=np.float64)
        m = patch.mean()
        means[i] = m
        X[:, i] = (patch - m).ravel()
        Y[:, i] = H[iy : iy + patch_cells, ix : ix + patch_cells].ravel()
    return X, Y, float(means.mean())


def train_paired(
    corpus,
    patch_cells: int = 5,
    k: int = 256,
    lam: float | None = None,
    n_samples: int = 10000,
    channels: int = 1,
    epochs: int = 5,
    seed: int = 0,
    config: HogConfig = HogConfig(),
    threads: int = 1,
) -> PairedDictionary:
    """Learn coupled image/HOG dictionaries from a corpus.

    Each sample pair is stacked into one vector after balancing the two
    parts to equal average squared norm, so the joint objective weighs the
    image and feature residuals equally.
    """
    X, Y, mean_pixel = sample_pairs(
        corpus, patch_cells, n_samples, channels, seed, config
    )
    mean_hog = Y.mean(axis=1)
    Yc = Y - mean_hog[:, None]

    s_img = float(np.sqrt(np.mean(np.sum(X * X, axis=0))))
    s_hog = float(np.sqrt(np.mean(np.sum(Yc * Yc, axis=0))))
    if s_img <= 0.0 or s_hog <= 0.0:
        raise NumericalError("degenerate training sample: zero variance in one part")

    stacked = np.vstack([X / s_img, Yc / s_hog])
    if lam is None:
        # The stacked samples are normalized to average squared norm 2
        # regardless of dimension, so the budget is a constant rather than
        # the sqrt(dim) heuristic; 2.0 keeps codes sparse (and coding fast)
        # without starving the reconstruction.
        lam = 2.0
    d = learn_dictionary(
        stacked, k=k, lam=lam, epochs=epochs, seed=seed, threads=threads
    )
    d_img = X.shape[0]
    return PairedDictionary(
        u=Dictionary(d.matrix[:d_img], training_objectives=d.training_objectives),
        v=Dictionary(d.matrix[d_img:], training_objectives=d.training_objectives),
        patch_cells=patch_cells,
        channels=channels,
        lam=lam,
        scale_img=s_img,
        scale_hog=s_hog,
        mean_hog=mean_hog,
        mean_pixel=mean_pixel,
        hog_config=config,
    )


def invert_patch(pd: PairedDictionary, y_patch: np.ndarray, gram=None) -> np.ndarray:
    """Invert one HOG patch vector; returns the pixel patch as
    (patch_px, patch_px) or (patch_px, patch_px, 3)."""
    y_patch = np.asarray(y_patch, dtype=np.float64).ravel()
    if y_patch.shape[0] != pd.v.dim:
        raise DimensionError(
            f"HOG patch length {y_patch.shape[0]} != dictionary dim {pd.v.dim}"
        )
    z = (y_patch - pd.mean_hog) / pd.scale_hog
    code = sparse_code(pd.v, z, pd.lam, gram=gram)
    flat = pd.u.matrix @ code.coefficients * pd.scale_img + pd.mean_pixel
    ppx = pd.patch_pixels
    if pd.channels == 3:
        return flat.reshape(ppx, ppx, 3)
    return flat.reshape(ppx, ppx)


def invert(
    pd: PairedDictionary, y: HogDescriptor, threads: int = 1, display: bool = True
) -> Image:
    """Invert a full descriptor by patchwork assembly.

    Slides a patch_cells window with stride one cell, inverts each
    subpatch, and averages overlapping pixel predictions. The raster is the
    descriptor's inverse geometry; its outer one-cell border is not covered
    by any patch (patches span cells only, not the boundary band) and is
    filled by replicating the nearest covered pixel.
    """
    pc = pd.patch_cells
    if y.depth != pd.hog_config.depth or y.cell_size != pd.hog_config.cell_size:
        raise DimensionError("descriptor depth/cell_size does not match the model")
    if y.cells_y < pc or y.cells_x < pc:
        raise DimensionError("descriptor smaller than one dictionary patch")
    sbin = pd.hog_config.cell_size
    ppx = pd.patch_pixels
    out_h, out_w = (y.cells_y + 2) * sbin, (y.cells_x + 2) * sbin
    shape = (out_h, out_w, 3) if pd.channels == 3 else (out_h, out_w)
    acc = np.zeros(shape)
    cover = np.zeros((out_h, out_w))

    windows = [
        (iy, ix)
        for iy in range(y.cells_y - pc + 1)
        for ix in range(y.cells_x - pc + 1)
    ]
    gram = pd.v.gram()

    def patches_of(w):
        iy, ix = w
        return invert_patch(pd, y.data[iy : iy + pc, ix : ix + pc], gram=gram)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            patches = list(pool.map(patches_of, windows))
    else:
        patches = [patches_of(w) for w in windows]

    # Sequential accumulation in window order keeps the result bit-stable
    # for any worker count.
    for (iy, ix), patch in zip(windows, patches):
        py, px = (iy + 1) * sbin, (ix + 1) * sbin
        acc[py : py + ppx, px : px + ppx] += patch
        cover[py : py + ppx, px : px + ppx] += 1.0
    # The windows cover exactly the raster minus a one-cell band on every
    # side; replicate the band from the nearest covered pixel.
    c = cover[sbin:-sbin, sbin:-sbin]
    interior = acc[sbin:-sbin, sbin:-sbin] / (
        c[:, :, None] if pd.channels == 3 else c
    )
    pad = ((sbin, sbin), (sbin, sbin), (0, 0)) if pd.channels == 3 else sbin
    out = np.pad(interior, pad, mode="edge")
    return Image(display_rescale(out)) if display else Image(np.clip(out, 0.0, 1.0))
