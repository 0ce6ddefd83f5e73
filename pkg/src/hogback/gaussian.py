"""Stationary joint Gaussian over (pixels, HOG) and everything it powers:
ridge inversion, the ELDA whitening blocks, and the natural-image eigenbasis.

Stationarity ties every covariance parameter to a spatial offset, so moments
are estimated with offset-indexed sums pooled over all positions of all
corpus images (FFT autocorrelation for pixel-pixel and pixel-feature terms).
Dense mean/covariance blocks for a concrete template geometry are then just
table lookups, and marginalizing to a sub-template is block extraction.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.signal import fftconvolve

from .errors import (
    DimensionError,
    EmptyCorpusError,
    GeometryError,
    NumericalError,
)
from .hog import HogConfig, HogDescriptor, compute_hog
from .image import Image, display_rescale, luminance

# Dense pixel-pixel covariance blocks above this pixel count are skipped by
# default; nothing in the ridge path needs them.
SIGMA_XX_AUTO_LIMIT = 4096


@dataclasses.dataclass
class StationaryModel:
    mu_pixel: float
    mu_hog: np.ndarray  # (depth,)
    cov_pp: np.ndarray  # (2P-1, 2P-1), origin P-1
    cov_ph: np.ndarray  # (L, L, depth), origin max_cells * cell_size
    cov_hh: np.ndarray  # (2C-1, 2C-1, depth, depth), origin C-1
    max_cells: int
    cell_size: int
    sample_count: int
    hog_config: HogConfig = HogConfig()
    seed: int = 0

    @property
    def max_pixels(self) -> int:
        return (self.max_cells + 2) * self.cell_size

    @property
    def ph_origin(self) -> int:
        return self.max_cells * self.cell_size

    def config_dict(self) -> dict:
        return {
            "max_cells": self.max_cells,
            "cell_size": self.cell_size,
            "hog": self.hog_config.to_dict(),
            "seed": self.seed,
        }

    def to_tensors(self):
        scalars = np.array([self.mu_pixel, float(self.sample_count)])
        return (
            {
                "scalars": scalars,
                "mu_hog": self.mu_hog,
                "cov_pp": self.cov_pp,
                "cov_ph": self.cov_ph,
                "cov_hh": self.cov_hh,
            },
            {"config": self.config_dict()},
        )

    @classmethod
    def from_tensors(cls, tensors, meta):
        cfg = meta["config"]
        return cls(
            mu_pixel=float(tensors["scalars"][0]),
            mu_hog=tensors["mu_hog"],
            cov_pp=tensors["cov_pp"],
            cov_ph=tensors["cov_ph"],
            cov_hh=tensors["cov_hh"],
            max_cells=int(cfg["max_cells"]),
            cell_size=int(cfg["cell_size"]),
            sample_count=int(tensors["scalars"][1]),
            hog_config=HogConfig(**cfg["hog"]),
            seed=int(cfg.get("seed", 0)),
        )


def _cell_anchors(n_cells: int, sbin: int) -> np.ndarray:
    """Top-left pixel of each descriptor cell in template coordinates."""
    return (np.arange(n_cells) + 1) * sbin


def _add_centered(dest: np.ndarray, src: np.ndarray, src_center, dest_center) -> None:
    """dest[dest_center + d] += src[src_center + d] over the overlapping offsets."""
    dh, dw = dest.shape[:2]
    sh, sw = src.shape[:2]
    dy0 = -min(dest_center[0], src_center[0])
    dy1 = min(dh - dest_center[0], sh - src_center[0])
    dx0 = -min(dest_center[1], src_center[1])
    dx1 = min(dw - dest_center[1], sw - src_center[1])
    dest[
        dest_center[0] + dy0 : dest_center[0] + dy1,
        dest_center[1] + dx0 : dest_center[1] + dx1,
    ] += src[
        src_center[0] + dy0 : src_center[0] + dy1,
        src_center[1] + dx0 : src_center[1] + dx1,
    ]


def fit_stationary(
    corpus,
    config: HogConfig = HogConfig(),
    max_cells: int = 10,
    seed: int = 0,
) -> StationaryModel:
    """Estimate offset-indexed joint moments over a corpus of images.

    The corpus may be any iterable of Image / 2-D arrays; color images are
    collapsed to luminance. Images too small for one max_cells template are
    skipped. Deterministic given corpus order.

    Covariances use the tapered (biased) estimator: each image is centered
    by its own mean and every offset's product sum is divided by the
    zero-offset count. The Fourier transform of each per-image table is
    then a squared spectrum, so any dense block materialized from the
    tables is positive semidefinite by construction; the unbiased
    per-offset normalization does not have that property and produces
    badly indefinite matrices on small corpora. The between-image scatter
    of per-image means is added back as a constant (also a PSD stationary
    function), keeping the totals consistent covariance estimates.
    """
    sbin = config.cell_size
    depth = config.depth
    P = (max_cells + 2) * sbin
    C = max_cells
    L = (2 * max_cells + 1) * sbin
    o_ph = max_cells * sbin

    raw_pp = np.zeros((2 * P - 1, 2 * P - 1))
    n0_pp = 0
    raw_ph = np.zeros((L, L, depth))
    n0_ph = 0
    raw_hh = np.zeros((2 * C - 1, 2 * C - 1, depth, depth))
    n0_hh = 0
    image_means = []  # (pixel_count, pixel_mean, cell_count, hog_mean)
    sample_count = 0

    for item in corpus:
        gray = luminance(item.data if isinstance(item, Image) else np.asarray(item, float))
        h, w = gray.shape
        hcy, hcx = h // sbin - 2, w // sbin - 2
        if hcy < max_cells or hcx < max_cells:
            continue
        H = compute_hog(gray, config).data

        gmean = gray.mean()
        hmean = H.mean(axis=(0, 1))
        image_means.append((gray.size, gmean, hcy * hcx, hmean))
        sample_count += (hcy - max_cells + 1) * (hcx - max_cells + 1)

        gray_c = gray - gmean
        Hc = H - hmean

        # pixel-pixel: FFT autocorrelation of the centered image
        auto = fftconvolve(gray_c, gray_c[::-1, ::-1], mode="full")
        _add_centered(raw_pp, auto, (h - 1, w - 1), (P - 1, P - 1))
        n0_pp += gray.size

        # pixel-feature: correlate the centered image against per-channel
        # maps that are nonzero only at cell anchors
        ay = _cell_anchors(hcy, sbin)
        ax = _cell_anchors(hcx, sbin)
        hmap = np.zeros((h, w))
        for c in range(depth):
            hmap[:] = 0.0
            hmap[np.ix_(ay, ax)] = Hc[:, :, c]
            corr = fftconvolve(gray_c, hmap[::-1, ::-1], mode="full")
            _add_centered(raw_ph[:, :, c], corr, (h - 1, w - 1), (o_ph, o_ph))
        n0_ph += hcy * hcx

        # feature-feature: direct per-offset accumulation over the cell grid
        for dyc in range(0, C):
            for dxc in range(-(C - 1), C):
                if dyc == 0 and dxc < 0:
                    continue
                y0a, y1a = max(0, -dyc), min(hcy, hcy - dyc)
                x0a, x1a = max(0, -dxc), min(hcx, hcx - dxc)
                if y1a <= y0a or x1a <= x0a:
                    continue
                h1 = Hc[y0a:y1a, x0a:x1a].reshape(-1, depth)
                h2 = Hc[y0a + dyc : y1a + dyc, x0a + dxc : x1a + dxc].reshape(-1, depth)
                block = h1.T @ h2
                raw_hh[C - 1 + dyc, C - 1 + dxc] += block
                if dyc != 0 or dxc != 0:
                    raw_hh[C - 1 - dyc, C - 1 - dxc] += block.T
        n0_hh += hcy * hcx

    if not image_means:
        raise EmptyCorpusError("no corpus image is large enough for the template window")

    cnt_p = sum(m[0] for m in image_means)
    cnt_h = sum(m[2] for m in image_means)
    mu_p = sum(m[0] * m[1] for m in image_means) / cnt_p
    mu_h = sum(m[2] * m[3] for m in image_means) / cnt_h

    # Between-image scatter of per-image means, constant over offsets.
    btw_pp = sum(m[0] * (m[1] - mu_p) ** 2 for m in image_means) / cnt_p
    btw_ph = sum(m[2] * (m[1] - mu_p) * (m[3] - mu_h) for m in image_means) / cnt_h
    btw_hh = sum(
        m[2] * np.outer(m[3] - mu_h, m[3] - mu_h) for m in image_means
    ) / cnt_h

    cov_pp = raw_pp / n0_pp + btw_pp
    cov_ph = raw_ph / n0_ph + btw_ph[None, None, :]
    cov_hh = raw_hh / n0_hh + btw_hh[None, None, :, :]

    # Enforce the exact exchange symmetries the estimator has only up to
    # floating noise.
    cov_pp = 0.5 * (cov_pp + cov_pp[::-1, ::-1])
    cov_hh = 0.5 * (cov_hh + np.transpose(cov_hh[::-1, ::-1], (0, 1, 3, 2)))

    return StationaryModel(
        mu_pixel=float(mu_p),
        mu_hog=mu_h,
        cov_pp=cov_pp,
        cov_ph=cov_ph,
        cov_hh=cov_hh,
        max_cells=max_cells,
        cell_size=sbin,
        sample_count=int(sample_count),
        hog_config=config,
        seed=seed,
    )


@dataclasses.dataclass
class MaterializedGaussian:
    width_cells: int
    height_cells: int
    cell_size: int
    depth: int
    mu_x: np.ndarray  # (D,)
    mu_y: np.ndarray  # (d,)
    sigma_xy: np.ndarray  # (D, d)
    sigma_yy: np.ndarray  # (d, d)
    sigma_xx: np.ndarray | None = None  # (D, D) when materialized
    lambda_xx: float = 0.0
    lambda_yy: float = 0.0
    _yy_factor: object = dataclasses.field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = self.sigma_yy.shape[0]
        if self.sigma_yy.shape != (d, d) or self.sigma_xy.shape != (len(self.mu_x), d):
            raise DimensionError("inconsistent covariance block shapes")
        if not np.allclose(self.sigma_yy, self.sigma_yy.T, atol=1e-10):
            raise NumericalError("sigma_yy is not symmetric")
        if self.sigma_xx is not None and not np.allclose(
            self.sigma_xx, self.sigma_xx.T, atol=1e-10
        ):
            raise NumericalError("sigma_xx is not symmetric")
        # Positive definiteness after the prior, checked by factorization.
        self._yy_factor = self._factor(self.sigma_yy, self.lambda_yy, "sigma_yy")
        if self.sigma_xx is not None:
            self._factor(self.sigma_xx, self.lambda_xx, "sigma_xx")

    @staticmethod
    def _factor(mat, lam, name):
        try:
            return cho_factor(mat + lam * np.eye(mat.shape[0]), lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"{name} + {lam} * I is not positive definite; increase lambda_prior"
            ) from exc

    @property
    def pixel_shape(self) -> tuple[int, int]:
        return (
            (self.height_cells + 2) * self.cell_size,
            (self.width_cells + 2) * self.cell_size,
        )

    def solve_yy(self, rhs: np.ndarray) -> np.ndarray:
        out = cho_solve(self._yy_factor, rhs)
        if not np.all(np.isfinite(out)):
            raise NumericalError("sigma_yy solve produced non-finite values")
        return out

    def config_dict(self) -> dict:
        return {
            "width_cells": self.width_cells,
            "height_cells": self.height_cells,
            "cell_size": self.cell_size,
            "depth": self.depth,
            "lambda_xx": self.lambda_xx,
            "lambda_yy": self.lambda_yy,
        }

    def to_tensors(self):
        tensors = {
            "mu_x": self.mu_x,
            "mu_y": self.mu_y,
            "sigma_xy": self.sigma_xy,
            "sigma_yy": self.sigma_yy,
        }
        if self.sigma_xx is not None:
            tensors["sigma_xx"] = self.sigma_xx
        return tensors, {"config": self.config_dict()}

    @classmethod
    def from_tensors(cls, tensors, meta):
        cfg = meta["config"]
        return cls(
            width_cells=int(cfg["width_cells"]),
            height_cells=int(cfg["height_cells"]),
            cell_size=int(cfg["cell_size"]),
            depth=int(cfg["depth"]),
            mu_x=tensors["mu_x"],
            mu_y=tensors["mu_y"],
            sigma_xy=tensors["sigma_xy"],
            sigma_yy=tensors["sigma_yy"],
            sigma_xx=tensors.get("sigma_xx"),
            lambda_xx=float(cfg["lambda_xx"]),
            lambda_yy=float(cfg["lambda_yy"]),
        )


def materialize(
    model: StationaryModel,
    width_cells: int,
    height_cells: int,
    lambda_prior: float | None = None,
    include_pixel_cov: bool | None = None,
) -> MaterializedGaussian:
    """Assemble dense mean/covariance blocks for a concrete template.

    lambda_prior is the additive diagonal prior; None picks 1% of the mean
    diagonal of each block. include_pixel_cov=None materializes sigma_xx
    only for small templates (the ridge path never needs it).
    """
    if width_cells > model.max_cells or height_cells > model.max_cells:
        raise GeometryError(
            f"template {height_cells}x{width_cells} cells exceeds the model's "
            f"canonical radius of {model.max_cells}"
        )
    if width_cells < 1 or height_cells < 1:
        raise GeometryError("template must be at least 1x1 cells")
    sbin = model.cell_size
    depth = model.mu_hog.shape[0]
    ph_h = (height_cells + 2) * sbin
    ph_w = (width_cells + 2) * sbin
    D = ph_h * ph_w
    n_cells = height_cells * width_cells

    mu_x = np.full(D, model.mu_pixel)
    mu_y = np.tile(model.mu_hog, n_cells)

    # sigma_yy: gather depth x depth blocks by cell offset
    cy, cx = np.meshgrid(np.arange(height_cells), np.arange(width_cells), indexing="ij")
    cy = cy.ravel()
    cx = cx.ravel()
    C = model.max_cells
    dyi = cy[None, :] - cy[:, None] + C - 1
    dxi = cx[None, :] - cx[:, None] + C - 1
    blocks = model.cov_hh[dyi, dxi]  # (n, n, depth, depth)
    sigma_yy = blocks.transpose(0, 2, 1, 3).reshape(n_cells * depth, n_cells * depth)
    sigma_yy = 0.5 * (sigma_yy + sigma_yy.T)

    # sigma_xy: per cell, a contiguous slice of the offset table
    o = model.ph_origin
    sigma_xy = np.empty((D, n_cells * depth))
    for j in range(n_cells):
        ay = (cy[j] + 1) * sbin
        ax = (cx[j] + 1) * sbin
        block = model.cov_ph[o - ay : o - ay + ph_h, o - ax : o - ax + ph_w, :]
        sigma_xy[:, j * depth : (j + 1) * depth] = block.reshape(D, depth)

    if include_pixel_cov is None:
        include_pixel_cov = D <= SIGMA_XX_AUTO_LIMIT
    sigma_xx = None
    if include_pixel_cov:
        sigma_xx = pixel_covariance(model, ph_h, ph_w)

    diag_yy = float(np.mean(np.diag(sigma_yy)))
    diag_xx = float(model.cov_pp[model.max_pixels - 1, model.max_pixels - 1])
    lam_yy = 0.01 * diag_yy if lambda_prior is None else float(lambda_prior)
    lam_xx = 0.01 * diag_xx if lambda_prior is None else float(lambda_prior)

    return MaterializedGaussian(
        width_cells=width_cells,
        height_cells=height_cells,
        cell_size=sbin,
        depth=depth,
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_xy=sigma_xy,
        sigma_yy=sigma_yy,
        sigma_xx=sigma_xx,
        lambda_xx=lam_xx,
        lambda_yy=lam_yy,
    )


def pixel_covariance(model: StationaryModel, height_px: int, width_px: int) -> np.ndarray:
    """Dense pixel-pixel covariance for a raster of the given size."""
    P = model.max_pixels
    if height_px > P or width_px > P:
        raise GeometryError(f"{height_px}x{width_px} pixels exceeds the model radius {P}")
    py, px = np.meshgrid(np.arange(height_px), np.arange(width_px), indexing="ij")
    py = py.ravel()
    px = px.ravel()
    dy = py[None, :] - py[:, None] + P - 1
    dx = px[None, :] - px[:, None] + P - 1
    cov = model.cov_pp[dy, dx]
    return 0.5 * (cov + cov.T)


def ridge_invert_raw(g: MaterializedGaussian, y_flat: np.ndarray) -> np.ndarray:
    """Conditional mean of the pixels given a flat feature vector."""
    y_flat = np.asarray(y_flat, dtype=np.float64).ravel()
    if y_flat.shape[0] != g.mu_y.shape[0]:
        raise DimensionError(
            f"descriptor length {y_flat.shape[0]} != model dimension {g.mu_y.shape[0]}"
        )
    return g.sigma_xy @ g.solve_yy(y_flat - g.mu_y) + g.mu_x


def ridge_invert(g: MaterializedGaussian, y: HogDescriptor, display: bool = True) -> Image:
    """Invert a descriptor; larger descriptors are handled by averaging
    overlapping canonical-size subwindow inversions (stride one cell)."""
    if y.depth != g.depth or y.cell_size != g.cell_size:
        raise DimensionError("descriptor depth/cell_size does not match the model")
    if y.cells_y < g.height_cells or y.cells_x < g.width_cells:
        raise DimensionError(
            "descriptor smaller than the materialized template; materialize a smaller one"
        )
    sbin = g.cell_size
    out_h, out_w = (y.cells_y + 2) * sbin, (y.cells_x + 2) * sbin
    acc = np.zeros((out_h, out_w))
    cover = np.zeros((out_h, out_w))
    win_h, win_w = g.pixel_shape
    for iy in range(y.cells_y - g.height_cells + 1):
        for ix in range(y.cells_x - g.width_cells + 1):
            sub = y.data[iy : iy + g.height_cells, ix : ix + g.width_cells]
            patch = ridge_invert_raw(g, sub.ravel()).reshape(win_h, win_w)
            acc[iy * sbin : iy * sbin + win_h, ix * sbin : ix * sbin + win_w] += patch
            cover[iy * sbin : iy * sbin + win_h, ix * sbin : ix * sbin + win_w] += 1.0
    out = acc / cover
    return Image(display_rescale(out)) if display else Image(np.clip(out, 0.0, 1.0))


@dataclasses.dataclass(frozen=True)
class ImageBasis:
    vectors: np.ndarray  # (dim, count), unit-norm columns
    height_px: int
    width_px: int
    patch_pixels: int
    stride: int

    def __post_init__(self):
        v = np.asarray(self.vectors)
        norms = np.linalg.norm(v, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise NumericalError("basis columns must be unit norm")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def count(self) -> int:
        return self.vectors.shape[1]

    def config_dict(self) -> dict:
        return {
            "height_px": self.height_px,
            "width_px": self.width_px,
            "patch_pixels": self.patch_pixels,
            "stride": self.stride,
        }

    def to_tensors(self):
        return {"vectors": self.vectors}, {"config": self.config_dict()}

    @classmethod
    def from_tensors(cls, tensors, meta):
        cfg = meta["config"]
        return cls(
            vectors=tensors["vectors"],
            height_px=int(cfg["height_px"]),
            width_px=int(cfg["width_px"]),
            patch_pixels=int(cfg["patch_pixels"]),
            stride=int(cfg["stride"]),
        )


def top_eigenvectors(cov: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k eigenpairs in descending eigenvalue order, with a deterministic
    sign convention (largest-magnitude entry positive)."""
    evals, evecs = np.linalg.eigh(cov)
    if not np.all(np.isfinite(evals)) or not np.all(np.isfinite(evecs)):
        raise NumericalError("eigendecomposition produced non-finite values")
    order = np.argsort(evals)[::-1][:k]
    vals = evals[order]
    vecs = evecs[:, order].copy()
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vals, vecs


def image_eigenbasis(
    model: StationaryModel,
    patch_pixels: int = 16,
    k_per_scale: int = 24,
    template_pixels: tuple[int, int] = (56, 56),
    stride: int | None = None,
) -> ImageBasis:
    """Eigenpatches of the pixel autocovariance, translated to every stride
    placement inside the template; the resulting basis is overcomplete."""
    th, tw = template_pixels
    if patch_pixels > min(th, tw):
        raise GeometryError("patch does not fit inside the template")
    if k_per_scale > patch_pixels * patch_pixels:
        raise GeometryError("k_per_scale exceeds the patch dimensionality")
    if stride is None:
        stride = model.cell_size

    cov = pixel_covariance(model, patch_pixels, patch_pixels)
    _, patches = top_eigenvectors(cov, k_per_scale)

    ys = range(0, th - patch_pixels + 1, stride)
    xs = range(0, tw - patch_pixels + 1, stride)
    cols = []
    for ty in ys:
        for tx in xs:
            for j in range(patches.shape[1]):
                col = np.zeros((th, tw))
                col[ty : ty + patch_pixels, tx : tx + patch_pixels] = patches[:, j].reshape(
                    patch_pixels, patch_pixels
                )
                cols.append(col.ravel())
    vectors = np.stack(cols, axis=1)
    vectors /= np.linalg.norm(vectors, axis=0)
    return ImageBasis(
        vectors=vectors,
        height_px=th,
        width_px=tw,
        patch_pixels=patch_pixels,
        stride=stride,
    )
