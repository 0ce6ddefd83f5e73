"""Direct inversion: derivative-free coordinate descent over coefficients
of a natural-image basis, recomputing the descriptor inside the loop.

The candidate image is x = mean + U rho. Each coordinate tries a fixed
grid of signed steps scaled by a per-restart scale factor; the scale is
halved whenever a full sweep accepts nothing, which gives the usual
coarse-to-fine behavior without derivatives (the objective is piecewise
smooth at best, so gradient steps are unreliable).
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DimensionError, NumericalError
from .gaussian import ImageBasis
from .hog import HogConfig, HogDescriptor, compute_hog
from .image import Image, display_rescale

STEP_GRID = (1.0, -1.0, 0.5, -0.5, 0.25, -0.25, 0.1, -0.1)


@dataclasses.dataclass(frozen=True)
class DirectConfig:
    restarts: int = 3
    sweeps: int = 30
    step_grid: tuple = STEP_GRID
    seed: int = 0
    init_scale: float = 1.0
    threads: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.sweeps < 1:
            raise DimensionError("restarts and sweeps must be at least 1")


@dataclasses.dataclass
class DirectResult:
    image: Image
    rho: np.ndarray
    objective: float
    restart_objectives: list  # final objective per restart
    trace: list  # accepted-objective sequence of the winning restart


def _objective(basis, mean_image, rho, y_flat, shape, config):
    x = (mean_image + basis.vectors @ rho).reshape(shape)
    d = compute_hog(x, config).data.ravel() - y_flat
    val = float(d @ d)
    if not np.isfinite(val):
        raise NumericalError("direct optimization objective is not finite")
    return val


def _run_restart(basis, mean_image, y_flat, shape, cfg, hog_config, seed):
    rng = np.random.default_rng(seed)
    rho = rng.standard_normal(basis.count) * cfg.init_scale
    best = _objective(basis, mean_image, rho, y_flat, shape, hog_config)
    trace = [best]
    scale = 1.0
    for _ in range(cfg.sweeps):
        order = rng.permutation(basis.count)
        improved = False
        for idx in order:
            base_val = rho[idx]
            for step in cfg.step_grid:
                rho[idx] = base_val + step * scale
                cand = _objective(basis, mean_image, rho, y_flat, shape, hog_config)
                if cand < best:
                    best = cand
                    base_val = rho[idx]
                    improved = True
            rho[idx] = base_val
        trace.append(best)
        if not improved:
            scale *= 0.5
    return rho, best, trace


def direct_invert(
    basis: ImageBasis,
    y: HogDescriptor,
    config: DirectConfig = DirectConfig(),
    hog_config: HogConfig = HogConfig(),
    display: bool = True,
    mean_image: np.ndarray | float = 0.5,
) -> DirectResult:
    """Minimize the squared feature distance over the basis coefficients.

    Returns the best restart's reconstruction along with its coefficient
    vector, objective trace, and every restart's final objective.
    """
    shape = (basis.height_px, basis.width_px)
    expect = ((y.cells_y + 2) * y.cell_size, (y.cells_x + 2) * y.cell_size)
    if shape != expect:
        raise DimensionError(
            f"basis raster {shape} does not match the descriptor's inverse "
            f"geometry {expect}"
        )
    y_flat = y.data.ravel()
    mean_flat = (
        np.full(basis.dim, float(mean_image))
        if np.isscalar(mean_image)
        else np.asarray(mean_image, dtype=np.float64).ravel()
    )
    if mean_flat.shape[0] != basis.dim:
        raise DimensionError("mean image size does not match the basis")

    seeds = [config.seed + 1000 * r for r in range(config.restarts)]

    def run(seed):
        return _run_restart(basis, mean_flat, y_flat, shape, config, hog_config, seed)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]

    finals = [r[1] for r in results]
    winner = min(range(len(results)), key=lambda i: (finals[i], i))
    rho, best, trace = results[winner]
    out = (mean_flat + basis.vectors @ rho).reshape(shape)
    img = Image(display_rescale(out)) if display else Image(np.clip(out, 0.0, 1.0))
    return DirectResult(
        image=img,
        rho=rho,
        objective=best,
        restart_objectives=finals,
        trace=trace,
    )
