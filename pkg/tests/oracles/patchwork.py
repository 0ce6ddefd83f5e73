"""Brute-force patchwork assembly oracle.

Re-implements the sliding-window averaging with explicit per-pixel loops
and an explicit coverage grid, independent of the library's vectorized
accumulation. Patch inversion itself is taken as a callable so the oracle
checks exactly the assembly logic.
"""

import numpy as np


def assemble(desc_data, patch_cells, cell_size, patch_fn):
    """Return (raster, coverage) for a (cy, cx, depth) descriptor tensor.

    patch_fn maps a flattened patch_cells x patch_cells x depth subtensor
    to a (ppx, ppx) or (ppx, ppx, 3) pixel patch. Windows are visited in
    row-major order so floating-point sums match an accumulator that does
    the same. Uncovered border pixels are copied from the nearest covered
    pixel.
    """
    cy, cx = desc_data.shape[:2]
    ppx = patch_cells * cell_size
    out_h = (cy + 2) * cell_size
    out_w = (cx + 2) * cell_size

    first = patch_fn(desc_data[:patch_cells, :patch_cells].ravel())
    channels = 1 if first.ndim == 2 else first.shape[2]
    shape = (out_h, out_w) if channels == 1 else (out_h, out_w, channels)
    acc = np.zeros(shape)
    cover = np.zeros((out_h, out_w), dtype=int)

    for iy in range(cy - patch_cells + 1):
        for ix in range(cx - patch_cells + 1):
            patch = patch_fn(
                desc_data[iy : iy + patch_cells, ix : ix + patch_cells].ravel()
            )
            py0 = (iy + 1) * cell_size
            px0 = (ix + 1) * cell_size
            for a in range(ppx):
                for b in range(ppx):
                    acc[py0 + a, px0 + b] += patch[a, b]
                    cover[py0 + a, px0 + b] += 1
    raster = np.empty(shape)
    for i in range(out_h):
        for j in range(out_w):
            ci = min(max(i, cell_size), out_h - cell_size - 1)
            cj = min(max(j, cell_size), out_w - cell_size - 1)
            raster[i, j] = acc[ci, cj] / cover[ci, cj]
    return raster, cover
