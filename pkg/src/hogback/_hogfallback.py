"""Pure-numpy fallback for the compiled binning kernel.

Same contract as hogback._hogcore.bin_cells; used when the extension is not
built or when HOGBACK_NO_EXT is set.
"""

import numpy as np


def bin_cells(dx: np.ndarray, dy: np.ndarray, sbin: int, n_signed: int) -> np.ndarray:
    h, w = dx.shape
    by, bx = h // sbin, w // sbin
    hist = np.zeros((by, bx, n_signed))

    v = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx) % (2.0 * np.pi)
    ob = theta / (2.0 * np.pi / n_signed)
    o0 = np.floor(ob).astype(np.intp)
    wo1 = ob - o0
    o0 %= n_signed
    o1 = (o0 + 1) % n_signed

    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    cyf = (ys + 0.5) / sbin - 0.5
    cxf = (xs + 0.5) / sbin - 0.5
    y0 = np.floor(cyf).astype(np.intp)
    x0 = np.floor(cxf).astype(np.intp)
    wy1 = cyf - y0
    wx1 = cxf - x0

    for dyi, dxi in ((0, 0), (0, 1), (1, 0), (1, 1)):
        cy = y0 + dyi
        cx = x0 + dxi
        wy = wy1 if dyi else 1.0 - wy1
        wx = wx1 if dxi else 1.0 - wx1
        ok = (cy >= 0) & (cy < by) & (cx >= 0) & (cx < bx)
        wv = (wy * wx * v)[ok]
        np.add.at(hist, (cy[ok], cx[ok], o0[ok]), wv * (1.0 - wo1[ok]))
        np.add.at(hist, (cy[ok], cx[ok], o1[ok]), wv * wo1[ok])
    return hist
