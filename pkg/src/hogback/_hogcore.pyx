# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernel: per-pixel orientation binning for HOG cell histograms.

Mirrors hogback._hogfallback.bin_cells; selected at import by hogback.kernels.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, floor, sqrt

cnp.import_array()


def bin_cells(double[:, ::1] dx, double[:, ::1] dy, int sbin, int n_signed):
    """Accumulate bilinear, orientation-interpolated gradient votes into
    per-cell signed orientation histograms.

    Returns an (h // sbin, w // sbin, n_signed) float64 array.
    """
    cdef int h = dx.shape[0]
    cdef int w = dx.shape[1]
    cdef int by = h // sbin
    cdef int bx = w // sbin
    cdef double two_pi = 2.0 * np.pi
    cdef double bin_width = two_pi / n_signed

    out = np.zeros((by, bx, n_signed), dtype=np.float64)
    cdef double[:, :, ::1] hist = out

    cdef int x, y, o0, o1, y0, x0, cy, cx, oo
    cdef double gx, gy, v, theta, ob, wo1, cyf, cxf, wy1, wx1, wy, wx, wv
    cdef int dyi, dxi

    for y in range(h):
        for x in range(w):
            gx = dx[y, x]
            gy = dy[y, x]
            v = sqrt(gx * gx + gy * gy)
            if v == 0.0:
                continue
            theta = atan2(gy, gx)
            if theta < 0.0:
                theta += two_pi
            ob = theta / bin_width
            o0 = <int>floor(ob)
            wo1 = ob - o0
            o0 = o0 % n_signed
            o1 = (o0 + 1) % n_signed

            cyf = (y + 0.5) / sbin - 0.5
            cxf = (x + 0.5) / sbin - 0.5
            y0 = <int>floor(cyf)
            x0 = <int>floor(cxf)
            wy1 = cyf - y0
            wx1 = cxf - x0

            for dyi in range(2):
                cy = y0 + dyi
                if cy < 0 or cy >= by:
                    continue
                wy = wy1 if dyi == 1 else 1.0 - wy1
                for dxi in range(2):
                    cx = x0 + dxi
                    if cx < 0 or cx >= bx:
                        continue
                    wx = wx1 if dxi == 1 else 1.0 - wx1
                    wv = wy * wx * v
                    hist[cy, cx, o0] += wv * (1.0 - wo1)
                    hist[cy, cx, o1] += wv * wo1
    return out
