# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled z-buffer triangle kernel.

Must stay arithmetically identical to ``_raster_py.rasterize_triangles``: same
expressions, same evaluation order, strict ``<`` depth test.
"""
import numpy as np

from libc.math cimport ceil, floor


def rasterize_triangles(double[:, :, ::1] xy, double[:, ::1] invz, int width, int height):
    zbuf = np.full((height, width), np.inf)
    tri = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3))
    cdef double[:, ::1] zb = zbuf
    cdef int[:, ::1] tid = tri
    cdef double[:, :, ::1] bc = bary

    cdef Py_ssize_t T = xy.shape[0]
    cdef Py_ssize_t t
    cdef int i, j, ix0, ix1, iy0, iy1
    cdef double x0, y0, x1, y1, x2, y2, iz0, iz1, iz2
    cdef double area, mn, mx, lo, hi, px, py
    cdef double e0, e1, e2, w0, w1, w2, iz, z

    with nogil:
        for t in range(T):
            x0 = xy[t, 0, 0]
            y0 = xy[t, 0, 1]
            x1 = xy[t, 1, 0]
            y1 = xy[t, 1, 1]
            x2 = xy[t, 2, 0]
            y2 = xy[t, 2, 1]
            area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if not (area > 0.0 or area < 0.0):
                continue
            iz0 = invz[t, 0]
            iz1 = invz[t, 1]
            iz2 = invz[t, 2]

            mn = x0
            if x1 < mn:
                mn = x1
            if x2 < mn:
                mn = x2
            mx = x0
            if x1 > mx:
                mx = x1
            if x2 > mx:
                mx = x2
            lo = ceil(mn - 0.5)
            hi = floor(mx - 0.5)
            if lo < 0.0:
                lo = 0.0
            if hi > width - 1.0:
                hi = width - 1.0
            if lo > hi:
                continue
            ix0 = <int>lo
            ix1 = <int>hi

            mn = y0
            if y1 < mn:
                mn = y1
            if y2 < mn:
                mn = y2
            mx = y0
            if y1 > mx:
                mx = y1
            if y2 > mx:
                mx = y2
            lo = ceil(mn - 0.5)
            hi = floor(mx - 0.5)
            if lo < 0.0:
                lo = 0.0
            if hi > height - 1.0:
                hi = height - 1.0
            if lo > hi:
                continue
            iy0 = <int>lo
            iy1 = <int>hi

            for j in range(iy0, iy1 + 1):
                py = j + 0.5
                for i in range(ix0, ix1 + 1):
                    px = i + 0.5
                    e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
                    e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
                    e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
                    w0 = e0 / area
                    w1 = e1 / area
                    w2 = e2 / area
                    if w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0:
                        iz = w0 * iz0 + w1 * iz1 + w2 * iz2
                        z = 1.0 / iz
                        if z < zb[j, i]:
                            zb[j, i] = z
                            tid[j, i] = <int>t
                            bc[j, i, 0] = w0 * iz0 / iz
                            bc[j, i, 1] = w1 * iz1 / iz
                            bc[j, i, 2] = w2 * iz2 / iz
    return zbuf, tri, bary
