"""Pure numpy z-buffer kernel, used when the compiled extension is unavailable.

Every (triangle, pixel-in-bbox) candidate is evaluated at once; the nearest
candidate per pixel wins and depth ties go to the lower triangle index, which
is exactly what a sequential strict-less z-test produces.
"""
from __future__ import annotations

import numpy as np

_CHUNK = 1 << 22


def rasterize_triangles(xy: np.ndarray, invz: np.ndarray, width: int, height: int):
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    invz = np.ascontiguousarray(invz, dtype=np.float64)
    zbuf = np.full((height, width), np.inf)
    tri = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3))
    if len(xy) == 0:
        return zbuf, tri, bary

    x0, y0 = xy[:, 0, 0], xy[:, 0, 1]
    x1, y1 = xy[:, 1, 0], xy[:, 1, 1]
    x2, y2 = xy[:, 2, 0], xy[:, 2, 1]
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)

    with np.errstate(invalid="ignore"):
        lox = np.maximum(np.ceil(np.minimum(np.minimum(x0, x1), x2) - 0.5), 0.0)
        hix = np.minimum(np.floor(np.maximum(np.maximum(x0, x1), x2) - 0.5), width - 1.0)
        loy = np.maximum(np.ceil(np.minimum(np.minimum(y0, y1), y2) - 0.5), 0.0)
        hiy = np.minimum(np.floor(np.maximum(np.maximum(y0, y1), y2) - 0.5), height - 1.0)
        ok = ((area > 0.0) | (area < 0.0)) & (lox <= hix) & (loy <= hiy)
    ids = np.flatnonzero(ok)
    if ids.size == 0:
        return zbuf, tri, bary
    ix0 = lox[ids].astype(np.int64)
    iy0 = loy[ids].astype(np.int64)
    nx = hix[ids].astype(np.int64) - ix0 + 1
    ny = hiy[ids].astype(np.int64) - iy0 + 1
    counts = nx * ny

    keys, depths, owners, bcs = [], [], [], []
    start = 0
    cum = np.cumsum(counts)
    while start < ids.size:
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _CHUNK, side="right"))
        stop = max(stop, start + 1)
        sel = slice(start, stop)
        c = counts[sel]
        rep = np.repeat(np.arange(stop - start), c)
        offs = np.arange(int(c.sum())) - np.repeat(np.cumsum(c) - c, c)
        t = ids[sel][rep]
        nxr = nx[sel][rep]
        pi = ix0[sel][rep] + offs % nxr
        pj = iy0[sel][rep] + offs // nxr
        px = pi + 0.5
        py = pj + 0.5

        ax, ay, bx, by, cx, cy = x0[t], y0[t], x1[t], y1[t], x2[t], y2[t]
        ar = area[t]
        e0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
        e1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
        e2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        w0 = e0 / ar
        w1 = e1 / ar
        w2 = e2 / ar
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        t, pi, pj = t[inside], pi[inside], pj[inside]
        w0, w1, w2 = w0[inside], w1[inside], w2[inside]
        iz0, iz1, iz2 = invz[t, 0], invz[t, 1], invz[t, 2]
        iz = w0 * iz0 + w1 * iz1 + w2 * iz2
        z = 1.0 / iz
        keys.append(pj * width + pi)
        depths.append(z)
        owners.append(t)
        bcs.append(np.stack([w0 * iz0 / iz, w1 * iz1 / iz, w2 * iz2 / iz], axis=1))
        start = stop

    key = np.concatenate(keys)
    z = np.concatenate(depths)
    t = np.concatenate(owners)
    b = np.concatenate(bcs)
    if key.size == 0:
        return zbuf, tri, bary
    order = np.lexsort((t, z, key))
    key_sorted = key[order]
    first = np.ones(key_sorted.size, dtype=bool)
    first[1:] = key_sorted[1:] != key_sorted[:-1]
    win = order[first]
    flat = key[win]
    zbuf.reshape(-1)[flat] = z[win]
    tri.reshape(-1)[flat] = t[win]
    bary.reshape(-1, 3)[flat] = b[win]
    return zbuf, tri, bary
