"""Numba grid-traversal kernels shared by the projector and its adjoint.

All kernels walk the ray through the pixel grid cell by cell (Amanatides &
Woo stepping) and use the exact intersection length of the ray with each
cell, so the forward and adjoint kernels are exact transposes of each other.
The image is indexed [row, col] with row -> y and col -> x, pixel centers at
((j - (n-1)/2) * px, (i - (n-1)/2) * px), grid centered on the origin.

All kernels accumulate sequentially so results are bit-reproducible run to
run regardless of the threading layer.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_FAR = 1e300


@njit(cache=True, inline="always")
def _trace_sum(img, n, px, half, sx, sy, dx, dy):
    t0 = -_FAR
    t1 = _FAR
    if dx != 0.0:
        ta = (-half - sx) / dx
        tb = (half - sx) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif sx <= -half or sx >= half:
        return 0.0
    if dy != 0.0:
        ta = (-half - sy) / dy
        tb = (half - sy) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif sy <= -half or sy >= half:
        return 0.0
    eps = 1e-9 * px
    if t1 - t0 <= eps:
        return 0.0
    if t0 < 0.0:
        t0 = 0.0
        if t1 <= eps:
            return 0.0

    x = sx + t0 * dx
    y = sy + t0 * dy
    j = int(np.floor((x + half) / px))
    i = int(np.floor((y + half) / px))
    if j < 0:
        j = 0
    elif j > n - 1:
        j = n - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1

    if dx > 0.0:
        stepj = 1
        tmx = ((j + 1) * px - half - sx) / dx
        tdx = px / dx
    elif dx < 0.0:
        stepj = -1
        tmx = (j * px - half - sx) / dx
        tdx = -px / dx
    else:
        stepj = 0
        tmx = _FAR
        tdx = _FAR
    if dy > 0.0:
        stepi = 1
        tmy = ((i + 1) * px - half - sy) / dy
        tdy = px / dy
    elif dy < 0.0:
        stepi = -1
        tmy = (i * px - half - sy) / dy
        tdy = -px / dy
    else:
        stepi = 0
        tmy = _FAR
        tdy = _FAR

    acc = 0.0
    t = t0
    while t < t1 - eps:
        tn = tmx if tmx < tmy else tmy
        if tn > t1:
            tn = t1
        if tn > t:
            acc += img[i, j] * (tn - t)
        t = tn
        if tmx <= tmy:
            j += stepj
            tmx += tdx
            if j < 0 or j >= n:
                break
        else:
            i += stepi
            tmy += tdy
            if i < 0 or i >= n:
                break
    return acc


@njit(cache=True, inline="always")
def _trace_cells(n, px, half, sx, sy, dx, dy, idx_buf, len_buf):
    """Fill flat cell indices and chord lengths for one ray; return count."""
    t0 = -_FAR
    t1 = _FAR
    if dx != 0.0:
        ta = (-half - sx) / dx
        tb = (half - sx) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif sx <= -half or sx >= half:
        return 0
    if dy != 0.0:
        ta = (-half - sy) / dy
        tb = (half - sy) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    elif sy <= -half or sy >= half:
        return 0
    eps = 1e-9 * px
    if t1 - t0 <= eps:
        return 0
    if t0 < 0.0:
        t0 = 0.0
        if t1 <= eps:
            return 0

    x = sx + t0 * dx
    y = sy + t0 * dy
    j = int(np.floor((x + half) / px))
    i = int(np.floor((y + half) / px))
    if j < 0:
        j = 0
    elif j > n - 1:
        j = n - 1
    if i < 0:
        i = 0
    elif i > n - 1:
        i = n - 1

    if dx > 0.0:
        stepj = 1
        tmx = ((j + 1) * px - half - sx) / dx
        tdx = px / dx
    elif dx < 0.0:
        stepj = -1
        tmx = (j * px - half - sx) / dx
        tdx = -px / dx
    else:
        stepj = 0
        tmx = _FAR
        tdx = _FAR
    if dy > 0.0:
        stepi = 1
        tmy = ((i + 1) * px - half - sy) / dy
        tdy = px / dy
    elif dy < 0.0:
        stepi = -1
        tmy = (i * px - half - sy) / dy
        tdy = -px / dy
    else:
        stepi = 0
        tmy = _FAR
        tdy = _FAR

    k = 0
    t = t0
    while t < t1 - eps:
        tn = tmx if tmx < tmy else tmy
        if tn > t1:
            tn = t1
        if tn - t > eps:
            idx_buf[k] = i * n + j
            len_buf[k] = tn - t
            k += 1
        t = tn
        if tmx <= tmy:
            j += stepj
            tmx += tdx
            if j < 0 or j >= n:
                break
        else:
            i += stepi
            tmy += tdy
            if i < 0 or i >= n:
                break
    return k


@njit(cache=True)
def forward_kernel(img, px, srcs, dirs, out):
    n = img.shape[0]
    half = 0.5 * n * px
    nv, nb = out.shape
    for v in range(nv):
        sx = srcs[v, 0]
        sy = srcs[v, 1]
        for b in range(nb):
            out[v, b] = _trace_sum(img, n, px, half, sx, sy, dirs[v, b, 0], dirs[v, b, 1])


@njit(cache=True)
def adjoint_kernel(sino, mask, px, srcs, dirs, out):
    n = out.shape[0]
    half = 0.5 * n * px
    nv, nb = sino.shape
    flat = out.reshape(n * n)
    idx_buf = np.empty(2 * n + 4, dtype=np.int64)
    len_buf = np.empty(2 * n + 4, dtype=np.float64)
    for v in range(nv):
        sx = srcs[v, 0]
        sy = srcs[v, 1]
        for b in range(nb):
            if not mask[v, b]:
                continue
            val = sino[v, b]
            if val == 0.0:
                continue
            k = _trace_cells(n, px, half, sx, sy, dirs[v, b, 0], dirs[v, b, 1], idx_buf, len_buf)
            for c in range(k):
                flat[idx_buf[c]] += val * len_buf[c]


@njit(cache=True)
def rows_kernel(n, px, srcs, dirs, mask, indptr, indices, lengths):
    """CSR rows (one per masked ray, view-major order) of the system matrix."""
    half = 0.5 * n * px
    nv, nb = mask.shape
    idx_buf = np.empty(2 * n + 4, dtype=np.int64)
    len_buf = np.empty(2 * n + 4, dtype=np.float64)
    r = 0
    pos = 0
    indptr[0] = 0
    for v in range(nv):
        sx = srcs[v, 0]
        sy = srcs[v, 1]
        for b in range(nb):
            if not mask[v, b]:
                continue
            k = _trace_cells(n, px, half, sx, sy, dirs[v, b, 0], dirs[v, b, 1], idx_buf, len_buf)
            for c in range(k):
                indices[pos] = idx_buf[c]
                lengths[pos] = len_buf[c]
                pos += 1
            r += 1
            indptr[r] = pos
    return pos


@njit(cache=True)
def row_sums_kernel(n, px, srcs, dirs, mask, row_out, col_out):
    """Ray lengths through the grid (row sums) and per-pixel length totals."""
    half = 0.5 * n * px
    nv, nb = mask.shape
    flat = col_out.reshape(n * n)
    idx_buf = np.empty(2 * n + 4, dtype=np.int64)
    len_buf = np.empty(2 * n + 4, dtype=np.float64)
    for v in range(nv):
        sx = srcs[v, 0]
        sy = srcs[v, 1]
        for b in range(nb):
            if not mask[v, b]:
                continue
            k = _trace_cells(n, px, half, sx, sy, dirs[v, b, 0], dirs[v, b, 1], idx_buf, len_buf)
            s = 0.0
            for c in range(k):
                s += len_buf[c]
                flat[idx_buf[c]] += len_buf[c]
            row_out[v, b] = s
