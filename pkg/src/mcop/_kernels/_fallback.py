"""Pure-numpy kernel implementations.

Grid tuple layout shared with the native backend:
(origin (3,) f64, cell float, dims (3,) i64, cell_ids (K,) i64 sorted unique,
starts (K+1,) i64 CSR offsets, order (N,) i64 point indices grouped by cell).

The projection candidate test is written with the exact same elementary
operation order as the compiled kernel (a*x + b*y + c*z, dd - t*t) so both
backends select identical points and produce bit-identical images.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 8192
_HALF_DIAG = 0.8660254037844387  # sqrt(3)/2


def _expand_cells(starts, order, cells):
    """Concatenate the point-index lists of the given cell positions."""
    c0 = starts[cells]
    counts = starts[cells + 1] - c0
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    begins = ends - counts
    flat = np.arange(total, dtype=np.int64) - np.repeat(begins, counts) + np.repeat(c0, counts)
    return order[flat]


def project_columns(points, colors, grid, centers, rays, tangents, splat, max_depth):
    """Nearest-along-ray-within-cylinder selection for every pixel.

    Returns (rgb (H,W,3), depth (H,W) with +inf misses, sel (H,W) point index
    or -1). Ties on equal depth go to the lowest point index.
    """
    origin, cell, dims, cell_ids, starts, order = grid
    H, W = centers.shape[:2]
    rgb = np.zeros((H, W, 3))
    depth = np.full((H, W), np.inf)
    sel = np.full((H, W), -1, dtype=np.int64)
    if len(points) == 0 or len(cell_ids) == 0:
        return rgb, depth, sel

    dy, dz = int(dims[1]), int(dims[2])
    iz = cell_ids % dz
    iy = (cell_ids // dz) % dy
    ix = cell_ids // (dy * dz)
    cc = origin[None, :] + (np.stack([ix, iy, iz], axis=1) + 0.5) * cell
    slab_margin = splat + cell * _HALF_DIAG
    splat2 = splat * splat
    row_idx = np.arange(H)

    for j in range(W):
        base = centers[0, j]
        travel = np.sqrt(
            np.max(np.einsum("ij,ij->i", centers[:, j] - base[None, :],
                             centers[:, j] - base[None, :]))
        )
        v = cc - base[None, :]
        tdist = np.abs(v @ tangents[j])
        reach = max_depth + splat + travel + cell * 2.0 * _HALF_DIAG
        near = (tdist <= slab_margin) & (np.einsum("ij,ij->i", v, v) <= reach * reach)
        cells = np.nonzero(near)[0]
        if not len(cells):
            continue
        cand = np.sort(_expand_cells(starts, order, cells))

        cj = centers[:, j]
        rj = rays[:, j]
        best_t = np.full(H, np.inf)
        best_i = np.full(H, -1, dtype=np.int64)
        for lo in range(0, len(cand), _CHUNK):
            ck = cand[lo:lo + _CHUNK]
            p = points[ck]
            d0 = p[None, :, 0] - cj[:, 0:1]
            d1 = p[None, :, 1] - cj[:, 1:2]
            d2 = p[None, :, 2] - cj[:, 2:3]
            t = d0 * rj[:, 0:1] + d1 * rj[:, 1:2] + d2 * rj[:, 2:3]
            dd = d0 * d0 + d1 * d1 + d2 * d2
            perp2 = dd - t * t
            ok = (t > 0.0) & (t <= max_depth) & (perp2 <= splat2)
            tv = np.where(ok, t, np.inf)
            k = np.argmin(tv, axis=1)
            tb = tv[row_idx, k]
            better = tb < best_t  # equal t across chunks: earlier (lower) index wins
            best_t[better] = tb[better]
            best_i[better] = ck[k[better]]
        hit = np.isfinite(best_t)
        if hit.any():
            depth[hit, j] = best_t[hit]
            sel[hit, j] = best_i[hit]
            rgb[hit, j] = colors[best_i[hit]]
    return rgb, depth, sel


def nearest_dists(queries, refpoints, grid=None):
    """Exact nearest-neighbor distances (meters). The fallback delegates to
    scipy's kd-tree; the grid argument is accepted for API parity."""
    from scipy.spatial import cKDTree

    d, _ = cKDTree(refpoints).query(queries, k=1)
    return np.asarray(d, dtype=np.float64).reshape(len(queries))
