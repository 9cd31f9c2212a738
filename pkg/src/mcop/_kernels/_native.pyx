# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: slit projection and exact grid nearest neighbor.

Candidate tests use plain a*x + b*y + c*z accumulation (no FMA, enforced by
-ffp-contract=off) so results match the numpy fallback bit for bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, ceil, floor, sqrt

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


cdef inline i64 _lookup(const i64* ids, i64 n, i64 key) noexcept nogil:
    cdef i64 lo = 0, hi = n - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if ids[mid] < key:
            lo = mid + 1
        elif ids[mid] > key:
            hi = mid - 1
        else:
            return mid
    return -1


def project_columns(
    cnp.ndarray[f64, ndim=2] points,
    cnp.ndarray[f64, ndim=2] colors,
    grid,
    cnp.ndarray[f64, ndim=3] centers,
    cnp.ndarray[f64, ndim=3] rays,
    cnp.ndarray[f64, ndim=2] tangents,
    double splat,
    double max_depth,
):
    origin_a, cell_o, dims_a, ids_a, starts_a, order_a = grid
    cdef cnp.ndarray[f64, ndim=1] origin = np.ascontiguousarray(origin_a, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] dims = np.ascontiguousarray(dims_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] ids = np.ascontiguousarray(ids_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] starts = np.ascontiguousarray(starts_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] order = np.ascontiguousarray(order_a, dtype=np.int64)
    cdef double cell = float(cell_o)

    cdef Py_ssize_t H = centers.shape[0]
    cdef Py_ssize_t W = centers.shape[1]
    cdef Py_ssize_t N = points.shape[0]
    cdef cnp.ndarray[f64, ndim=3] rgb = np.zeros((H, W, 3), dtype=np.float64)
    cdef cnp.ndarray[f64, ndim=2] depth = np.full((H, W), np.inf, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=2] sel = np.full((H, W), -1, dtype=np.int64)
    if N == 0 or ids.shape[0] == 0:
        return rgb, depth, sel

    cdef const f64* pts = &points[0, 0]
    cdef const f64* cols = &colors[0, 0]
    cdef const f64* org = &origin[0]
    cdef const i64* dim = &dims[0]
    cdef const i64* cid = &ids[0]
    cdef const i64* cst = &starts[0]
    cdef const i64* ord_ = &order[0]
    cdef i64 ncells = ids.shape[0]

    cdef double pad = splat + cell
    cdef double lo0 = org[0] - pad, lo1 = org[1] - pad, lo2 = org[2] - pad
    cdef double hi0 = org[0] + dim[0] * cell + pad
    cdef double hi1 = org[1] + dim[1] * cell + pad
    cdef double hi2 = org[2] + dim[2] * cell + pad

    cdef i64 nrange = <i64>ceil((splat + 0.5 * cell) / cell - 1e-9)
    if nrange < 1:
        nrange = 1
    cdef double stop_slack = (2.0 * nrange + 1.8) * cell + splat
    cdef double splat2 = splat * splat

    cdef Py_ssize_t i, j
    cdef i64 k, nsteps, gx, gy, gz, px_, py_, pz_, key, pos, m, pi
    cdef i64 last_gx, last_gy, last_gz
    cdef double cx, cy, cz, rx, ry, rz, t0, t1, ta, tb, tmp, tk
    cdef double qx, qy, qz, dx, dy, dz, t, dd, perp2, best_t
    cdef i64 best_i
    cdef bint miss

    with nogil:
        for j in range(W):
            for i in range(H):
                cx = centers[i, j, 0]; cy = centers[i, j, 1]; cz = centers[i, j, 2]
                rx = rays[i, j, 0]; ry = rays[i, j, 1]; rz = rays[i, j, 2]

                # clip the ray to the dilated grid box and [0, max_depth]
                t0 = 0.0
                t1 = max_depth
                miss = False
                if rx > 1e-300 or rx < -1e-300:
                    ta = (lo0 - cx) / rx; tb = (hi0 - cx) / rx
                    if ta > tb: tmp = ta; ta = tb; tb = tmp
                    if ta > t0: t0 = ta
                    if tb < t1: t1 = tb
                elif cx < lo0 or cx > hi0:
                    miss = True
                if not miss and (ry > 1e-300 or ry < -1e-300):
                    ta = (lo1 - cy) / ry; tb = (hi1 - cy) / ry
                    if ta > tb: tmp = ta; ta = tb; tb = tmp
                    if ta > t0: t0 = ta
                    if tb < t1: t1 = tb
                elif not miss and (cy < lo1 or cy > hi1):
                    miss = True
                if not miss and (rz > 1e-300 or rz < -1e-300):
                    ta = (lo2 - cz) / rz; tb = (hi2 - cz) / rz
                    if ta > tb: tmp = ta; ta = tb; tb = tmp
                    if ta > t0: t0 = ta
                    if tb < t1: t1 = tb
                elif not miss and (cz < lo2 or cz > hi2):
                    miss = True
                if miss or t0 > t1:
                    continue

                best_t = INFINITY
                best_i = -1
                last_gx = last_gy = last_gz = -(1 << 60)
                nsteps = <i64>((t1 - t0) / cell) + 1
                for k in range(nsteps + 1):
                    tk = t0 + k * cell
                    if tk > t1:
                        tk = t1
                    if best_i >= 0 and tk - stop_slack > best_t:
                        break
                    qx = cx + tk * rx; qy = cy + tk * ry; qz = cz + tk * rz
                    gx = <i64>floor((qx - org[0]) / cell)
                    gy = <i64>floor((qy - org[1]) / cell)
                    gz = <i64>floor((qz - org[2]) / cell)
                    if gx == last_gx and gy == last_gy and gz == last_gz:
                        continue
                    last_gx = gx; last_gy = gy; last_gz = gz
                    for px_ in range(gx - nrange, gx + nrange + 1):
                        if px_ < 0 or px_ >= dim[0]:
                            continue
                        for py_ in range(gy - nrange, gy + nrange + 1):
                            if py_ < 0 or py_ >= dim[1]:
                                continue
                            for pz_ in range(gz - nrange, gz + nrange + 1):
                                if pz_ < 0 or pz_ >= dim[2]:
                                    continue
                                key = (px_ * dim[1] + py_) * dim[2] + pz_
                                pos = _lookup(cid, ncells, key)
                                if pos < 0:
                                    continue
                                for m in range(cst[pos], cst[pos + 1]):
                                    pi = ord_[m]
                                    dx = pts[3 * pi] - cx
                                    dy = pts[3 * pi + 1] - cy
                                    dz = pts[3 * pi + 2] - cz
                                    t = dx * rx + dy * ry + dz * rz
                                    if t <= 0.0 or t > max_depth:
                                        continue
                                    dd = dx * dx + dy * dy + dz * dz
                                    perp2 = dd - t * t
                                    if perp2 > splat2:
                                        continue
                                    if t < best_t or (t == best_t and pi < best_i):
                                        best_t = t
                                        best_i = pi
                    if tk >= t1:
                        break
                if best_i >= 0:
                    depth[i, j] = best_t
                    sel[i, j] = best_i
                    rgb[i, j, 0] = cols[3 * best_i]
                    rgb[i, j, 1] = cols[3 * best_i + 1]
                    rgb[i, j, 2] = cols[3 * best_i + 2]
    return rgb, depth, sel


def nearest_dists(
    cnp.ndarray[f64, ndim=2] queries,
    cnp.ndarray[f64, ndim=2] refpoints,
    grid,
):
    """Exact nearest-neighbor distance per query via expanding cell shells."""
    origin_a, cell_o, dims_a, ids_a, starts_a, order_a = grid
    cdef cnp.ndarray[f64, ndim=1] origin = np.ascontiguousarray(origin_a, dtype=np.float64)
    cdef cnp.ndarray[i64, ndim=1] dims = np.ascontiguousarray(dims_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] ids = np.ascontiguousarray(ids_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] starts = np.ascontiguousarray(starts_a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] order = np.ascontiguousarray(order_a, dtype=np.int64)
    cdef double cell = float(cell_o)

    cdef Py_ssize_t M = queries.shape[0]
    cdef cnp.ndarray[f64, ndim=1] out = np.empty(M, dtype=np.float64)
    cdef const f64* pts = &refpoints[0, 0]
    cdef const f64* org = &origin[0]
    cdef const i64* dim = &dims[0]
    cdef const i64* cid = &ids[0]
    cdef const i64* cst = &starts[0]
    cdef const i64* ord_ = &order[0]
    cdef i64 ncells = ids.shape[0]

    cdef Py_ssize_t q
    cdef double qx, qy, qz, best2, d0, lb, bx, by, bz, e, dist2, dxx, dyy, dzz
    cdef i64 gx, gy, gz, k, kmax, x, y, z, key, pos, m, pi
    cdef i64 zlo, zhi, zstep

    kmax = dim[0] + dim[1] + dim[2] + 2
    with nogil:
        for q in range(M):
            qx = queries[q, 0]; qy = queries[q, 1]; qz = queries[q, 2]
            gx = <i64>floor((qx - org[0]) / cell)
            gy = <i64>floor((qy - org[1]) / cell)
            gz = <i64>floor((qz - org[2]) / cell)
            if gx < 0: gx = 0
            if gx >= dim[0]: gx = dim[0] - 1
            if gy < 0: gy = 0
            if gy >= dim[1]: gy = dim[1] - 1
            if gz < 0: gz = 0
            if gz >= dim[2]: gz = dim[2] - 1
            # distance from query to its (clamped) start cell box
            d0 = 0.0
            bx = org[0] + gx * cell
            if qx < bx: e = bx - qx; d0 += e * e
            elif qx > bx + cell: e = qx - bx - cell; d0 += e * e
            by = org[1] + gy * cell
            if qy < by: e = by - qy; d0 += e * e
            elif qy > by + cell: e = qy - by - cell; d0 += e * e
            bz = org[2] + gz * cell
            if qz < bz: e = bz - qz; d0 += e * e
            elif qz > bz + cell: e = qz - bz - cell; d0 += e * e
            d0 = sqrt(d0)

            best2 = INFINITY
            for k in range(kmax + 1):
                if best2 < INFINITY:
                    lb = (k - 1) * cell - d0
                    if lb > 0.0 and lb * lb > best2:
                        break
                for x in range(gx - k, gx + k + 1):
                    if x < 0 or x >= dim[0]:
                        continue
                    for y in range(gy - k, gy + k + 1):
                        if y < 0 or y >= dim[1]:
                            continue
                        # z runs the full range on shell faces, else only the rim
                        if x == gx - k or x == gx + k or y == gy - k or y == gy + k:
                            zstep = 1
                        else:
                            zstep = 2 * k if k > 0 else 1
                        zlo = gz - k
                        zhi = gz + k
                        z = zlo
                        while z <= zhi:
                            if 0 <= z < dim[2]:
                                key = (x * dim[1] + y) * dim[2] + z
                                pos = _lookup(cid, ncells, key)
                                if pos >= 0:
                                    # cell box lower-bound prune
                                    dist2 = 0.0
                                    bx = org[0] + x * cell
                                    if qx < bx: e = bx - qx; dist2 += e * e
                                    elif qx > bx + cell: e = qx - bx - cell; dist2 += e * e
                                    by = org[1] + y * cell
                                    if qy < by: e = by - qy; dist2 += e * e
                                    elif qy > by + cell: e = qy - by - cell; dist2 += e * e
                                    bz = org[2] + z * cell
                                    if qz < bz: e = bz - qz; dist2 += e * e
                                    elif qz > bz + cell: e = qz - bz - cell; dist2 += e * e
                                    if dist2 <= best2:
                                        for m in range(cst[pos], cst[pos + 1]):
                                            pi = ord_[m]
                                            dxx = pts[3 * pi] - qx
                                            dyy = pts[3 * pi + 1] - qy
                                            dzz = pts[3 * pi + 2] - qz
                                            dist2 = dxx * dxx + dyy * dyy + dzz * dzz
                                            if dist2 < best2:
                                                best2 = dist2
                            z += zstep
            out[q] = sqrt(best2)
    return out
