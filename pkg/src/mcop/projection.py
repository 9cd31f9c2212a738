"""Point-cloud -> MCOP image projection over a uniform spatial hash grid.

Pixel rule: among points whose perpendicular distance to the pixel's ray is
at most ``splat_radius`` and whose along-ray distance lies in
(0, max_depth], the one nearest along the ray wins (ties broken by lowest
point index, so output is deterministic regardless of parallelism). Misses
store depth=+inf, mask=0, RGB=0; the rotation plane always carries the
profile increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import CH_DEPTH, CH_ROT, McopImage, N_CHANNELS, PointCloud
from .errors import ConfigError
from .sweep import SlitPoses

DEFAULT_MAX_DEPTH = 10.0
SPLAT_FACTOR = 1.5


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid over a point cloud, stored CSR-style.

    ``cell_ids`` are sorted unique linearized cell coordinates;
    ``order[starts[k]:starts[k+1]]`` lists the indices of the points living
    in ``cell_ids[k]``. Every input point appears in exactly one cell.
    """

    cell: float
    origin: np.ndarray   # (3,)
    dims: np.ndarray     # (3,) int64
    cell_ids: np.ndarray    # (K,) int64 sorted
    starts: np.ndarray      # (K+1,) int64
    order: np.ndarray       # (N,) int64
    points: np.ndarray      # (N, 3) reference to the indexed positions

    def __len__(self):
        return len(self.order)

    def as_tuple(self):
        return (self.origin, self.cell, self.dims, self.cell_ids, self.starts, self.order)

    def cell_of(self, p):
        return tuple(np.floor((np.asarray(p) - self.origin) / self.cell).astype(np.int64))

    def query_radius(self, center, radius):
        """Indices of points within ``radius`` of ``center`` (exact)."""
        c = np.asarray(center, dtype=np.float64)
        if len(self.order) == 0:
            return np.empty(0, dtype=np.int64)
        lo = np.maximum(np.floor((c - radius - self.origin) / self.cell).astype(np.int64), 0)
        hi = np.minimum(np.floor((c + radius - self.origin) / self.cell).astype(np.int64),
                        self.dims - 1)
        if np.any(lo > hi):
            return np.empty(0, dtype=np.int64)
        xs, ys, zs = (np.arange(a, b + 1) for a, b in zip(lo, hi))
        keys = ((xs[:, None, None] * self.dims[1] + ys[None, :, None]) * self.dims[2]
                + zs[None, None, :]).reshape(-1)
        pos = np.searchsorted(self.cell_ids, keys)
        ok = (pos < len(self.cell_ids))
        pos = pos[ok]
        pos = pos[self.cell_ids[pos] == keys[ok]]
        if not len(pos):
            return np.empty(0, dtype=np.int64)
        idx = np.concatenate([self.order[self.starts[p]:self.starts[p + 1]] for p in pos])
        d2 = np.einsum("ij,ij->i", self.points[idx] - c, self.points[idx] - c)
        return np.sort(idx[d2 <= radius * radius])

    def nearest_along_ray(self, origin, direction, radius, max_depth=DEFAULT_MAX_DEPTH):
        """Index of the nearest point along a single ray, or -1.

        Runs through the selected kernel backend (the same code path the
        full projection uses).
        """
        centers = np.ascontiguousarray(origin, dtype=np.float64).reshape(1, 1, 3)
        d = np.asarray(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        rays = np.ascontiguousarray(d.reshape(1, 1, 3))
        tangent = _any_perpendicular(d).reshape(1, 3)
        _rgb, depth, sel = _kernels.project_columns(
            self.points, np.zeros_like(self.points), self.as_tuple(),
            centers, rays, np.ascontiguousarray(tangent), float(radius), float(max_depth),
        )
        return int(sel[0, 0])


def _any_perpendicular(d):
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t = np.cross(d, ref)
    return t / np.linalg.norm(t)


def build_spatial_index(cloud, cell: float) -> SpatialGrid:
    """Bucket every point of the cloud into a uniform grid of size ``cell``."""
    if cell <= 0.0:
        raise ConfigError("grid cell size must be positive")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    pts = np.ascontiguousarray(pts.reshape(-1, 3), dtype=np.float64)
    n = len(pts)
    if n == 0:
        return SpatialGrid(
            float(cell), np.zeros(3), np.zeros(3, np.int64),
            np.empty(0, np.int64), np.zeros(1, np.int64), np.empty(0, np.int64), pts,
        )
    origin = pts.min(axis=0)
    idx3 = np.floor((pts - origin) / cell).astype(np.int64)
    dims = idx3.max(axis=0) + 1
    ids = (idx3[:, 0] * dims[1] + idx3[:, 1]) * dims[2] + idx3[:, 2]
    order = np.argsort(ids, kind="stable").astype(np.int64)
    sorted_ids = ids[order]
    cell_ids, first = np.unique(sorted_ids, return_index=True)
    starts = np.concatenate([first, [n]]).astype(np.int64)
    return SpatialGrid(float(cell), origin.astype(np.float64), dims.astype(np.int64),
                       cell_ids.astype(np.int64), starts, order, pts)


def project(
    cloud: PointCloud,
    poses: SlitPoses,
    splat_radius: float | None = None,
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> McopImage:
    """Project a point cloud through slit poses into an MCOP image."""
    splat = float(splat_radius) if splat_radius is not None else SPLAT_FACTOR * poses.step
    if splat <= 0.0:
        raise ConfigError("splat_radius must be positive")
    if max_depth <= 0.0:
        raise ConfigError("max_depth must be positive")
    h, w = poses.height, poses.width
    grid = build_spatial_index(cloud, cell=2.0 * splat)
    rgb, depth, _sel = _kernels.project_columns(
        np.ascontiguousarray(cloud.points, dtype=np.float64),
        np.ascontiguousarray(cloud.colors, dtype=np.float64),
        grid.as_tuple(),
        np.ascontiguousarray(poses.centers, dtype=np.float64),
        np.ascontiguousarray(poses.rays, dtype=np.float64),
        np.ascontiguousarray(poses.tangents, dtype=np.float64),
        splat,
        float(max_depth),
    )
    channels = np.zeros((h, w, N_CHANNELS))
    channels[..., :3] = rgb
    channels[..., CH_DEPTH] = depth
    channels[..., CH_ROT] = poses.increments
    mask = depth != np.inf
    return McopImage(channels, mask, wrap=poses.closed)


def nearest_neighbor_dists(queries: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Backend-dispatched exact nearest-neighbor distances (meters)."""
    queries = np.ascontiguousarray(np.asarray(queries, np.float64).reshape(-1, 3))
    ref = np.ascontiguousarray(np.asarray(ref, np.float64).reshape(-1, 3))
    if len(ref) == 0:
        raise ConfigError("reference cloud is empty")
    if len(queries) == 0:
        return np.empty(0)
    grid = None
    if _kernels.BACKEND == "native":
        grid = build_spatial_index(ref, cell=_auto_cell(ref)).as_tuple()
    return _kernels.nearest_dists(queries, ref, grid)


def _auto_cell(pts):
    extent = np.ptp(pts, axis=0)
    span = float(extent.max())
    if span <= 0.0:
        return 1.0
    vol = float(np.prod(np.maximum(extent, span * 1e-3)))
    cell = 2.0 * (vol / len(pts)) ** (1.0 / 3.0)
    return float(min(max(cell, span / 256.0, 1e-9), span))
