"""MCOP image -> point cloud, the inverse of projection under the same sweep.

Slit poses are re-integrated from the image's own rotation channel rather
than from an external profile, so edited rotation values (taller walls,
carved doors) directly drive the completed geometry.
"""

from __future__ import annotations

import numpy as np

from .core import McopImage, PointCloud
from .errors import DimensionMismatchError, RotationSumError
from .sweep import SweepPath, _integrate, kahan_colsum

COLUMN_SUM_TOL = 1e-3


def reproject(image: McopImage, path: SweepPath, step: float) -> PointCloud:
    """Emit one point per known pixel: camera center + depth * ray direction.

    Points come out in column-major order (all rows of column 0 first), so
    identical images always produce identical clouds.
    """
    if image.width != len(path):
        raise DimensionMismatchError(
            f"image has {image.width} columns, path has {len(path)}"
        )
    sums = kahan_colsum(image.rotation)
    dev = np.abs(sums - np.pi)
    worst = int(np.argmax(dev))
    if dev[worst] > COLUMN_SUM_TOL:
        raise RotationSumError(worst, float(dev[worst]), COLUMN_SUM_TOL)

    centers, rays = _integrate(path.bases, path.normals, image.rotation, step)
    jj, ii = np.nonzero(image.mask.T)  # column-major pixel order
    if len(ii) == 0:
        return PointCloud.empty()
    d = image.depth[ii, jj][:, None]
    pts = centers[ii, jj] + d * rays[ii, jj]
    cols = image.channels[ii, jj, :3]
    return PointCloud(pts, cols)
