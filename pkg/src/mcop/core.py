"""Domain types shared across the pipeline.

Conventions used everywhere:

* image arrays are (H, W, 5) float64 with channel order R, G, B, depth,
  rotation; row 0 is the bottom of the sweep (camera start), column j is the
  j-th slit along the path;
* the known-pixel mask is (H, W) bool and is always exactly the predicate
  "depth is finite"; depth of unknown pixels is stored as +inf;
* rotation entries are per-row angular increments in radians, so a column's
  sum equals the total angle the slit camera turned (pi for a full
  side-to-top sweep);
* colors are floats in [0, 1] regardless of source file width.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError

N_CHANNELS = 5
CH_R, CH_G, CH_B, CH_DEPTH, CH_ROT = range(N_CHANNELS)

# Slack for float comparisons against exact bounds (e.g. rotation <= pi after
# a column rescale lands one ulp above pi).
_EDGE_TOL = 1e-9


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """Colored 3D points: positions in meters, RGB in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        cols = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        if len(pts) != len(cols):
            raise InvariantError(f"points ({len(pts)}) and colors ({len(cols)}) differ in length")
        if not np.all(np.isfinite(pts)):
            raise InvariantError("point coordinates must be finite")
        if len(cols) and (cols.min() < -_EDGE_TOL or cols.max() > 1.0 + _EDGE_TOL):
            raise InvariantError("color components must lie in [0, 1]")
        object.__setattr__(self, "points", _frozen(pts, np.float64))
        object.__setattr__(self, "colors", _frozen(np.clip(cols, 0.0, 1.0), np.float64))

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 3)), np.empty((0, 3)))


def _validate_channels(channels, mask, what):
    """Shared channel/mask invariant checks for images and patches."""
    if channels.shape[:2] != mask.shape or channels.shape[2] != N_CHANNELS:
        raise InvariantError(
            f"{what}: channels {channels.shape} inconsistent with mask {mask.shape}"
        )
    rgb = channels[..., :CH_DEPTH]
    depth = channels[..., CH_DEPTH]
    rot = channels[..., CH_ROT]
    known = mask
    if known.any():
        krgb = rgb[known]
        if not np.all(np.isfinite(krgb)):
            raise InvariantError(f"{what}: non-finite color at a known pixel")
        if krgb.min() < -_EDGE_TOL or krgb.max() > 1.0 + _EDGE_TOL:
            raise InvariantError(f"{what}: color outside [0, 1] at a known pixel")
        kd = depth[known]
        if not np.all(np.isfinite(kd)) or kd.min() <= 0.0:
            raise InvariantError(f"{what}: depth at a known pixel must be finite and > 0")
    if not np.all(depth[~known] == np.inf):
        raise InvariantError(f"{what}: depth of unknown pixels must be +inf")
    if not np.all(np.isfinite(rot)):
        raise InvariantError(f"{what}: rotation channel must be finite everywhere")
    if rot.min() < -_EDGE_TOL or rot.max() > np.pi + _EDGE_TOL:
        raise InvariantError(f"{what}: rotation entries must lie in [0, pi]")


@dataclass(frozen=True)
class McopImage:
    """Multi-center-of-projection raster: (H, W, 5) channels + known mask.

    ``wrap`` marks images captured along a closed path, where column W-1 is
    adjacent to column 0 (windows may wrap around the seam).
    """

    channels: np.ndarray
    mask: np.ndarray
    wrap: bool = False

    def __post_init__(self):
        ch = np.ascontiguousarray(self.channels, dtype=np.float64)
        m = np.ascontiguousarray(self.mask, dtype=bool)
        _validate_channels(ch, m, "image")
        object.__setattr__(self, "channels", _frozen(ch, np.float64))
        object.__setattr__(self, "mask", _frozen(m, bool))
        object.__setattr__(self, "wrap", bool(self.wrap))

    @property
    def height(self):
        return self.channels.shape[0]

    @property
    def width(self):
        return self.channels.shape[1]

    @property
    def rgb(self):
        return self.channels[..., :CH_DEPTH]

    @property
    def depth(self):
        return self.channels[..., CH_DEPTH]

    @property
    def rotation(self):
        return self.channels[..., CH_ROT]

    def completeness(self):
        return float(self.mask.mean()) if self.mask.size else 0.0

    def validate(self):
        """Re-run invariant checks (used before serialization)."""
        _validate_channels(self.channels, self.mask, "image")
        if not np.array_equal(derive_mask(self), self.mask):
            raise InvariantError("image: mask does not match the finite-depth predicate")

    def replace(self, channels=None, mask=None, wrap=None):
        return McopImage(
            self.channels if channels is None else channels,
            self.mask if mask is None else mask,
            self.wrap if wrap is None else wrap,
        )


def derive_mask(image) -> np.ndarray:
    """Known-pixel mask derived from the depth plane: 0 iff depth is +inf."""
    depth = image.depth if isinstance(image, McopImage) else np.asarray(image)
    return depth != np.inf


@dataclass(frozen=True)
class Patch:
    """A square w x w window of a source image (5 channels + mask).

    ``completeness`` is derived: fraction of known pixels over w^2.
    """

    source_id: int
    x: int
    y: int
    w: int
    data: np.ndarray
    mask: np.ndarray
    completeness: float = field(init=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        w = int(self.w)
        if data.shape != (w, w, N_CHANNELS) or m.shape != (w, w):
            raise InvariantError(f"patch: expected ({w}, {w}) window, got data {data.shape}")
        _validate_channels(data, m, "patch")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "completeness", float(m.sum()) / float(w * w))
