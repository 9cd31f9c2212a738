"""Slit-camera sweep construction.

A sweep is built in three steps:

1. ``resample_path`` turns a 2D annotation polyline into uniformly spaced
   per-column frames (base point at ground level, horizontal unit tangent,
   horizontal unit normal pointing at the target surface);
2. ``build_rotation_profile`` assigns each column H per-row angular
   increments that sum to pi, zero below the column's turn row (the shape
   prior: where the slit stops climbing and starts arcing over the top);
3. ``integrate_slit_poses`` integrates camera centers and ray directions row
   by row: the ray starts horizontal along the normal and pitches toward
   straight down by each increment, while the camera steps perpendicular to
   the current ray (a vertical climb while increments are zero, an arc over
   the top once they turn on).

Side conventions: the surface lies to the LEFT of the direction of travel;
``offset`` pushes the resampled path to the right (away from the surface),
and each frame's normal is the left normal of its tangent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegeneratePathError, DimensionMismatchError, SelfIntersectingOffsetError

DEFAULT_STEP = 0.02

_Z = np.array([0.0, 0.0, 1.0])


class PathFrame(NamedTuple):
    base: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


def kahan_colsum(a: np.ndarray) -> np.ndarray:
    """Compensated per-column sums of an (H, W) array."""
    a = np.asarray(a, dtype=np.float64)
    s = np.zeros(a.shape[1])
    c = np.zeros(a.shape[1])
    for row in a:
        y = row - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


@dataclass(frozen=True)
class SweepPath:
    """Uniformly resampled camera path: one frame per image column."""

    bases: np.ndarray      # (W, 3)
    tangents: np.ndarray   # (W, 3) unit, horizontal
    normals: np.ndarray    # (W, 3) unit, horizontal, orthogonal to tangent
    step: float            # arclength spacing actually used
    closed: bool

    def __len__(self):
        return len(self.bases)

    def frame(self, j) -> PathFrame:
        return PathFrame(self.bases[j], self.tangents[j], self.normals[j])

    @property
    def columns(self):
        return [self.frame(j) for j in range(len(self))]


@dataclass(frozen=True)
class RotationProfile:
    """Per-column per-row angular increments (radians), summing to pi."""

    increments: np.ndarray  # (H, W) float64, >= 0
    turn_rows: np.ndarray   # (W,) int64: first row with a positive increment

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=np.float64)
        if inc.ndim == 1:
            inc = inc[:, None]
        tr = np.atleast_1d(np.asarray(self.turn_rows, dtype=np.int64))
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "turn_rows", tr)

    @property
    def height(self):
        return self.increments.shape[0]

    @property
    def width(self):
        return self.increments.shape[1]

    def column_sums(self) -> np.ndarray:
        return kahan_colsum(self.increments)


@dataclass(frozen=True)
class SlitPoses:
    """Camera center and unit ray direction for every pixel of the raster."""

    centers: np.ndarray     # (H, W, 3)
    rays: np.ndarray        # (H, W, 3) unit
    increments: np.ndarray  # (H, W) rotation increments used
    tangents: np.ndarray    # (W, 3) column-plane normals
    step: float
    closed: bool

    @property
    def height(self):
        return self.centers.shape[0]

    @property
    def width(self):
        return self.centers.shape[1]


def _polyline_arclength(pts):
    seg = np.diff(pts, axis=0)
    return np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])


def offset_polyline(pts: np.ndarray, offset: float, closed: bool):
    """Push a polyline to the right of its travel direction by ``offset``.

    Vertices move along miter (angle-bisector) normals so every segment
    shifts by exactly ``offset``. Returns (offset vertices, unit offset
    direction per vertex). A segment whose offset image reverses direction
    indicates the offset exceeds the local turning radius; that is reported,
    not repaired.
    """
    seg = np.diff(np.vstack([pts, pts[:1]]) if closed else pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lens == 0.0):
        keep = np.concatenate([lens > 0.0, [True]]) if not closed else lens > 0.0
        return offset_polyline(pts[keep], offset, closed)
    d = seg / lens[:, None]
    right = np.stack([d[:, 1], -d[:, 0]], axis=1)
    n = len(pts)
    unit = np.empty((n, 2))
    scale = np.ones(n)
    if closed:
        prev = np.roll(right, 1, axis=0)
        m = prev + right
        mlen = np.hypot(m[:, 0], m[:, 1])
        mlen = np.where(mlen < 1e-12, 1.0, mlen)
        unit = m / mlen[:, None]
        scale = 1.0 / np.clip(np.einsum("ij,ij->i", unit, right), 0.1, None)
    else:
        unit[0] = right[0]
        unit[-1] = right[-1]
        if n > 2:
            m = right[:-1] + right[1:]
            mlen = np.hypot(m[:, 0], m[:, 1])
            mlen = np.where(mlen < 1e-12, 1.0, mlen)
            v = m / mlen[:, None]
            scale[1:-1] = 1.0 / np.clip(np.einsum("ij,ij->i", v, right[1:]), 0.1, None)
            unit[1:-1] = v
    out = pts + offset * scale[:, None] * unit
    oseg = np.diff(np.vstack([out, out[:1]]) if closed else out, axis=0)
    rev = np.einsum("ij,ij->i", oseg, seg) <= 0.0
    if np.any(rev):
        raise SelfIntersectingOffsetError(int(np.argmax(rev)))
    return out, unit


def resample_path(
    polyline,
    ground_z: float = 0.0,
    offset: float = 0.0,
    step: float = DEFAULT_STEP,
    closed: bool | None = None,
) -> SweepPath:
    """Resample an annotation polyline into uniformly spaced slit frames.

    ``closed=None`` auto-detects closure from a repeated first vertex. For
    closed paths the spacing is adjusted to the nearest divisor of the total
    length so the wrap seam keeps uniform spacing; the adjusted value is
    stored in the result.
    """
    pts = np.asarray(polyline, dtype=np.float64).reshape(-1, 2)
    if step <= 0.0:
        raise ConfigError("step must be positive")
    if offset < 0.0:
        raise ConfigError("offset must be non-negative")
    if len(pts) >= 2 and closed is None:
        closed = bool(np.allclose(pts[0], pts[-1], atol=1e-12))
    if closed and len(pts) >= 2 and np.allclose(pts[0], pts[-1], atol=1e-12):
        pts = pts[:-1]
    if len(pts) < 2:
        raise DegeneratePathError("polyline needs at least 2 distinct vertices")

    offset_dirs = None
    if offset > 0.0:
        pts, offset_dirs = offset_polyline(pts, offset, bool(closed))

    loop = np.vstack([pts, pts[:1]]) if closed else pts
    cum = _polyline_arclength(loop)
    total = cum[-1]
    if total <= 1e-12:
        raise DegeneratePathError("polyline has zero total length")

    if closed:
        n = max(3, int(round(total / step)))
        eff = total / n
        s = np.arange(n) * eff
    else:
        n = int(math.floor(total / step + 1e-9)) + 1
        eff = step
        s = np.minimum(np.arange(n) * eff, total)

    x = np.interp(s, cum, loop[:, 0])
    y = np.interp(s, cum, loop[:, 1])
    p = np.stack([x, y], axis=1)

    if offset_dirs is not None:
        # interpolate the per-vertex offset directions: the normal points
        # back along them toward the original polyline
        dirs_loop = np.vstack([offset_dirs, offset_dirs[:1]]) if closed else offset_dirs
        ox = np.interp(s, cum, dirs_loop[:, 0])
        oy = np.interp(s, cum, dirs_loop[:, 1])
        olen = np.hypot(ox, oy)
        olen = np.where(olen < 1e-12, 1.0, olen)
        n2 = -np.stack([ox, oy], axis=1) / olen[:, None]
        t2 = np.stack([n2[:, 1], -n2[:, 0]], axis=1)
    else:
        if closed:
            nxt = np.roll(p, -1, axis=0)
        else:
            nxt = np.vstack([p[1:], p[-1] + (p[-1] - p[-2])])
        d = nxt - p
        dl = np.hypot(d[:, 0], d[:, 1])
        dl = np.where(dl < 1e-15, 1.0, dl)
        t2 = d / dl[:, None]
        n2 = np.stack([-t2[:, 1], t2[:, 0]], axis=1)  # left normal

    tangents = np.zeros((n, 3))
    tangents[:, :2] = t2
    normals = np.zeros((n, 3))
    normals[:, :2] = n2
    bases = np.zeros((n, 3))
    bases[:, :2] = p
    bases[:, 2] = ground_z
    return SweepPath(bases, tangents, normals, float(eff), bool(closed))


def build_rotation_profile(
    H: int,
    turn_rows,
    opening_mask=None,
) -> RotationProfile:
    """Uniform-arc rotation profile: zero below the turn row, pi spread
    evenly over the remaining rows. Opening (door) columns turn at row 0."""
    tr = np.atleast_1d(np.asarray(turn_rows, dtype=np.int64)).copy()
    if opening_mask is not None:
        op = np.atleast_1d(np.asarray(opening_mask, dtype=bool))
        if op.shape != tr.shape:
            raise DimensionMismatchError("opening_mask shape differs from turn_rows")
        tr[op] = 0
    if np.any(tr < 0) or np.any(tr >= H):
        bad = int(np.argmax((tr < 0) | (tr >= H)))
        raise ConfigError(f"turn_row out of range at column {bad}: {tr[bad]} (H={H})")
    W = len(tr)
    rows = np.arange(H)[:, None]
    active = rows >= tr[None, :]
    inc = np.where(active, np.pi / (H - tr)[None, :], 0.0)
    return RotationProfile(inc, tr)


def _integrate(bases, normals, increments, step):
    """Closed-form pose integration shared by forward and inverse mapping.

    theta_i = cumulative rotation through row i (inclusive);
    ray_i   = cos(theta) * normal - sin(theta) * z_hat;
    move_i  = ray_i pitched back a quarter turn = sin(theta) * normal
              + cos(theta) * z_hat;
    c_0 = base, c_i = c_{i-1} + step * move_i.
    """
    theta = np.cumsum(increments, axis=0)
    ct = np.cos(theta)[..., None]
    st = np.sin(theta)[..., None]
    nrm = normals[None, :, :]
    rays = ct * nrm - st * _Z
    moves = st * nrm + ct * _Z
    cs = np.cumsum(moves, axis=0)
    centers = bases[None, :, :] + step * (cs - cs[0:1])
    return centers, rays


def integrate_slit_poses(
    path: SweepPath, profile: RotationProfile, H: int, step: float
) -> SlitPoses:
    if profile.width != len(path):
        raise DimensionMismatchError(
            f"profile has {profile.width} columns, path has {len(path)}"
        )
    if profile.height != H:
        raise DimensionMismatchError(f"profile height {profile.height} != H {H}")
    centers, rays = _integrate(path.bases, path.normals, profile.increments, step)
    return SlitPoses(
        centers, rays, profile.increments, path.tangents, float(step), path.closed
    )


def read_polylines(path) -> list:
    """Parse the annotation text format: one 'x y' pair per line, loops
    separated by blank lines, '#' comments."""
    loops = []
    cur = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line:
                if cur:
                    loops.append(np.asarray(cur, dtype=np.float64))
                    cur = []
                continue
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigError(f"annotation line not an 'x y' pair: {line!r}")
            cur.append((float(parts[0]), float(parts[1])))
    if cur:
        loops.append(np.asarray(cur, dtype=np.float64))
    return loops


def write_polylines(loops, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# annotation polylines: one 'x y' per line, blank line between loops\n")
        for k, loop in enumerate(loops):
            if k:
                f.write("\n")
            for x, y in np.asarray(loop, dtype=np.float64):
                f.write(f"{float(x)!r} {float(y)!r}\n")
