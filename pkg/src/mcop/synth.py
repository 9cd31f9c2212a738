"""Procedural desk-scale test structures: textured walls along open or
closed footprints, with varying heights, door gaps, and vertically
imbalanced erosion masks.

Walls are sampled on both faces plus the top at a fixed spacing and colored
by a banded stone-course texture (running-bond stones over mortar lines,
per-stone color jitter and depth relief), which gives the corpus structure
at two spatial frequencies so retrieval-based completion has something
non-trivial to preserve. The camera annotation emitted for each structure
is the buffered outline of the footprint (outer ring, plus the inner ring
for closed footprints), oriented so the wall lies to the left of travel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LineString
from shapely.geometry.polygon import orient

from .core import CH_DEPTH, McopImage, N_CHANNELS, Patch, PointCloud
from .errors import ConfigError, DegeneratePathError
from .sweep import RotationProfile, SweepPath, build_rotation_profile


@dataclass(frozen=True)
class StructureSpec:
    name: str
    footprint: np.ndarray            # (M, 2) centerline vertices
    closed: bool = False
    height: object = 1.5             # scalar or [[frac, h], ...] breakpoints
    thickness: float = 0.2
    spacing: float = 0.01
    standoff: float = 0.4            # camera ring distance beyond the face
    doors: tuple = ()                # ({"start": m, "end": m}, ...)
    base_color: tuple = (0.55, 0.45, 0.35)
    course_height: float = 0.22
    stone_width: float = 0.38
    mortar_width: float = 0.025
    color_jitter: float = 0.14
    depth_relief: float = 0.02

    @classmethod
    def from_dict(cls, d: dict) -> "StructureSpec":
        d = dict(d)
        if "footprint" not in d:
            raise ConfigError("structure config: missing key 'footprint'")
        d["footprint"] = np.asarray(d["footprint"], dtype=np.float64).reshape(-1, 2)
        d["doors"] = tuple(d.get("doors", ()))
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        for k in d:
            if k not in known:
                raise ConfigError(f"structure config: unknown key {k!r}")
        if "name" not in d:
            d["name"] = "structure"
        return cls(**d)


@dataclass(frozen=True)
class SynthResult:
    cloud: PointCloud
    loops: list            # annotation polylines (camera rings), closed
    meta: dict


def _hash01(ix, iy, salt: int) -> np.ndarray:
    """Deterministic per-cell hash in [0, 1): splitmix finalize over two
    int grids and a salt. Stable across platforms."""
    x = np.asarray(ix, dtype=np.int64).astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    y = np.asarray(iy, dtype=np.int64).astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h = x ^ y ^ np.uint64(salt & 0xFFFFFFFFFFFFFFFF)
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h.astype(np.float64) / float(2 ** 64)


def _arclengths(pts):
    seg = np.diff(pts, axis=0)
    return np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])


def _frame_at(loop, cum, u):
    """Position and unit tangent of the polyline at arclengths ``u``."""
    seg = np.diff(loop, axis=0)
    lens = np.diff(cum)
    k = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(seg) - 1)
    safe = np.where(lens[k] > 0, lens[k], 1.0)
    frac = (u - cum[k]) / safe
    pos = loop[k] + frac[:, None] * seg[k]
    d = seg[k] / safe[:, None]
    return pos, d


def _height_fn(height, total_len):
    if np.isscalar(height):
        return lambda u: np.full_like(np.asarray(u, dtype=np.float64), float(height))
    bp = np.asarray(height, dtype=np.float64).reshape(-1, 2)
    fr, hs = bp[:, 0], bp[:, 1]
    return lambda u: np.interp(np.asarray(u, dtype=np.float64) / total_len, fr, hs)


def _door_mask(doors, u):
    gap = np.zeros(len(u), dtype=bool)
    for d in doors:
        gap |= (u >= float(d["start"])) & (u <= float(d["end"]))
    return gap


def _stone_colors(spec: StructureSpec, u, v, seed: int):
    course = np.floor(v / spec.course_height).astype(np.int64)
    off = np.where(course % 2 == 0, 0.0, spec.stone_width / 2.0)
    su = u + off
    stone = np.floor(su / spec.stone_width).astype(np.int64)
    mortar = ((v - course * spec.course_height) < spec.mortar_width) | (
        (su - stone * spec.stone_width) < spec.mortar_width
    )
    base = np.asarray(spec.base_color)
    cols = np.empty((len(u), 3))
    for c in range(3):
        jit = (_hash01(stone, course, seed * 7 + c) - 0.5) * 2.0 * spec.color_jitter
        cols[:, c] = base[c] * (1.0 + jit)
    cols[mortar] = 0.28
    relief = (_hash01(stone, course, seed * 7 + 3) - 0.5) * 2.0 * spec.depth_relief
    relief = np.where(mortar, relief - 0.6 * spec.depth_relief, relief)
    return np.clip(cols, 0.0, 1.0), relief


def synth_wall(spec: StructureSpec, seed: int = 0) -> SynthResult:
    """Sample both faces plus the top of a wall and emit the camera
    annotation rings. Deterministic in (spec, seed)."""
    pts = np.asarray(spec.footprint, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise DegeneratePathError("footprint needs at least 2 vertices")
    loop = np.vstack([pts, pts[:1]]) if spec.closed else pts
    cum = _arclengths(loop)
    total = cum[-1]
    if total <= 1e-9:
        raise DegeneratePathError("footprint has zero length")

    s = spec.spacing
    nu = max(1, int(round(total / s)))
    u = (np.arange(nu) + 0.5) * (total / nu)
    pos, tang = _frame_at(loop, cum, u)
    right = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    h_of = _height_fn(spec.height, total)
    h_u = h_of(u)
    gap = _door_mask(spec.doors, u)

    pieces_p, pieces_c = [], []

    # vertical faces
    nv = np.floor(h_u / s).astype(np.int64)
    active = (~gap) & (nv > 0)
    for side, salt in ((1.0, 11), (-1.0, 13)):
        cnt = nv[active]
        if cnt.sum() == 0:
            continue
        u_r = np.repeat(u[active], cnt)
        pos_r = np.repeat(pos[active], cnt, axis=0)
        nrm_r = np.repeat(right[active], cnt, axis=0)
        ends = np.cumsum(cnt)
        within = np.arange(ends[-1]) - np.repeat(ends - cnt, cnt)
        v = (within + 0.5) * s
        cols, relief = _stone_colors(spec, u_r, v, seed + salt)
        off = spec.thickness / 2.0 + relief
        xy = pos_r + side * off[:, None] * nrm_r
        pieces_p.append(np.column_stack([xy, v]))
        pieces_c.append(cols)

    # top
    nt = max(1, int(round(spec.thickness / s)))
    t_off = ((np.arange(nt) + 0.5) / nt - 0.5) * spec.thickness
    act = np.nonzero((~gap) & (h_u > 0))[0]
    if len(act):
        u_r = np.repeat(u[act], nt)
        pos_r = np.repeat(pos[act], nt, axis=0)
        nrm_r = np.repeat(right[act], nt, axis=0)
        t_r = np.tile(t_off, len(act))
        h_r = np.repeat(h_u[act], nt)
        cols, _relief = _stone_colors(spec, u_r, h_r - 1e-6, seed + 17)
        xy = pos_r + t_r[:, None] * nrm_r
        pieces_p.append(np.column_stack([xy, h_r]))
        pieces_c.append(cols)

    if not pieces_p:
        raise ConfigError(f"structure {spec.name!r} produced no surface points")
    cloud = PointCloud(np.vstack(pieces_p), np.vstack(pieces_c))

    ring_dist = spec.thickness / 2.0 + spec.standoff
    line = LineString(loop)
    band = orient(line.buffer(ring_dist, quad_segs=16), 1.0)
    loops = [np.asarray(band.exterior.coords, dtype=np.float64)]
    loops += [np.asarray(i.coords, dtype=np.float64) for i in band.interiors]

    meta = {
        "name": spec.name,
        "footprint": pts.tolist(),
        "closed": bool(spec.closed),
        "height": spec.height if np.isscalar(spec.height) else np.asarray(spec.height).tolist(),
        "max_height": float(np.max(h_u)),
        "thickness": spec.thickness,
        "spacing": spec.spacing,
        "standoff": spec.standoff,
        "doors": [dict(d) for d in spec.doors],
        "length": float(total),
        "point_count": len(cloud),
    }
    return SynthResult(cloud, loops, meta)


def profile_from_structure(
    path: SweepPath,
    meta: dict,
    H: int,
    step: float,
    clearance: float = 0.06,
) -> RotationProfile:
    """Per-column turn rows from the structure the column faces: the slit
    climbs to just above the local wall height, then arcs; door columns turn
    immediately (carved openings)."""
    from scipy.spatial import cKDTree

    pts = np.asarray(meta["footprint"], dtype=np.float64).reshape(-1, 2)
    closed = bool(meta["closed"])
    loop = np.vstack([pts, pts[:1]]) if closed else pts
    cum = _arclengths(loop)
    total = cum[-1]
    dense_u = np.linspace(0.0, total, max(int(total / (step * 0.5)), 2))
    dense_p, _ = _frame_at(loop, cum, dense_u)
    tree = cKDTree(dense_p)
    _, idx = tree.query(path.bases[:, :2], k=1)
    u_cols = dense_u[idx]

    h_of = _height_fn(
        meta["height"] if np.isscalar(meta["height"]) or isinstance(meta["height"], (int, float))
        else meta["height"], total
    )
    h_cols = h_of(u_cols)
    doors = _door_mask(tuple(meta.get("doors", ())), u_cols)
    turn = np.clip(np.round((h_cols + clearance) / step).astype(np.int64), 1, H - 1)
    return build_rotation_profile(H, turn, opening_mask=doors)


def synth_erosion_mask(width: int, height: int, severity: float, seed: int = 0) -> Patch:
    """Mask-only square patch: union of seeded ellipses whose centers are
    biased toward the top rows, plus a row-graded noise floor, reproducing
    the vertically imbalanced survival of real weathered surfaces."""
    if width != height:
        raise ConfigError("erosion mask patches must be square")
    if not (0.0 < severity < 1.0):
        raise ConfigError("severity must lie in (0, 1)")
    w = int(width)
    rng = np.random.default_rng(seed)
    hide = np.zeros((w, w), dtype=bool)
    yy, xx = np.mgrid[0:w, 0:w]

    k = int(round(severity * 18))
    for _ in range(k):
        cy = w * np.sqrt(rng.random())          # density grows with row
        cx = w * rng.random()
        a = w * rng.uniform(0.08, 0.28)
        b = w * rng.uniform(0.06, 0.22)
        phi = rng.uniform(0.0, np.pi)
        dx, dy = xx - cx, yy - cy
        xr = dx * np.cos(phi) + dy * np.sin(phi)
        yr = -dx * np.sin(phi) + dy * np.cos(phi)
        hide |= (xr / a) ** 2 + (yr / b) ** 2 <= 1.0

    p_row = severity * 0.35 * (np.arange(w) / max(w - 1, 1)) ** 2
    hide |= rng.random((w, w)) < p_row[:, None]

    data = np.zeros((w, w, N_CHANNELS))
    data[..., CH_DEPTH] = np.where(hide, np.inf, 1.0)
    return Patch(0, 0, 0, w, data, ~hide)
