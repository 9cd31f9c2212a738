"""Evaluation suite: windowed image metrics over held-out regions plus
point-cloud precision/coverage/Chamfer distances.

Texture metrics run on the RGB channels, geometry metrics on the depth
channel normalized to [0, 1] by the structure's largest finite depth.
"patch-FD" is a Fréchet distance between Gaussian fits of flattened
8x8-downsampled window vectors (a raw-pixel stand-in for an embedding-based
distribution distance; values are not comparable to any published FID).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.signal import convolve2d

from .core import CH_DEPTH, McopImage
from .errors import ConfigError, DimensionMismatchError, EmptyCloudError, InvariantError
from .projection import nearest_neighbor_dists
from .reproject import reproject
from .sweep import SweepPath

PSNR_CAP = 99.0
DEFAULT_N_WINDOWS = 500
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
_SSIM_WIN = 11


class WindowSample(NamedTuple):
    x: int
    y: int
    pred: np.ndarray   # (w, w, 5)
    truth: np.ndarray  # (w, w, 5)
    held: np.ndarray   # (w, w) bool


def eval_windows(
    pred: McopImage,
    truth: McopImage,
    held_out: np.ndarray,
    n_windows: int = DEFAULT_N_WINDOWS,
    w: int = 64,
    seed: int = 0,
) -> list:
    """Seeded uniform draws of w-windows, each required to intersect the
    held-out map; sampling is over the exact feasible set, so identical
    seeds give identical coordinates."""
    if pred.channels.shape != truth.channels.shape:
        raise DimensionMismatchError("pred and truth images differ in size")
    held = np.asarray(held_out, dtype=bool)
    if held.shape != pred.mask.shape:
        raise DimensionMismatchError("held-out map does not match image size")
    if not held.any():
        raise InvariantError("held-out map is empty")
    h, wid = pred.height, pred.width
    if w > h or w > wid:
        raise ConfigError(f"window size {w} exceeds image {h}x{wid}")

    s = np.zeros((h + 1, wid + 1), dtype=np.int64)
    s[1:, 1:] = np.cumsum(np.cumsum(held.astype(np.int64), axis=0), axis=1)
    ys = np.arange(h - w + 1)
    xs = np.arange(wid - w + 1)
    counts = (
        s[np.ix_(ys + w, xs + w)] - s[np.ix_(ys, xs + w)]
        - s[np.ix_(ys + w, xs)] + s[np.ix_(ys, xs)]
    )
    feas_y, feas_x = np.nonzero(counts > 0)
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, len(feas_y), size=int(n_windows))
    out = []
    for p in pick:
        y, x = int(feas_y[p]), int(feas_x[p])
        out.append(WindowSample(
            x, y,
            pred.channels[y:y + w, x:x + w],
            truth.channels[y:y + w, x:x + w],
            held[y:y + w, x:x + w],
        ))
    return out


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"window shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mae(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range, capped at
    99 dB (identical inputs)."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


def _gaussian_kernel():
    r = np.arange(_SSIM_WIN) - (_SSIM_WIN - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_KERNEL = _gaussian_kernel()


def _ssim_single(a, b):
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2
    k = _SSIM_KERNEL
    mu1 = convolve2d(a, k, mode="valid")
    mu2 = convolve2d(b, k, mode="valid")
    s11 = convolve2d(a * a, k, mode="valid") - mu1 * mu1
    s22 = convolve2d(b * b, k, mode="valid") - mu2 * mu2
    s12 = convolve2d(a * b, k, mode="valid") - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, dynamic range 1. Multi-channel inputs average the
    per-channel values."""
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.shape[0] < _SSIM_WIN or a.shape[1] < _SSIM_WIN:
        raise ConfigError(f"ssim needs windows of at least {_SSIM_WIN} pixels per side")
    return float(np.mean([_ssim_single(a[..., c], b[..., c]) for c in range(a.shape[2])]))


def _downsample8(win):
    """Block-mean a (w, w, C) window down to (8, 8, C) and flatten."""
    w = win.shape[0]
    if w < 8:
        raise ConfigError("patch-FD windows must be at least 8 pixels")
    m = (w // 8) * 8
    b = w // 8
    x = win[:m, :m].reshape(8, b, 8, b, -1).mean(axis=(1, 3))
    return x.reshape(-1)


def frechet_gaussian(mu1, cov1, mu2, cov2) -> float:
    """Fréchet distance between two Gaussians; the trace of the matrix
    square root comes from the eigenvalues of cov1 @ cov2 with negative
    values clamped to zero."""
    dmu = np.asarray(mu1) - np.asarray(mu2)
    ev = np.linalg.eigvals(np.asarray(cov1) @ np.asarray(cov2))
    tr_sqrt = float(np.sum(np.sqrt(np.clip(np.real(ev), 0.0, None))))
    return float(dmu @ dmu + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_sqrt)


def patch_fd(pred_windows, truth_windows) -> float:
    """Fréchet distance on mean/covariance of flattened 8x8-downsampled
    window vectors."""
    if len(pred_windows) < 2 or len(truth_windows) < 2:
        raise ConfigError("patch-FD needs at least 2 windows per side")
    x1 = np.stack([_downsample8(np.asarray(w, np.float64)) for w in pred_windows])
    x2 = np.stack([_downsample8(np.asarray(w, np.float64)) for w in truth_windows])
    mu1, mu2 = x1.mean(axis=0), x2.mean(axis=0)
    c1 = np.cov(x1, rowvar=False)
    c2 = np.cov(x2, rowvar=False)
    return max(0.0, frechet_gaussian(mu1, c1, mu2, c2))


class ChamferResult(NamedTuple):
    precision_cm: float
    coverage_cm: float
    cd_cm: float


def chamfer(pred, truth) -> ChamferResult:
    """Exact symmetric Chamfer terms in centimeters: precision is the mean
    prediction-to-truth nearest distance, coverage the reverse, CD their
    sum."""
    if len(pred) == 0 or len(truth) == 0:
        raise EmptyCloudError("chamfer requires two non-empty clouds")
    p = float(np.mean(nearest_neighbor_dists(pred.points, truth.points))) * 100.0
    c = float(np.mean(nearest_neighbor_dists(truth.points, pred.points))) * 100.0
    return ChamferResult(p, c, p + c)


@dataclass
class EvalConfig:
    n_windows: int = DEFAULT_N_WINDOWS
    w: int = 64
    seed: int = 0


_REPORT_FIELDS = (
    "mae_texture", "mae_geometry", "ssim_texture", "ssim_geometry",
    "psnr_texture", "psnr_geometry", "patch_fd_texture", "patch_fd_geometry",
    "mae_texture_heldout", "mae_geometry_heldout",
    "chamfer_p_cm", "chamfer_c_cm", "chamfer_cd_cm",
)


@dataclass
class MetricsReport:
    mae_texture: float | None = None
    mae_geometry: float | None = None
    ssim_texture: float | None = None
    ssim_geometry: float | None = None
    psnr_texture: float | None = None
    psnr_geometry: float | None = None
    patch_fd_texture: float | None = None
    patch_fd_geometry: float | None = None
    mae_texture_heldout: float | None = None
    mae_geometry_heldout: float | None = None
    chamfer_p_cm: float | None = None
    chamfer_c_cm: float | None = None
    chamfer_cd_cm: float | None = None
    window_count: int = 0
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = []
        for k in _REPORT_FIELDS + ("window_count", "seed"):
            v = getattr(self, k)
            lines.append(f"{k} = {'absent' if v is None else repr(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def aggregate(cls, reports) -> "MetricsReport":
        """Mean of present values per field; window counts are summed."""
        reports = list(reports)
        agg = cls()
        for k in _REPORT_FIELDS:
            vals = [getattr(r, k) for r in reports if getattr(r, k) is not None]
            if vals:
                setattr(agg, k, float(np.mean(vals)))
        agg.window_count = int(sum(r.window_count for r in reports))
        agg.seed = reports[0].seed if reports else 0
        return agg


def _restrict(image: McopImage, keep: np.ndarray) -> McopImage:
    """Image with only ``keep`` pixels known (others blanked)."""
    ch = image.channels.copy()
    keep = keep & image.mask
    ch[~keep, :3] = 0.0
    ch[~keep, CH_DEPTH] = np.inf
    return McopImage(ch, keep, wrap=image.wrap)


def evaluate(
    pred_image: McopImage,
    truth_image: McopImage,
    held_out: np.ndarray,
    path: SweepPath,
    cfg: EvalConfig = EvalConfig(),
    step: float | None = None,
) -> MetricsReport:
    """Full per-structure evaluation: windowed texture/geometry metrics plus
    Chamfer terms between the reprojected held-out portions of prediction
    and truth."""
    samples = eval_windows(
        pred_image, truth_image, held_out, cfg.n_windows, cfg.w, cfg.seed
    )
    rep = MetricsReport(window_count=len(samples), seed=cfg.seed)

    pred_rgb = [s.pred[..., :3] for s in samples]
    truth_rgb = [s.truth[..., :3] for s in samples]
    rep.mae_texture = float(np.mean([mae(a, b) for a, b in zip(pred_rgb, truth_rgb)]))
    rep.ssim_texture = float(np.mean([ssim(a, b) for a, b in zip(pred_rgb, truth_rgb)]))
    rep.psnr_texture = float(np.mean([psnr(a, b) for a, b in zip(pred_rgb, truth_rgb)]))
    rep.patch_fd_texture = patch_fd(pred_rgb, truth_rgb)

    finite = np.concatenate([
        truth_image.depth[truth_image.mask].ravel(),
        pred_image.depth[pred_image.mask].ravel(),
    ])
    if finite.size:
        maxd = float(finite.max())
        def norm_depth(win):
            d = win[..., CH_DEPTH]
            return np.clip(np.where(np.isfinite(d), d / maxd, 1.0), 0.0, 1.0)
        pred_g = [norm_depth(s.pred) for s in samples]
        truth_g = [norm_depth(s.truth) for s in samples]
        rep.mae_geometry = float(np.mean([mae(a, b) for a, b in zip(pred_g, truth_g)]))
        rep.ssim_geometry = float(np.mean([ssim(a, b) for a, b in zip(pred_g, truth_g)]))
        rep.psnr_geometry = float(np.mean([psnr(a, b) for a, b in zip(pred_g, truth_g)]))
        rep.patch_fd_geometry = patch_fd(
            [g[..., None] for g in pred_g], [g[..., None] for g in truth_g]
        )

        held = np.asarray(held_out, dtype=bool) & truth_image.mask
        if held.any():
            rep.mae_texture_heldout = float(
                np.mean(np.abs(pred_image.rgb[held] - truth_image.rgb[held]))
            )
            pd = np.clip(np.where(np.isfinite(pred_image.depth[held]),
                                  pred_image.depth[held] / maxd, 1.0), 0.0, 1.0)
            td = np.clip(truth_image.depth[held] / maxd, 0.0, 1.0)
            rep.mae_geometry_heldout = float(np.mean(np.abs(pd - td)))

            s = step if step is not None else path.step
            pred_cloud = reproject(_restrict(pred_image, held), path, s)
            truth_cloud = reproject(_restrict(truth_image, held), path, s)
            if len(pred_cloud) and len(truth_cloud):
                ch = chamfer(pred_cloud, truth_cloud)
                rep.chamfer_p_cm = ch.precision_cm
                rep.chamfer_c_cm = ch.coverage_cm
                rep.chamfer_cd_cm = ch.cd_cm
    return rep
