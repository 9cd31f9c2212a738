"""Completion objectives and the classical exemplar-based baseline inpainter.

The loss terms are standalone evaluables:

* ``consistency_loss``: mean per-pixel 5-channel L2 against the input over
  its known pixels (depth compared only where both sides are finite);
* ``regularity_loss``: mean squared deviation of per-column rotation sums
  from pi;
* ``texture_similarity_loss``: mean Gram-matrix distance between adjacent
  window pairs (raw-pixel Gram over the 5 channels).

``baseline_inpaint`` realizes patch self-supervision without any learned
model: it diffuses an initial estimate into the holes, then repeatedly
retrieves the best-matching bank patch per window (masked L2 plus a Gram
term against an already-resolved neighbor) and feather-blends it in. The
blend strength scales with how well the winning patch agrees with the
window's surviving real pixels, so confident matches paste texture while
context-free windows stay close to the diffusion estimate. Known input
pixels are restored bit-exactly at the end and rotation columns are
rebalanced to sum to pi without touching known entries.

``export_for_external`` / ``import_from_external`` form the file-exchange
boundary for plugging in an external (e.g. neural) completer; imports are
sanitized and pass through the same restore + rebalance steps.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .container import read_mcop, read_mcop_raw, write_mcop
from .core import CH_DEPTH, CH_ROT, McopImage, N_CHANNELS, Patch
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyBankError,
    IncompletePatchError,
    InvariantError,
    ZeroRotationSumError,
)
from .patchbank import PatchBank, extract_window
from .sweep import RotationProfile, kahan_colsum

# retrieval/blend tuning (see baseline_inpaint)
_EST_WEIGHT = 0.25      # score weight of diffusion-estimated pixels
_MIN_CONTEXT_PX = 32    # known-pixel overlap below which a match is "blind"
_CONF_SCALE = 0.35      # agreement-to-variance ratio driving blend strength
_CONF_FLOOR = 0.1       # minimum blend strength of an accepted paste


@dataclass(frozen=True)
class InpaintConfig:
    """Baseline inpainter knobs. ``lambda_cons`` and ``lambda_reg`` exist for
    completeness of the objective surface but the baseline enforces both as
    hard constraints (exact restore, exact column sums)."""

    w: int | None = None
    iterations: int = 2
    search_candidates: int = 32
    lambda_cons: float = 1.0
    lambda_reg: float = 1.0
    lambda_sim: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_cons", "lambda_reg", "lambda_sim"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0")


def consistency_loss(output: McopImage, input: McopImage) -> float:
    """Mean, over the input's known pixels, of the per-pixel 5-channel
    Euclidean difference; zero iff known content is reproduced."""
    if output.channels.shape != input.channels.shape:
        raise DimensionMismatchError(
            f"shapes differ: {output.channels.shape} vs {input.channels.shape}"
        )
    km = input.mask
    if not km.any():
        return 0.0
    diff = output.channels[km] - input.channels[km]
    dd = diff[:, CH_DEPTH]
    both_finite = np.isfinite(output.depth[km])  # input depth is finite at known px
    dd = np.where(both_finite, dd, 0.0)
    sq = (
        diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
        + dd ** 2 + diff[:, CH_ROT] ** 2
    )
    return float(np.mean(np.sqrt(sq)))


def regularity_loss(output: McopImage) -> float:
    """Mean over columns of (rotation column sum - pi)^2."""
    sums = kahan_colsum(output.rotation)
    return float(np.mean((sums - np.pi) ** 2))


def _fixup_column(col: np.ndarray) -> None:
    """Nudge the largest entry so the column's compensated sum hits pi."""
    resid = math.pi - math.fsum(col)
    k = int(np.argmax(col))
    v = col[k] + resid
    col[k] = v if v >= 0.0 else 0.0


def normalize_rotation(image: McopImage) -> McopImage:
    """Scale each rotation column by pi / (column sum); the result has
    regularity loss 0 to within accumulation error."""
    sums = kahan_colsum(image.rotation)
    bad = np.nonzero(sums <= 0.0)[0]
    if len(bad):
        raise ZeroRotationSumError(int(bad[0]))
    channels = image.channels.copy()
    rot = channels[..., CH_ROT]
    rot *= (np.pi / sums)[None, :]
    for j in range(rot.shape[1]):
        _fixup_column(rot[:, j])
    return image.replace(channels=channels)


def _rebalance_rotation(rot: np.ndarray, known: np.ndarray) -> None:
    """Scale only the unknown entries of each column so the full column sums
    to pi while known entries stay bit-identical. Fully known columns are
    left untouched (they carry the input's own sums)."""
    h, w = rot.shape
    for j in range(w):
        u = ~known[:, j]
        if not u.any():
            continue
        kvals = rot[~u, j]
        ksum = math.fsum(kvals) if len(kvals) else 0.0
        target = math.pi - ksum
        iu = np.nonzero(u)[0]
        if target <= 0.0:
            rot[iu, j] = 0.0
            continue
        usum = math.fsum(rot[iu, j])
        if usum > 0.0:
            rot[iu, j] *= target / usum
            resid = math.pi - math.fsum(rot[:, j])
            k = iu[int(np.argmax(rot[iu, j]))]
            v = rot[k, j] + resid
            rot[k, j] = v if v >= 0.0 else 0.0
        else:
            rot[iu[0], j] = target


def gram_matrix(patch: Patch) -> np.ndarray:
    """5x5 raw-pixel Gram matrix of a fully known patch: channel co-moments
    averaged over the window."""
    if patch.completeness < 1.0:
        raise IncompletePatchError(
            f"patch completeness {patch.completeness:.3f} < 1; Gram statistics undefined over holes"
        )
    x = patch.data.reshape(-1, N_CHANNELS)
    return (x.T @ x) / float(patch.w * patch.w)


def texture_similarity_loss(image: McopImage, n_pairs: int, w: int, seed: int = 0) -> float:
    """Mean Frobenius distance between Gram matrices of adjacent window
    pairs (offset by w horizontally or vertically, seeded choice)."""
    h, wid = image.height, image.width
    dirs = []
    if wid >= 2 * w and h >= w:
        dirs.append("h")
    if h >= 2 * w and wid >= w:
        dirs.append("v")
    if not dirs:
        raise InvariantError(f"image {h}x{wid} too small for two adjacent {w}-windows")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(int(n_pairs)):
        d = dirs[int(rng.integers(0, len(dirs)))]
        if d == "h":
            x1 = int(rng.integers(0, wid if image.wrap else wid - 2 * w + 1))
            y1 = int(rng.integers(0, h - w + 1))
            x2, y2 = x1 + w, y1
            if not image.wrap and x2 + w > wid:
                x2 = wid - w
        else:
            x1 = int(rng.integers(0, wid if image.wrap else wid - w + 1))
            y1 = int(rng.integers(0, h - 2 * w + 1))
            x2, y2 = x1, y1 + w
        g1 = gram_matrix(extract_window(image, x1, y1, w))
        g2 = gram_matrix(extract_window(image, x2 % wid if image.wrap else x2, y2, w))
        total += float(np.linalg.norm(g1 - g2))
    return total / max(int(n_pairs), 1)


def _interp_fill(vals: np.ndarray, known: np.ndarray, wrap: bool, const: float) -> np.ndarray:
    """Column-wise linear diffusion from nearest known rows, then row-wise
    across columns for fully unknown columns; constant when nothing is known."""
    h, w = vals.shape
    out = vals.copy()
    col_has = known.any(axis=0)
    rows = np.arange(h)
    for j in np.nonzero(col_has)[0]:
        kj = known[:, j]
        if kj.all():
            continue
        out[~kj, j] = np.interp(rows[~kj], rows[kj], vals[kj, j])
    empty = np.nonzero(~col_has)[0]
    if len(empty):
        filled = np.nonzero(col_has)[0]
        if len(filled) == 0:
            out[:] = const
            return out
        cols = np.arange(w)
        for i in range(h):
            if wrap:
                out[i, empty] = np.interp(cols[empty], filled, out[i, filled], period=w)
            else:
                out[i, empty] = np.interp(cols[empty], filled, out[i, filled])
    return out


def _gram_rgbd(x: np.ndarray) -> np.ndarray:
    """(..., w, w, 4) -> (..., 4, 4) raw Gram over the window."""
    n = x.shape[-3] * x.shape[-2]
    flat = x.reshape(*x.shape[:-3], n, 4)
    return np.einsum("...ic,...id->...cd", flat, flat) / float(n)


def _feather(w: int) -> np.ndarray:
    m = max(1, w // 4)
    d = np.minimum.reduce(np.meshgrid(
        *[np.minimum(np.arange(w), w - 1 - np.arange(w))] * 2, indexing="ij"
    )) + 1
    return np.minimum(1.0, d / float(m))


def _window_positions(size: int, w: int, stride: int, wrap: bool):
    if wrap:
        return list(range(0, size, stride))
    xs = list(range(0, size - w + 1, stride))
    if xs and xs[-1] != size - w:
        xs.append(size - w)
    return xs or [0]


def baseline_inpaint(
    input: McopImage,
    bank: PatchBank,
    profile: RotationProfile,
    cfg: InpaintConfig = InpaintConfig(),
    return_stats: bool = False,
):
    """Fill every unknown pixel; see the module docstring for the scheme.

    The output has an all-ones mask, finite depth everywhere, rotation
    columns summing to pi, and the input's known pixels bit-identical.
    """
    if len(bank) == 0:
        raise EmptyBankError("cannot inpaint from an empty bank")
    h, wid = input.height, input.width
    if profile.increments.shape != (h, wid):
        raise DimensionMismatchError(
            f"profile {profile.increments.shape} does not match image ({h}, {wid})"
        )
    if cfg.w is not None and cfg.w != bank.w:
        raise ConfigError(f"cfg.w={cfg.w} does not match bank patch size {bank.w}")
    w = bank.w
    known = input.mask
    unknown = ~known

    ch = input.channels.copy()
    rot = ch[..., CH_ROT]
    rot[unknown] = profile.increments[unknown]
    for c in range(3):
        ch[..., c] = _interp_fill(ch[..., c], known, input.wrap, 0.5)
    ch[..., CH_DEPTH] = _interp_fill(ch[..., CH_DEPTH], known, input.wrap, 1.0)

    omega = _feather(w)
    stride = max(1, w // 2)
    xs = _window_positions(wid, w, stride, input.wrap)
    ys = _window_positions(h, w, stride, False)
    win_cols = {x: (np.arange(x, x + w) % wid if input.wrap else np.arange(x, x + w))
                for x in xs}
    windows = [
        (x, y) for y in ys for x in xs
        if unknown[y:y + w][:, win_cols[x]].any()
    ]

    # paste confidence scale: candidate agreement on original-known pixels
    # measured against the corpus variance of the known content
    var4 = float(np.concatenate([
        np.var(input.rgb[known], axis=0) if known.any() else np.zeros(3),
        [np.var(input.depth[known]) if known.any() else 0.0],
    ]).mean())
    var4 = max(var4, 1e-9)

    best = np.full(len(windows), np.inf)
    totals = []
    for it in range(cfg.iterations):
        for wi, (x, y) in enumerate(windows):
            rng = np.random.default_rng((cfg.seed, it, wi))
            idx = rng.integers(0, len(bank), size=cfg.search_candidates)
            cols = win_cols[x]
            v = ch[y:y + w][:, cols]
            u = unknown[y:y + w][:, cols]
            cand = np.stack([bank.patches[i].data for i in idx])
            cmask = np.stack([bank.patches[i].mask for i in idx])

            # masked L2: original-known pixels count in full, estimated ones
            # at reduced weight
            pw = np.where(u, _EST_WEIGHT, 1.0)
            diff = cand[..., :4] - v[None, ..., :4]
            sq = np.where(cmask[..., None], diff * diff, 0.0)
            counts = np.maximum((cmask * pw[None]).sum(axis=(1, 2)) * 4, 1e-9)
            score = (sq * pw[None, ..., None]).sum(axis=(1, 2, 3)) / counts

            if cfg.lambda_sim > 0.0:
                nb = None
                if input.wrap or x - w >= 0:
                    ncols = (np.arange(x - w, x) % wid) if input.wrap else np.arange(x - w, x)
                    nb = ch[y:y + w][:, ncols, :4]
                elif y - w >= 0:
                    nb = ch[y - w:y][:, cols, :4]
                if nb is not None:
                    g_nb = _gram_rgbd(nb)
                    virt = np.where(cmask[..., None], cand[..., :4], v[None, ..., :4])
                    g_c = _gram_rgbd(virt)
                    score = score + cfg.lambda_sim * np.linalg.norm(
                        g_c - g_nb[None], axis=(1, 2)
                    )

            kmov = cmask & (~u)[None]
            nk = kmov.sum(axis=(1, 2))
            sk = np.where(kmov[..., None], sq, 0.0).sum(axis=(1, 2, 3)) / np.maximum(nk * 4, 1)

            k = int(np.argmin(score))
            if score[k] <= best[wi]:
                # evidence-weighted blend: strong agreement with real context
                # pastes at full strength, blind pastes barely perturb the
                # diffusion estimate
                if nk[k] < _MIN_CONTEXT_PX:
                    conf = _CONF_FLOOR
                else:
                    conf = max(float(np.exp(-sk[k] / (_CONF_SCALE * var4))), _CONF_FLOOR)
                alpha = (omega * u)[..., None] * conf
                filled = np.where(cmask[k][..., None], cand[k][..., :4], v[..., :4])
                ch[y:y + w, cols, :4] = v[..., :4] * (1.0 - alpha) + filled * alpha
                best[wi] = score[k]
        totals.append(float(np.sum(best[np.isfinite(best)])))

    ch[..., :3] = np.clip(ch[..., :3], 0.0, 1.0)
    ch[..., CH_DEPTH] = np.maximum(ch[..., CH_DEPTH], 1e-9)
    ch[known] = input.channels[known]
    _rebalance_rotation(ch[..., CH_ROT], known)

    out = McopImage(ch, np.ones((h, wid), dtype=bool), wrap=input.wrap)
    if return_stats:
        return out, {"window_count": len(windows), "iteration_scores": totals}
    return out


EXPORT_INPUT = "input.mcop"
EXPORT_PRIOR = "rotation_prior.mcop"
EXPORT_COMPLETED = "completed.mcop"


class ImportResult(NamedTuple):
    image: McopImage
    clamped: int


def export_for_external(input: McopImage, profile: RotationProfile, dir) -> None:
    """Write the exchange directory an external completer consumes: the
    input image plus a rotation-prior image (rotation plane meaningful,
    everything else unknown)."""
    if profile.increments.shape != (input.height, input.width):
        raise DimensionMismatchError("profile does not match image dimensions")
    d = Path(dir)
    d.mkdir(parents=True, exist_ok=True)
    write_mcop(input, d / EXPORT_INPUT)
    ch = np.zeros_like(input.channels)
    ch[..., CH_DEPTH] = np.inf
    ch[..., CH_ROT] = profile.increments
    prior = McopImage(ch, np.zeros((input.height, input.width), dtype=bool), wrap=input.wrap)
    write_mcop(prior, d / EXPORT_PRIOR)


def import_from_external(dir) -> ImportResult:
    """Read back whatever the external model produced (``completed.mcop``;
    falls back to the untouched input), sanitize it, restore known input
    pixels exactly, fill still-unknown rotation from the prior, and
    rebalance rotation columns. Returns the image and the count of values
    clamped or fixed during sanitization."""
    d = Path(dir)
    input_img = read_mcop(d / EXPORT_INPUT)
    prior = read_mcop(d / EXPORT_PRIOR)
    src = d / EXPORT_COMPLETED
    if not os.path.exists(src):
        src = d / EXPORT_INPUT
    ch, _mask, wrap = read_mcop_raw(src)
    if ch.shape != input_img.channels.shape:
        raise DimensionMismatchError("completed image dimensions differ from input")

    ch = ch.copy()
    clamped = 0
    rgb = ch[..., :3]
    bad = ~np.isfinite(rgb) | (rgb < 0.0) | (rgb > 1.0)
    clamped += int(bad.sum())
    ch[..., :3] = np.clip(np.nan_to_num(rgb, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
    rot = ch[..., CH_ROT]
    bad = ~np.isfinite(rot) | (rot < 0.0) | (rot > np.pi)
    clamped += int(bad.sum())
    ch[..., CH_ROT] = np.clip(np.nan_to_num(rot, nan=0.0, posinf=np.pi, neginf=0.0), 0.0, np.pi)
    dep = ch[..., CH_DEPTH]
    invalid = np.isnan(dep) | (dep <= 0.0)
    clamped += int(invalid.sum())
    dep[invalid] = np.inf

    km = input_img.mask
    ch[km] = input_img.channels[km]
    still_unknown = ~np.isfinite(ch[..., CH_DEPTH])
    ch[..., CH_ROT][still_unknown] = prior.rotation[still_unknown]
    ch[..., :3][still_unknown] = 0.0
    _rebalance_rotation(ch[..., CH_ROT], km)
    mask = np.isfinite(ch[..., CH_DEPTH])
    return ImportResult(McopImage(ch, mask, wrap=wrap), clamped)
