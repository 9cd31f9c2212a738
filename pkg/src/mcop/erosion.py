"""Synthetic erosion: hide known pixels under bank-drawn masks so the hidden
pixels become evaluation ground truth."""

from __future__ import annotations

import numpy as np

from .core import McopImage
from .errors import ConfigError, EmptyBankError, WindowBoundsError
from .patchbank import PatchBank, apply_random_mask

DEFAULT_COMPLETENESS_RANGE = (0.2, 0.8)


def default_mask_count(image: McopImage, mask_w: int, target_drop: float = 0.30) -> int:
    """Mask count aiming for a completeness drop of ~``target_drop`` of all
    pixels, assuming masks hide about half of what they cover."""
    kappa = max(image.completeness(), 1e-6)
    per_mask = 0.5 * mask_w * mask_w * kappa
    return max(1, int(round(target_drop * image.mask.size / per_mask)))


def erode_image(
    image: McopImage,
    mask_bank: PatchBank,
    n_masks: int,
    completeness_range=DEFAULT_COMPLETENESS_RANGE,
    seed: int = 0,
    return_details: bool = False,
):
    """Apply ``n_masks`` bank masks at seeded random positions.

    Masks are drawn by rejection until their completeness lies inside
    ``completeness_range``. Returns the degraded image and the held-out map
    (pixels known before and unknown after); with ``return_details`` also the
    list of (patch, x, y) applications.
    """
    lo, hi = completeness_range
    if not (0.0 <= lo < hi <= 1.0):
        raise ConfigError(f"completeness_range must satisfy 0 <= lo < hi <= 1, got {completeness_range}")
    if len(mask_bank) == 0:
        raise EmptyBankError("mask bank is empty")
    w = mask_bank.w
    if w > image.height or (not image.wrap and w > image.width):
        raise WindowBoundsError(
            f"mask size {w} does not fit image {image.height}x{image.width}"
        )
    eligible = [p for p in mask_bank.patches if lo <= p.completeness <= hi]
    if not eligible:
        raise EmptyBankError(
            f"mask bank has no patch with completeness in [{lo}, {hi}]"
        )

    rng = np.random.default_rng(seed)
    out = image
    applied = []
    x_hi = image.width if image.wrap else image.width - w + 1
    y_hi = image.height - w + 1
    for _ in range(int(n_masks)):
        while True:  # rejection sampling; eligibility was verified above
            p = mask_bank.patches[int(rng.integers(0, len(mask_bank)))]
            if lo <= p.completeness <= hi:
                break
        x = int(rng.integers(0, x_hi))
        y = int(rng.integers(0, y_hi))
        out = apply_random_mask(out, p, x, y)
        applied.append((p, x, y))
    held = image.mask & ~out.mask
    if return_details:
        return out, held, applied
    return out, held
