"""PNG previews for human inspection. Non-normative: previews never round-trip.

Rows are flipped so the camera start (row 0) appears at the bottom of the PNG.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .core import McopImage


def _to_png(arr_u8, path):
    Image.fromarray(np.flipud(arr_u8)).save(path)


def write_previews(image: McopImage, prefix) -> list:
    """Write <prefix>_color/_depth/_rotation/_mask.png; returns the paths."""
    prefix = str(prefix)
    paths = []

    rgb = np.clip(image.rgb * 255.0, 0, 255).astype(np.uint8)
    rgb[~image.mask] = 0
    paths.append(prefix + "_color.png")
    _to_png(rgb, paths[-1])

    depth = image.depth
    finite = depth[image.mask]
    gray = np.zeros(depth.shape, np.uint8)
    if finite.size:
        lo, hi = np.percentile(finite, [2.0, 98.0])
        span = max(hi - lo, 1e-9)
        g = np.clip((depth - lo) / span, 0.0, 1.0)
        gray = np.where(image.mask, np.round(g * 255.0), 0).astype(np.uint8)
    paths.append(prefix + "_depth.png")
    _to_png(gray, paths[-1])

    scale = image.height / np.pi
    rot = np.clip(image.rotation * scale * 255.0, 0, 255).astype(np.uint8)
    paths.append(prefix + "_rotation.png")
    _to_png(rot, paths[-1])

    paths.append(prefix + "_mask.png")
    _to_png((image.mask * 255).astype(np.uint8), paths[-1])
    return paths
