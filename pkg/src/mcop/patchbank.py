"""Window observation functions and the completeness-filtered patch bank.

The bank collects w x w windows whose known-pixel fraction clears a
threshold (default 0.95); they serve as self-supervision targets for
completion and as mask shapes for synthetic erosion. Banks persist in the
MPBK container (see ``save_bank``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import CH_DEPTH, McopImage, N_CHANNELS, Patch
from .errors import (
    BadMagicError,
    ConfigError,
    EmptyBankError,
    SizeMismatchError,
    VersionError,
    WindowBoundsError,
)

MPBK_MAGIC = b"MPBK"
MPBK_VERSION = 1
DEFAULT_MIN_COMPLETENESS = 0.95
DEFAULT_CAP = 200_000

_BANK_HEADER = struct.Struct("<4sHII")
_PATCH_HEADER = struct.Struct("<IIIf")


def default_patch_size(height: int) -> int:
    """Window side by raster height: 96 for tall (>=384-row) images, else 64."""
    return 96 if height >= 384 else 64


@dataclass(frozen=True)
class PatchBank:
    w: int
    patches: tuple
    min_completeness: float
    manifest: tuple

    def __post_init__(self):
        for p in self.patches:
            if p.w != self.w:
                raise ConfigError(f"bank patch size {p.w} != bank w {self.w}")
            if p.completeness < self.min_completeness - 1e-12:
                raise ConfigError(
                    f"bank patch completeness {p.completeness:.4f} below threshold"
                )

    def __len__(self):
        return len(self.patches)

    def row_histogram(self, n_bands: int = 10) -> np.ndarray:
        """Patch counts per source-row band; uniformity is reported, never
        enforced."""
        counts = np.zeros(n_bands, dtype=np.int64)
        if not self.patches:
            return counts
        ys = np.array([p.y for p in self.patches], dtype=np.float64)
        hi = max(float(ys.max()) + 1.0, 1.0)
        bands = np.minimum((ys / hi * n_bands).astype(np.int64), n_bands - 1)
        np.add.at(counts, bands, 1)
        return counts


def _window_cols(image: McopImage, x: int, w: int) -> np.ndarray:
    if x < 0:
        raise WindowBoundsError(f"window x={x} out of bounds")
    if x + w <= image.width:
        return np.arange(x, x + w)
    if not image.wrap:
        raise WindowBoundsError(
            f"window x={x} w={w} exceeds width {image.width} on a non-wrapping image"
        )
    return np.arange(x, x + w) % image.width


def extract_window(image: McopImage, x: int, y: int, w: int, source_id: int = 0) -> Patch:
    """Copy the w x w window with top-left (column x, row y). Columns wrap
    around the seam when the image was captured on a closed path."""
    if w <= 0 or y < 0 or y + w > image.height:
        raise WindowBoundsError(f"window y={y} w={w} out of bounds for height {image.height}")
    cols = _window_cols(image, x, w)
    data = image.channels[y:y + w][:, cols]
    mask = image.mask[y:y + w][:, cols]
    return Patch(source_id, x, y, w, data, mask)


def apply_random_mask(image: McopImage, mask_source: Patch, x: int, y: int) -> McopImage:
    """Hide the pixels under the zero entries of ``mask_source`` placed at
    (x, y): RGB -> 0, depth -> +inf, mask -> 0. The rotation plane is a
    geometric prior and survives masking untouched."""
    w = mask_source.w
    if y < 0 or y + w > image.height:
        raise WindowBoundsError(f"mask placement y={y} w={w} out of bounds")
    cols = _window_cols(image, x, w)
    rows = np.arange(y, y + w)
    hide = ~mask_source.mask
    channels = image.channels.copy()
    mask = image.mask.copy()
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    rr, cc = rr[hide], cc[hide]
    channels[rr, cc, :CH_DEPTH] = 0.0
    channels[rr, cc, CH_DEPTH] = np.inf
    mask[rr, cc] = False
    return McopImage(channels, mask, wrap=image.wrap)


def _grid_positions(image: McopImage, w: int, stride: int):
    ys = range(0, image.height - w + 1, stride)
    if image.wrap:
        xs = range(0, image.width, stride)
    else:
        xs = range(0, image.width - w + 1, stride)
    return xs, ys


def _window_known_counts(image: McopImage, w: int, xs, ys) -> np.ndarray:
    """Known-pixel count of each (y, x) grid window via an integral image."""
    m = image.mask.astype(np.int64)
    if image.wrap:
        m = np.concatenate([m, m[:, :w - 1]], axis=1) if w > 1 else m
    s = np.zeros((m.shape[0] + 1, m.shape[1] + 1), dtype=np.int64)
    s[1:, 1:] = np.cumsum(np.cumsum(m, axis=0), axis=1)
    ys = np.fromiter(ys, dtype=np.int64)
    xs = np.fromiter(xs, dtype=np.int64)
    return (
        s[np.ix_(ys + w, xs + w)] - s[np.ix_(ys, xs + w)]
        - s[np.ix_(ys + w, xs)] + s[np.ix_(ys, xs)]
    )


def build_bank(
    images,
    w: int | None = None,
    min_completeness: float = DEFAULT_MIN_COMPLETENESS,
    stride: int | None = None,
    cap: int = DEFAULT_CAP,
    seed: int = 0,
    names=None,
) -> PatchBank:
    """Scan a stride grid over every image, keep windows whose completeness
    clears the threshold, and subsample down to ``cap`` with a seeded draw
    when more qualify."""
    images = list(images)
    if not images:
        raise EmptyBankError("no images supplied")
    if w is None:
        w = default_patch_size(min(im.height for im in images))
    if stride is None:
        stride = max(1, w // 2)
    if not (0.0 < min_completeness <= 1.0):
        raise ConfigError("min_completeness must be in (0, 1]")
    if any(w > im.height for im in images):
        raise ConfigError(f"patch size {w} exceeds an image height")
    if names is None:
        names = [f"image-{k}" for k in range(len(images))]

    need = int(np.ceil(min_completeness * w * w - 1e-9))
    found = []  # (image_idx, y, x) in scan order
    for k, im in enumerate(images):
        xs, ys = _grid_positions(im, w, stride)
        counts = _window_known_counts(im, w, xs, ys)
        yy, xx = np.nonzero(counts >= need)
        ys_arr = np.fromiter(ys, dtype=np.int64)
        xs_arr = np.fromiter(xs, dtype=np.int64)
        for a, b in zip(yy, xx):
            found.append((k, int(ys_arr[a]), int(xs_arr[b])))
    if not found:
        raise EmptyBankError(
            f"no window of size {w} reaches completeness {min_completeness}"
        )
    if len(found) > cap:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(found), size=cap, replace=False))
        found = [found[i] for i in keep]
    patches = tuple(
        extract_window(images[k], x, y, w, source_id=k) for k, y, x in found
    )
    return PatchBank(int(w), patches, float(min_completeness), tuple(names))


def sample_bank(bank: PatchBank, n: int, seed: int = 0) -> list:
    """``n`` independent uniform draws with replacement, reproducible under
    the seed."""
    if len(bank) == 0:
        raise EmptyBankError("cannot sample from an empty bank")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(bank), size=int(n))
    return [bank.patches[i] for i in idx]


def save_bank(bank: PatchBank, path) -> None:
    with open(path, "wb") as f:
        f.write(_BANK_HEADER.pack(MPBK_MAGIC, MPBK_VERSION, bank.w, len(bank)))
        for p in bank.patches:
            f.write(_PATCH_HEADER.pack(p.source_id, p.x, p.y, p.completeness))
            planes = np.ascontiguousarray(p.data.transpose(2, 0, 1), dtype="<f8")
            f.write(planes.tobytes())
            f.write(np.packbits(p.mask.reshape(-1).astype(np.uint8)).tobytes())


def load_bank(path) -> PatchBank:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _BANK_HEADER.size:
        raise SizeMismatchError(_BANK_HEADER.size, len(raw))
    magic, version, w, count = _BANK_HEADER.unpack_from(raw)
    if magic != MPBK_MAGIC:
        raise BadMagicError(MPBK_MAGIC, magic)
    if version != MPBK_VERSION:
        raise VersionError(MPBK_VERSION, version)
    plane_bytes = N_CHANNELS * w * w * 8
    mask_bytes = (w * w + 7) // 8
    rec_bytes = _PATCH_HEADER.size + plane_bytes + mask_bytes
    expected = _BANK_HEADER.size + count * rec_bytes
    if len(raw) != expected:
        raise SizeMismatchError(expected, len(raw))
    patches = []
    off = _BANK_HEADER.size
    for _ in range(count):
        source_id, x, y, stored_c = _PATCH_HEADER.unpack_from(raw, off)
        off += _PATCH_HEADER.size
        planes = np.frombuffer(raw, dtype="<f8", count=N_CHANNELS * w * w, offset=off)
        off += plane_bytes
        mask = np.unpackbits(
            np.frombuffer(raw, dtype=np.uint8, count=mask_bytes, offset=off), count=w * w
        ).reshape(w, w).astype(bool)
        off += mask_bytes
        p = Patch(source_id, x, y, w, planes.reshape(N_CHANNELS, w, w).transpose(1, 2, 0), mask)
        if abs(p.completeness - stored_c) > 1e-5:
            raise SizeMismatchError(stored_c, p.completeness)
        patches.append(p)
    min_c = min((p.completeness for p in patches), default=0.0)
    manifest = tuple(sorted({f"source-{p.source_id}" for p in patches}))
    return PatchBank(int(w), tuple(patches), float(min_c), manifest)
