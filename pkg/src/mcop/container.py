"""Binary containers: MCOP image files and MHLD held-out-map sidecars.

MCOP layout (all little-endian):

    magic  4s   b"MCOP"
    u16         version (currently 1)
    u8          wrap flag (closed-path seam adjacency)
    u32         W (columns)
    u32         H (rows)
    5 planes    H*W float64 each, row-major, order R, G, B, depth, rotation
    mask        H*W bits packed row-major, zero-padded to a byte boundary

Depth of unknown pixels is serialized as IEEE +inf. Round trips are
bit-exact on the full struct.

MHLD layout: magic b"MHLD", u16 version, u32 W, u32 H, packed bits.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import CH_DEPTH, N_CHANNELS, McopImage
from .errors import BadMagicError, SizeMismatchError, VersionError

MCOP_MAGIC = b"MCOP"
HELD_MAGIC = b"MHLD"
VERSION = 1

_MCOP_HEADER = struct.Struct("<4sHBII")
_HELD_HEADER = struct.Struct("<4sHII")


def _pack_mask(mask):
    return np.packbits(mask.reshape(-1).astype(np.uint8)).tobytes()


def _unpack_mask(buf, h, w):
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=h * w)
    return bits.reshape(h, w).astype(bool)


def write_mcop(image: McopImage, path) -> None:
    image.validate()
    h, w = image.height, image.width
    planes = np.ascontiguousarray(image.channels.transpose(2, 0, 1), dtype="<f8")
    with open(path, "wb") as f:
        f.write(_MCOP_HEADER.pack(MCOP_MAGIC, VERSION, int(image.wrap), w, h))
        f.write(planes.tobytes())
        f.write(_pack_mask(image.mask))


def read_mcop_raw(path):
    """Parse an MCOP file without invariant validation: returns
    (channels (H, W, 5), mask (H, W), wrap). Used by import sanitization."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _MCOP_HEADER.size:
        raise SizeMismatchError(_MCOP_HEADER.size, len(raw))
    magic, version, wrap, w, h = _MCOP_HEADER.unpack_from(raw)
    if magic != MCOP_MAGIC:
        raise BadMagicError(MCOP_MAGIC, magic)
    if version != VERSION:
        raise VersionError(VERSION, version)
    plane_bytes = N_CHANNELS * h * w * 8
    mask_bytes = (h * w + 7) // 8
    expected = _MCOP_HEADER.size + plane_bytes + mask_bytes
    if len(raw) != expected:
        raise SizeMismatchError(expected, len(raw))
    planes = np.frombuffer(
        raw, dtype="<f8", count=N_CHANNELS * h * w, offset=_MCOP_HEADER.size
    ).reshape(N_CHANNELS, h, w)
    mask = _unpack_mask(raw[_MCOP_HEADER.size + plane_bytes:], h, w)
    return planes.transpose(1, 2, 0).copy(), mask, bool(wrap)


def read_mcop(path) -> McopImage:
    channels, mask, wrap = read_mcop_raw(path)
    return McopImage(channels, mask, wrap=wrap)


def write_heldout(held: np.ndarray, path) -> None:
    held = np.asarray(held, dtype=bool)
    h, w = held.shape
    with open(path, "wb") as f:
        f.write(_HELD_HEADER.pack(HELD_MAGIC, VERSION, w, h))
        f.write(_pack_mask(held))


def read_heldout(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HELD_HEADER.size:
        raise SizeMismatchError(_HELD_HEADER.size, len(raw))
    magic, version, w, h = _HELD_HEADER.unpack_from(raw)
    if magic != HELD_MAGIC:
        raise BadMagicError(HELD_MAGIC, magic)
    if version != VERSION:
        raise VersionError(VERSION, version)
    expected = _HELD_HEADER.size + (h * w + 7) // 8
    if len(raw) != expected:
        raise SizeMismatchError(expected, len(raw))
    return _unpack_mask(raw[_HELD_HEADER.size:], h, w)
