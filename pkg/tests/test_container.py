import numpy as np
import pytest

from mcop.container import read_heldout, read_mcop, write_heldout, write_mcop
from mcop.core import CH_DEPTH, McopImage
from mcop.errors import BadMagicError, InvariantError, SizeMismatchError, VersionError

from conftest import make_image


def test_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(2)
    known = rng.random((17, 23)) < 0.7
    img = make_image(17, 23, known=known, rgb=0.3, depth=2.5,
                     rot=rng.uniform(0, np.pi / 17, size=(17, 23)), wrap=True)
    p = tmp_path / "x.mcop"
    write_mcop(img, p)
    back = read_mcop(p)
    assert np.array_equal(back.channels, img.channels)
    assert np.array_equal(back.mask, img.mask)
    assert back.wrap == img.wrap


def test_round_trip_small_all_known(tmp_path):
    img = make_image(2, 2)
    p = tmp_path / "y.mcop"
    write_mcop(img, p)
    back = read_mcop(p)
    assert np.array_equal(back.channels, img.channels)
    assert np.array_equal(back.mask, img.mask)


def test_bad_magic(tmp_path):
    img = make_image(2, 2)
    p = tmp_path / "z.mcop"
    write_mcop(img, p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"MCPO"
    p.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_mcop(p)


def test_version_mismatch(tmp_path):
    img = make_image(2, 2)
    p = tmp_path / "v.mcop"
    write_mcop(img, p)
    raw = bytearray(p.read_bytes())
    raw[4] = 9
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        read_mcop(p)


def test_size_mismatch(tmp_path):
    img = make_image(3, 3)
    p = tmp_path / "s.mcop"
    write_mcop(img, p)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(SizeMismatchError):
        read_mcop(p)


def test_refuses_invariant_violating_image(tmp_path):
    img = make_image(3, 3)
    hacked = img.channels.copy()
    hacked[1, 1, CH_DEPTH] = np.inf  # known pixel with infinite depth
    object.__setattr__(img, "channels", hacked)
    with pytest.raises(InvariantError):
        write_mcop(img, tmp_path / "bad.mcop")


def test_heldout_sidecar_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    held = rng.random((13, 29)) < 0.4
    p = tmp_path / "h.mhld"
    write_heldout(held, p)
    assert np.array_equal(read_heldout(p), held)


def test_heldout_bad_magic(tmp_path):
    p = tmp_path / "h.mhld"
    write_heldout(np.zeros((2, 2), dtype=bool), p)
    raw = bytearray(p.read_bytes())
    raw[:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_heldout(p)


def test_pipeline_images_round_trip(tmp_path, wall_scene):
    img = wall_scene["images"][0]
    p = tmp_path / "scene.mcop"
    write_mcop(img, p)
    back = read_mcop(p)
    assert np.array_equal(back.channels, img.channels)
    assert np.array_equal(back.mask, img.mask)
    assert back.wrap == img.wrap
