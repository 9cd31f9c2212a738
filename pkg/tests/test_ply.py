import numpy as np
import pytest

from mcop.core import PointCloud
from mcop.errors import PlyEncodingError, PlyHeaderError, PlyTruncatedError
from mcop.ply import read_ply, write_ply


def test_ascii_xyz_only_defaults_to_gray(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\nend_header\n"
        "0 0 0\n1 0 0\n0 1 0\n"
    )
    c = read_ply(p)
    assert len(c) == 3
    assert np.allclose(c.colors, 0.5)


def test_binary_uchar_color_scaling(tmp_path):
    p = tmp_path / "b.ply"
    header = (
        "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
    body = np.array([(1.0, 2.0, 3.0, 255, 0, 0)],
                    dtype=[("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                           ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    p.write_bytes(header.encode() + body.tobytes())
    c = read_ply(p)
    assert np.allclose(c.colors[0], [1.0, 0.0, 0.0])


def test_big_endian_rejected(tmp_path):
    p = tmp_path / "c.ply"
    p.write_text("ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
                 "property float x\nproperty float y\nproperty float z\nend_header\n")
    with pytest.raises(PlyEncodingError) as e:
        read_ply(p)
    assert e.value.line_no == 2


def test_malformed_header_names_line(tmp_path):
    p = tmp_path / "d.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex nope\nend_header\n")
    with pytest.raises(PlyHeaderError) as e:
        read_ply(p)
    assert e.value.line_no == 3


def test_truncated_binary_names_offset(tmp_path):
    p = tmp_path / "e.ply"
    header = ("ply\nformat binary_little_endian 1.0\nelement vertex 5\n"
              "property double x\nproperty double y\nproperty double z\nend_header\n")
    p.write_bytes(header.encode() + b"\x00" * 16)  # 5*24 bytes needed
    with pytest.raises(PlyTruncatedError) as e:
        read_ply(p)
    assert e.value.offset > 0


def test_truncated_ascii(tmp_path):
    p = tmp_path / "f.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 3\n"
                 "property float x\nproperty float y\nproperty float z\nend_header\n"
                 "0 0 0\n")
    with pytest.raises(PlyTruncatedError):
        read_ply(p)


def test_binary_round_trip_positions_exact(tmp_path):
    rng = np.random.default_rng(5)
    cloud = PointCloud(rng.normal(size=(1000, 3)) * 7.3, rng.random((1000, 3)))
    p = tmp_path / "rt.ply"
    write_ply(cloud, p, binary=True)
    back = read_ply(p)
    assert np.array_equal(back.points, cloud.points)
    assert np.abs(back.colors - cloud.colors).max() <= 1.0 / 255.0 + 1e-12


def test_ascii_round_trip_positions_1e5(tmp_path):
    rng = np.random.default_rng(6)
    cloud = PointCloud(rng.uniform(-5, 5, size=(200, 3)), rng.random((200, 3)))
    p = tmp_path / "rt_ascii.ply"
    write_ply(cloud, p, binary=False)
    back = read_ply(p)
    assert np.abs(back.points - cloud.points).max() <= 1e-5


def test_empty_cloud_round_trip(tmp_path):
    p = tmp_path / "empty.ply"
    write_ply(PointCloud.empty(), p, binary=True)
    assert len(read_ply(p)) == 0
    p2 = tmp_path / "empty_ascii.ply"
    write_ply(PointCloud.empty(), p2, binary=False)
    assert len(read_ply(p2)) == 0


def test_skips_leading_non_vertex_elements_ascii(tmp_path):
    p = tmp_path / "g.ply"
    p.write_text(
        "ply\nformat ascii 1.0\ncomment made by hand\n"
        "element tag 1\nproperty int id\n"
        "element vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
        "end_header\n42\n1 2 3\n"
    )
    c = read_ply(p)
    assert np.allclose(c.points[0], [1, 2, 3])
