import numpy as np
import pytest

from mcop.core import PointCloud
from mcop.errors import RotationSumError
from mcop.metrics import chamfer
from mcop.projection import project
from mcop.reproject import reproject
from mcop.sweep import RotationProfile, SweepPath, integrate_slit_poses

from conftest import build_scene, make_image


def _column_path(step=1.0):
    return SweepPath(
        np.array([[0.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]),
        np.array([[1.0, 0.0, 0.0]]), step, False,
    )


def test_algebraic_inverse_of_projection_example():
    path = _column_path()
    prof = RotationProfile(np.zeros((3, 1)), np.array([3]))
    poses = integrate_slit_poses(path, prof, 3, 1.0)
    cloud = PointCloud(np.array([[2.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    img = project(cloud, poses, splat_radius=0.05)
    # zero-rotation column violates the sum precondition on purpose: patch
    # the rotation plane to a full turn while keeping depth
    ch = img.channels.copy()
    ch[..., 4] = np.pi / 3
    img = img.replace(channels=ch)
    out = reproject(img, path, 1.0)
    assert len(out) == 1
    # the point re-emerges on the row-1 ray at depth 2 exactly
    expect = poses.centers[1, 0] + 2.0 * _rot_ray(np.pi / 3 * 2)
    assert np.allclose(out.points[0], expect, atol=1e-12)


def _rot_ray(theta):
    return np.array([np.cos(theta), 0.0, -np.sin(theta)])


def test_all_masked_image_gives_empty_cloud():
    img = make_image(4, 3, known=np.zeros((4, 3), dtype=bool),
                     rot=np.pi / 4)
    out = reproject(img, _dummy_path(3), 0.02)
    assert len(out) == 0


def _dummy_path(w):
    bases = np.zeros((w, 3))
    bases[:, 1] = np.arange(w) * 0.02
    t = np.tile([0.0, 1.0, 0.0], (w, 1))
    n = np.tile([1.0, 0.0, 0.0], (w, 1))
    return SweepPath(bases, t, n, 0.02, False)


def test_point_count_equals_known_pixels(wall_scene):
    img = wall_scene["images"][0]
    out = reproject(img, wall_scene["paths"][0], wall_scene["step"])
    assert len(out) == int(img.mask.sum())


def test_exact_inverse_on_known_pixels(wall_scene):
    img = wall_scene["images"][0]
    out = reproject(img, wall_scene["paths"][0], wall_scene["step"])
    # every emitted point lies within the splat radius of a source point
    from mcop.projection import nearest_neighbor_dists
    d = nearest_neighbor_dists(out.points, wall_scene["cloud"].points)
    assert d.max() <= 1.5 * wall_scene["step"] + 1e-9


def test_round_trip_chamfer_small(wall_scene):
    out = reproject(wall_scene["images"][0], wall_scene["paths"][0], wall_scene["step"])
    cd = chamfer(out, wall_scene["cloud"])
    assert cd.cd_cm <= 2 * wall_scene["step"] * 100.0


def test_column_sum_violation_names_worst_column():
    img = make_image(4, 3, rot=np.pi / 4)
    ch = img.channels.copy()
    ch[:, 1, 4] = 0.7  # column 1 sums to 2.8 != pi
    bad = img.replace(channels=ch)
    with pytest.raises(RotationSumError) as e:
        reproject(bad, _dummy_path(3), 0.02)
    assert e.value.column == 1


def test_identical_images_identical_clouds(wall_scene):
    img = wall_scene["images"][0]
    a = reproject(img, wall_scene["paths"][0], wall_scene["step"])
    b = reproject(img, wall_scene["paths"][0], wall_scene["step"])
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.colors, b.colors)


def test_column_major_emission_order():
    known = np.zeros((3, 2), dtype=bool)
    known[0, 0] = known[2, 0] = known[1, 1] = True
    img = make_image(3, 2, known=known, rot=np.pi / 3)
    out = reproject(img, _dummy_path(2), 0.02)
    # column 0 rows (0, 2) first, then column 1 row 1: y base distinguishes
    assert np.allclose(out.points[:2, 1], 0.0, atol=1e-12)
    assert abs(out.points[2, 1] - 0.02) < 1e-12
