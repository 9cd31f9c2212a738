import numpy as np
import pytest

from mcop._kernels import available_backends
from mcop.core import PointCloud, derive_mask
from mcop.errors import ConfigError
from mcop.projection import build_spatial_index, project
from mcop.sweep import RotationProfile, SweepPath, integrate_slit_poses

from conftest import build_scene


def _single_column_poses(n_rows, step=1.0):
    path = SweepPath(
        np.array([[0.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]),
        np.array([[1.0, 0.0, 0.0]]), step, False,
    )
    prof = RotationProfile(np.zeros((n_rows, 1)), np.array([n_rows]))
    return integrate_slit_poses(path, prof, n_rows, step)


def brute_force_nearest_along_ray(points, origin, direction, radius, max_depth):
    """O(N) oracle for the pixel selection rule."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    rel = points - np.asarray(origin)
    t = rel @ d
    perp2 = np.einsum("ij,ij->i", rel, rel) - t * t
    ok = (t > 0) & (t <= max_depth) & (perp2 <= radius * radius)
    if not ok.any():
        return -1
    idx = np.nonzero(ok)[0]
    order = np.lexsort((idx, t[idx]))
    return int(idx[order[0]])


class TestSpatialGrid:
    def test_single_point_single_cell(self):
        g = build_spatial_index(PointCloud(np.zeros((1, 3)), np.full((1, 3), 0.5)), 1.0)
        assert len(g.cell_ids) == 1
        assert g.cell_of([0, 0, 0]) == (0, 0, 0)

    def test_conservation_large(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0, 10, size=(200_000, 3))
        g = build_spatial_index(PointCloud(pts, np.full_like(pts, 0.5)), 0.25)
        assert len(g) == 200_000
        # each point indexed exactly once
        assert len(np.unique(g.order)) == 200_000

    def test_empty_cloud(self):
        g = build_spatial_index(PointCloud.empty(), 1.0)
        assert len(g) == 0

    def test_bad_cell(self):
        with pytest.raises(ConfigError):
            build_spatial_index(PointCloud.empty(), 0.0)

    def test_query_radius_exact(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(0, 2, size=(500, 3))
        g = build_spatial_index(PointCloud(pts, np.full_like(pts, 0.5)), 0.3)
        center = np.array([1.0, 1.0, 1.0])
        got = g.query_radius(center, 0.4)
        want = np.nonzero(np.linalg.norm(pts - center, axis=1) <= 0.4)[0]
        assert np.array_equal(got, want)

    def test_ray_query_matches_brute_force(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=(1000, 3))
        cloud = PointCloud(pts, np.full_like(pts, 0.5))
        g = build_spatial_index(cloud, 0.1)
        for k in range(50):
            origin = rng.uniform(-1.5, -1.0, size=3)
            direction = rng.normal(size=3)
            got = g.nearest_along_ray(origin, direction, radius=0.05, max_depth=5.0)
            want = brute_force_nearest_along_ray(pts, origin, direction, 0.05, 5.0)
            assert got == want, f"trial {k}: {got} != {want}"


class TestProject:
    def test_single_point_example(self):
        poses = _single_column_poses(3)
        cloud = PointCloud(np.array([[2.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
        img = project(cloud, poses, splat_radius=0.05, max_depth=10.0)
        assert img.mask[1, 0] and not img.mask[0, 0] and not img.mask[2, 0]
        assert img.depth[1, 0] == 2.0
        assert np.allclose(img.rgb[1, 0], [1, 0, 0])
        assert img.depth[0, 0] == np.inf

    def test_empty_cloud(self):
        poses = _single_column_poses(4)
        img = project(PointCloud.empty(), poses, splat_radius=0.1)
        assert not img.mask.any()
        assert np.all(img.depth == np.inf)

    def test_rotation_plane_carries_profile_everywhere(self, wall_scene):
        img = wall_scene["images"][0]
        prof = wall_scene["profiles"][0]
        assert np.array_equal(img.rotation, prof.increments)

    def test_mask_law(self, wall_scene):
        img = wall_scene["images"][0]
        assert np.array_equal(derive_mask(img), img.mask)

    def test_occlusion_and_ties_match_brute_force(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 2, size=(800, 3))
        pts[100] = pts[50]  # force an exact depth tie
        cloud = PointCloud(pts, rng.random((800, 3)))
        poses = _single_column_poses(20, step=0.1)
        splat, maxd = 0.2, 5.0
        img = project(cloud, poses, splat_radius=splat, max_depth=maxd)
        grid = build_spatial_index(cloud, 2 * splat)
        for i in range(20):
            want = brute_force_nearest_along_ray(
                pts, poses.centers[i, 0], poses.rays[i, 0], splat, maxd
            )
            if want < 0:
                assert not img.mask[i, 0]
            else:
                rel = pts[want] - poses.centers[i, 0]
                t = float(rel @ poses.rays[i, 0])
                assert img.depth[i, 0] == t

    def test_deterministic(self, wall_scene):
        img2 = project(wall_scene["cloud"],
                       _rebuild_poses(wall_scene))
        img1 = wall_scene["images"][0]
        assert np.array_equal(img1.channels, img2.channels)
        assert np.array_equal(img1.mask, img2.mask)

    def test_backends_bitwise_identical(self):
        backs = available_backends()
        if len(backs) < 2:
            pytest.skip("native kernel not built")
        scene = build_scene([[0.0, 0.0], [1.0, 0.3]], 1.2, seed=5, spacing=0.02,
                            arc_rows=40)
        poses = _rebuild_poses(scene)
        splat = 1.5 * scene["step"]
        grid = build_spatial_index(scene["cloud"], 2 * splat)
        args = (
            np.ascontiguousarray(scene["cloud"].points),
            np.ascontiguousarray(scene["cloud"].colors),
            grid.as_tuple(),
            np.ascontiguousarray(poses.centers), np.ascontiguousarray(poses.rays),
            np.ascontiguousarray(poses.tangents), splat, 10.0,
        )
        outs = {name: mod.project_columns(*args) for name, mod in backs.items()}
        a, b = outs["native"], outs["fallback"]
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])
        assert np.array_equal(a[2], b[2])


def _rebuild_poses(scene):
    return integrate_slit_poses(
        scene["paths"][0], scene["profiles"][0],
        scene["profiles"][0].height, scene["step"],
    )
