import numpy as np
import pytest

from mcop.core import CH_DEPTH, McopImage, Patch, PointCloud, derive_mask
from mcop.errors import InvariantError

from conftest import make_image


class TestPointCloud:
    def test_parallel_lengths_enforced(self):
        with pytest.raises(InvariantError):
            PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))

    def test_rejects_nonfinite_points(self):
        pts = np.zeros((2, 3))
        pts[1, 0] = np.nan
        with pytest.raises(InvariantError):
            PointCloud(pts, np.zeros((2, 3)))

    def test_rejects_out_of_range_colors(self):
        with pytest.raises(InvariantError):
            PointCloud(np.zeros((1, 3)), [[1.5, 0.0, 0.0]])

    def test_immutable(self):
        c = PointCloud(np.zeros((2, 3)), np.full((2, 3), 0.5))
        with pytest.raises(ValueError):
            c.points[0, 0] = 1.0


class TestMcopImage:
    def test_mask_must_match_depth(self):
        img = make_image(4, 4)
        ch = img.channels.copy()
        ch[1, 1, CH_DEPTH] = np.inf  # finite-depth predicate now disagrees
        with pytest.raises(InvariantError):
            McopImage(ch, img.mask)

    def test_unknown_depth_must_be_inf(self):
        ch = np.zeros((2, 2, 5))
        ch[..., CH_DEPTH] = 1.0
        mask = np.zeros((2, 2), dtype=bool)
        with pytest.raises(InvariantError):
            McopImage(ch, mask)

    def test_rotation_range_everywhere(self):
        img = make_image(4, 4)
        ch = img.channels.copy()
        ch[0, 0, 4] = 4.0
        with pytest.raises(InvariantError):
            McopImage(ch, img.mask)

    def test_known_rgb_range(self):
        img = make_image(3, 3)
        ch = img.channels.copy()
        ch[0, 0, 0] = 1.5
        with pytest.raises(InvariantError):
            McopImage(ch, img.mask)


class TestDeriveMask:
    def test_all_finite(self):
        img = make_image(3, 4)
        assert derive_mask(img).all()

    def test_all_infinite(self):
        img = make_image(3, 4, known=np.zeros((3, 4), dtype=bool))
        assert not derive_mask(img).any()

    def test_single_finite_pixel(self):
        known = np.zeros((6, 8), dtype=bool)
        known[3, 5] = True
        img = make_image(6, 8, known=known)
        m = derive_mask(img)
        assert m[3, 5] and m.sum() == 1

    def test_matches_stored_mask(self, wall_scene):
        for img in wall_scene["images"]:
            assert np.array_equal(derive_mask(img), img.mask)


class TestPatch:
    def test_completeness_is_derived(self):
        img = make_image(4, 4)
        data = img.channels[:2, :2].copy()
        mask = np.array([[True, False], [True, False]])
        data[~mask, CH_DEPTH] = np.inf
        data[~mask, :3] = 0.0
        p = Patch(0, 0, 0, 2, data, mask)
        assert p.completeness == 0.5

    def test_shape_checked(self):
        with pytest.raises(InvariantError):
            Patch(0, 0, 0, 3, np.zeros((2, 2, 5)), np.zeros((2, 2), dtype=bool))
