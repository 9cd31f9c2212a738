import math

import numpy as np
import pytest

from mcop.errors import ConfigError, DegeneratePathError, SelfIntersectingOffsetError
from mcop.sweep import (
    RotationProfile,
    SweepPath,
    build_rotation_profile,
    integrate_slit_poses,
    kahan_colsum,
    read_polylines,
    resample_path,
    write_polylines,
)


class TestResamplePath:
    def test_unit_square_8_frames_axis_aligned(self):
        p = resample_path([(0, 0), (1, 0), (1, 1), (0, 1)], step=0.5, closed=True)
        assert len(p) == 8
        # every tangent is a signed unit axis vector
        assert np.allclose(np.abs(p.tangents[:, :2]).max(axis=1), 1.0)
        assert np.allclose(p.tangents[:, 2], 0.0)

    def test_straight_segment_101_frames(self):
        p = resample_path([(0, 0), (2, 0)], step=0.02, closed=False)
        assert len(p) == 101

    def test_circle_offset_normals_point_to_centroid(self):
        # analytic oracle: for a circle the inward normal is exactly radial
        ang = np.linspace(0, 2 * np.pi, 361)[:-1]
        circ = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        p = resample_path(circ, offset=0.5, step=0.002, closed=True)
        to_center = -p.bases[:, :2]
        to_center /= np.linalg.norm(to_center, axis=1, keepdims=True)
        dots = np.einsum("ij,ij->i", p.normals[:, :2], to_center)
        assert np.max(np.arccos(np.clip(dots, -1, 1))) < 1e-3
        # bases sit on the offset circle (miter radius of the 360-gon)
        r = np.linalg.norm(p.bases[:, :2], axis=1)
        assert np.abs(r - 1.5).max() < 1e-3

    def test_frames_unit_orthogonal_horizontal(self):
        p = resample_path([(0, 0), (1, 0.5), (2.5, 0.2)], offset=0.3, step=0.05)
        assert np.allclose(np.linalg.norm(p.tangents, axis=1), 1.0)
        assert np.allclose(np.linalg.norm(p.normals, axis=1), 1.0)
        assert np.abs(np.einsum("ij,ij->i", p.tangents, p.normals)).max() < 1e-12
        assert np.all(p.tangents[:, 2] == 0) and np.all(p.normals[:, 2] == 0)

    def test_arclength_spacing_uniform(self):
        ang = np.linspace(0, 2 * np.pi, 73)[:-1]
        loop = np.stack([2 * np.cos(ang), np.sin(ang)], axis=1)
        p = resample_path(loop, step=0.05, closed=True)
        d = np.diff(np.vstack([p.bases, p.bases[:1]])[:, :2], axis=0)
        lens = np.linalg.norm(d, axis=1)
        # euclidean spacing differs from arclength spacing only via curvature
        assert np.ptp(lens) < 1e-3
        assert abs(p.step - lens.mean()) < 1e-3

    def test_degenerate_polyline(self):
        with pytest.raises(DegeneratePathError):
            resample_path([(1, 1), (1, 1)], step=0.1)

    def test_self_intersecting_offset_reported(self):
        # inside offset of a right-turning arc whose radius is smaller than
        # the offset: the offset image folds over itself
        ang = np.linspace(np.pi / 2, -np.pi / 2, 20)
        arc = np.stack([0.2 * np.cos(ang), 0.2 * np.sin(ang)], axis=1)
        with pytest.raises(SelfIntersectingOffsetError):
            resample_path(arc, offset=0.5, step=0.05)

    def test_ground_z(self):
        p = resample_path([(0, 0), (1, 0)], ground_z=2.5, step=0.25)
        assert np.all(p.bases[:, 2] == 2.5)

    def test_bad_step(self):
        with pytest.raises(ConfigError):
            resample_path([(0, 0), (1, 0)], step=0.0)


class TestRotationProfile:
    def test_uniform_arc(self):
        prof = build_rotation_profile(4, 0)
        assert np.allclose(prof.increments[:, 0], np.pi / 4)

    def test_turn_row_2(self):
        prof = build_rotation_profile(4, 2)
        assert np.allclose(prof.increments[:, 0], [0, 0, np.pi / 2, np.pi / 2])

    def test_column_sums_pi(self):
        rng = np.random.default_rng(0)
        turns = rng.integers(0, 383, size=50)
        prof = build_rotation_profile(384, turns)
        assert np.abs(prof.column_sums() - np.pi).max() <= 1e-9

    def test_opening_mask_forces_row_zero(self):
        prof = build_rotation_profile(8, [5, 5], opening_mask=[False, True])
        assert prof.turn_rows.tolist() == [5, 0]
        assert prof.increments[0, 1] > 0 and prof.increments[0, 0] == 0

    def test_turn_row_out_of_range(self):
        with pytest.raises(ConfigError):
            build_rotation_profile(4, [4])

    def test_zero_below_turn(self):
        prof = build_rotation_profile(10, [6])
        assert np.all(prof.increments[:6, 0] == 0)
        assert np.all(prof.increments[6:, 0] > 0)


class TestIntegrateSlitPoses:
    def _frame(self):
        return SweepPath(
            np.array([[0.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]),
            np.array([[1.0, 0.0, 0.0]]), 1.0, False,
        )

    def test_zero_rotation_vertical_scan(self):
        prof = RotationProfile(np.zeros((3, 1)), np.array([3]))
        poses = integrate_slit_poses(self._frame(), prof, 3, 1.0)
        assert np.allclose(poses.centers[:, 0], [[0, 0, 0], [0, 0, 1], [0, 0, 2]])
        assert np.allclose(poses.rays[:, 0], [[1, 0, 0]] * 3)

    def test_quarter_turn_by_hand(self):
        # oracle: apply the axis-angle rotation matrix manually
        prof = RotationProfile(np.array([[0.0], [np.pi / 2]]), np.array([1]))
        poses = integrate_slit_poses(self._frame(), prof, 2, 1.0)
        assert np.allclose(poses.rays[1, 0], [0, 0, -1], atol=1e-15)
        assert np.allclose(poses.centers[1, 0], [1, 0, 0], atol=1e-15)

    def test_full_profile_ends_antiparallel(self):
        prof = build_rotation_profile(64, 10)
        poses = integrate_slit_poses(self._frame(), prof, 64, 0.02)
        assert np.allclose(poses.rays[-1, 0], [-1, 0, 0], atol=1e-6)

    def test_rays_unit_and_planar(self):
        path = resample_path([(0, 0), (1, 0.4), (2, 0.1)], step=0.05)
        prof = build_rotation_profile(40, np.full(len(path), 12))
        poses = integrate_slit_poses(path, prof, 40, 0.05)
        assert np.allclose(np.linalg.norm(poses.rays, axis=2), 1.0, atol=1e-12)
        # no tangential drift: rays and movement stay in the normal-vertical plane
        drift = np.einsum("ijk,jk->ij", poses.rays, path.tangents)
        assert np.abs(drift).max() == 0.0
        cdrift = np.einsum("ijk,jk->ij", poses.centers - path.bases[None], path.tangents)
        assert np.abs(cdrift).max() < 1e-9

    def test_cumulative_rotation_matches_partial_sums(self):
        prof = build_rotation_profile(100, 30)
        poses = integrate_slit_poses(self._frame(), prof, 100, 0.02)
        theta = np.cumsum(prof.increments[:, 0])
        measured = np.arctan2(-poses.rays[:, 0, 2], poses.rays[:, 0, 0])
        measured = np.where(measured < -1e-12, measured + 2 * np.pi, measured)
        assert np.abs(measured - theta).max() < 1e-9


def test_kahan_colsum_matches_fsum():
    rng = np.random.default_rng(1)
    a = rng.random((384, 7)) * 1e-2
    expect = np.array([math.fsum(a[:, j]) for j in range(7)])
    assert np.abs(kahan_colsum(a) - expect).max() < 1e-15


def test_polyline_text_round_trip(tmp_path):
    loops = [np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]]),
             np.array([[3.0, 3.0], [4.0, 3.5]])]
    p = tmp_path / "ann.txt"
    write_polylines(loops, p)
    back = read_polylines(p)
    assert len(back) == 2
    assert np.array_equal(back[0], loops[0])
    assert np.array_equal(back[1], loops[1])
