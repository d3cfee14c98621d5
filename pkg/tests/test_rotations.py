import math

import numpy as np
import pytest
from scipy.linalg import logm

from poseinduce.rotations import (
    AZIMUTH,
    CYCLO,
    ELEVATION,
    BinningScheme,
    EulerPose,
    bin_angle,
    euler_to_rotation,
    geodesic_distance,
    geodesic_distance_many,
    random_rotation,
    rot_x,
    rot_y,
    rot_z,
    rotation_to_euler,
    validate_rotation,
)


def _axis_matrices(az, el, cy):
    """Independent construction of the three axis rotations (oracle)."""
    ca, sa = math.cos(az), math.sin(az)
    ce, se = math.cos(el), math.sin(el)
    cc, sc = math.cos(cy), math.sin(cy)
    ry = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]], dtype=float)
    rx = np.array([[1, 0, 0], [0, ce, -se], [0, se, ce]], dtype=float)
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]], dtype=float)
    return rz, rx, ry


class TestEulerToRotation:
    def test_identity(self):
        r = euler_to_rotation(EulerPose(0.0, 0.0, 0.0))
        np.testing.assert_allclose(r, np.eye(3), atol=1e-15)

    def test_single_axis_azimuth_pi(self):
        r = euler_to_rotation(EulerPose(math.pi, 0.0, 0.0))
        np.testing.assert_allclose(r, np.diag([-1.0, 1.0, -1.0]), atol=1e-12)

    def test_matches_independent_axis_product(self):
        az, el, cy = 0.3, -0.2, 1.1
        rz, rx, ry = _axis_matrices(az, el, cy)
        r = euler_to_rotation(EulerPose(az, el, cy))
        np.testing.assert_allclose(r, rz @ rx @ ry, atol=1e-12)
        back = rotation_to_euler(r)
        np.testing.assert_allclose(back.as_tuple(), (az, el, cy), atol=1e-12)

    def test_output_is_proper_rotation(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            pose = EulerPose(
                rng.uniform(-math.pi, math.pi),
                rng.uniform(-math.pi / 2, math.pi / 2),
                rng.uniform(-math.pi, math.pi),
            )
            validate_rotation(euler_to_rotation(pose))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            euler_to_rotation(EulerPose(math.nan, 0.0, 0.0))
        with pytest.raises(ValueError):
            euler_to_rotation(EulerPose(0.0, math.inf, 0.0))


class TestRotationToEuler:
    def test_identity(self):
        pose = rotation_to_euler(np.eye(3))
        assert pose.as_tuple() == (0.0, 0.0, 0.0)

    def test_single_axis(self):
        pose = rotation_to_euler(rot_y(math.pi / 2))
        np.testing.assert_allclose(pose.as_tuple(), (math.pi / 2, 0.0, 0.0), atol=1e-12)

    def test_round_trip_fuzz(self):
        # Quaternion-sampled rotations; round trip must stay within 1e-9.
        rng = np.random.default_rng(11)
        for _ in range(1000):
            r = random_rotation(rng)
            back = euler_to_rotation(rotation_to_euler(r))
            assert geodesic_distance(r, back) <= 1e-9

    def test_gimbal_lock_returns_zero_cyclo(self):
        for el in (math.pi / 2, -math.pi / 2):
            r = euler_to_rotation(EulerPose(0.7, el, -0.4))
            pose = rotation_to_euler(r)
            assert pose.cy == 0.0
            assert geodesic_distance(r, euler_to_rotation(pose)) <= 1e-9

    def test_non_orthonormal_rejected(self):
        with pytest.raises(ValueError):
            rotation_to_euler(np.eye(3) * 1.1)
        with pytest.raises(ValueError):
            rotation_to_euler(np.diag([1.0, 1.0, -1.0]))  # det -1


class TestGeodesicDistance:
    def test_zero_at_identity(self):
        assert geodesic_distance(np.eye(3), np.eye(3)) == 0.0

    def test_single_axis_angle(self):
        assert geodesic_distance(np.eye(3), rot_z(math.pi / 2)) == pytest.approx(
            math.pi / 2, abs=1e-12
        )

    def test_matches_matrix_log_oracle(self):
        r1 = rot_x(0.4) @ rot_y(0.7)
        r2 = rot_y(0.7)
        expected = np.linalg.norm(logm(r1.T @ r2), "fro") / math.sqrt(2)
        assert geodesic_distance(r1, r2) == pytest.approx(expected, abs=1e-9)

    def test_matches_matrix_log_oracle_fuzz(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            r1, r2 = random_rotation(rng), random_rotation(rng)
            if geodesic_distance(r1, r2) > math.pi - 1e-3:
                continue  # logm is unstable at the cut locus
            expected = np.linalg.norm(np.real(logm(r1.T @ r2)), "fro") / math.sqrt(2)
            assert geodesic_distance(r1, r2) == pytest.approx(expected, abs=1e-9)

    def test_metric_properties_on_random_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            a, b, c = (random_rotation(rng) for _ in range(3))
            dab, dba = geodesic_distance(a, b), geodesic_distance(b, a)
            assert dab == dba  # symmetry is exact
            assert geodesic_distance(a, a) <= 1e-9
            assert dab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-9

    def test_bi_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            a, b, q = (random_rotation(rng) for _ in range(3))
            d = geodesic_distance(a, b)
            assert abs(geodesic_distance(q @ a, q @ b) - d) <= 1e-9
            assert abs(geodesic_distance(a @ q, b @ q) - d) <= 1e-9

    def test_many_matches_scalar(self):
        rng = np.random.default_rng(17)
        r = random_rotation(rng)
        rs = np.stack([random_rotation(rng) for _ in range(20)])
        np.testing.assert_allclose(
            geodesic_distance_many(r, rs),
            [geodesic_distance(r, x) for x in rs],
            atol=1e-12,
        )


class TestBinning:
    def test_left_edge_maps_to_bin_zero(self):
        scheme = BinningScheme(21)
        assert bin_angle(-math.pi, scheme, AZIMUTH) == 0

    def test_zero_maps_to_center_bin(self):
        scheme = BinningScheme(21)
        assert bin_angle(0.0, scheme, AZIMUTH) == 10

    def test_fuzz_edges_bracket_angle(self):
        scheme = BinningScheme(21)
        rng = np.random.default_rng(23)
        edges = scheme.edges(AZIMUTH)
        for _ in range(1000):
            a = rng.uniform(-math.pi, math.pi)
            b = bin_angle(a, scheme, AZIMUTH)
            assert edges[b] <= a < edges[b + 1]

    def test_center_within_half_width(self):
        scheme = BinningScheme(21)
        rng = np.random.default_rng(29)
        for name in (AZIMUTH, ELEVATION, CYCLO):
            half = scheme.width(name) / 2
            lo, hi = scheme.edges(name)[0], scheme.edges(name)[-1]
            for _ in range(300):
                a = rng.uniform(lo, hi)
                c = scheme.bin_center(bin_angle(a, scheme, name), name)
                assert abs(a - c) <= half + 1e-12

    def test_partition_and_center_spacing(self):
        scheme = BinningScheme(21)
        centers = scheme.centers(AZIMUTH)
        np.testing.assert_allclose(np.diff(centers), 2 * math.pi / 21, atol=1e-12)
        # every normalized angle maps to exactly one bin
        for a in np.linspace(-math.pi, math.pi, 211, endpoint=False):
            assert 0 <= bin_angle(a, scheme, AZIMUTH) < 21

    def test_elevation_right_edge_in_last_bin(self):
        scheme = BinningScheme(21)
        assert bin_angle(math.pi / 2, scheme, ELEVATION) == 20

    def test_wraparound_consistency(self):
        scheme = BinningScheme(21)
        assert bin_angle(math.pi, scheme, AZIMUTH) == bin_angle(-math.pi, scheme, AZIMUTH)
        assert bin_angle(2.5 + 2 * math.pi, scheme, CYCLO) == bin_angle(2.5, scheme, CYCLO)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            BinningScheme(0)
        with pytest.raises(ValueError):
            bin_angle(math.nan, BinningScheme(21), AZIMUTH)
        with pytest.raises(ValueError):
            bin_angle(0.0, BinningScheme(21), "roll")


class TestEulerPose:
    def test_normalized_ranges(self):
        p = EulerPose(3 * math.pi, 2.0, -9.0).normalized()
        assert -math.pi <= p.az < math.pi
        assert -math.pi / 2 <= p.el <= math.pi / 2
        assert -math.pi <= p.cy < math.pi

    def test_pose_of_bins_round_trip(self):
        scheme = BinningScheme(21)
        for bins in [(0, 0, 0), (10, 10, 10), (20, 20, 20), (3, 17, 8)]:
            pose = scheme.pose_of_bins(*bins)
            assert scheme.bin_pose(pose) == bins
