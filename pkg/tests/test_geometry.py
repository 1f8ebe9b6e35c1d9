import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from manipsim.errors import ConfigurationError
from manipsim.geometry import (
    DistanceMetric,
    MetricKind,
    Pose,
    UnitQuat,
    Vec3,
    compute_distance,
    look_at_pose,
    pose_compose,
    pose_inverse,
    project_point,
    rotation_aligning,
    transform_point,
)

from ._oracles import apply_hmat, pose_to_hmat, quat_to_matrix_oracle

finite_floats = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
quat_components = st.floats(min_value=-4.0, max_value=4.0, allow_nan=False)


def random_quat(rng):
    w, x, y, z = rng.standard_normal(4)
    return UnitQuat(w, x, y, z)


def random_pose(rng):
    p = Vec3(*rng.uniform(-2.0, 2.0, size=3))
    return Pose(p, random_quat(rng))


class TestVec3:
    def test_basic_algebra(self):
        a = Vec3(1.0, 2.0, 3.0)
        b = Vec3(-1.0, 0.5, 2.0)
        assert (a + b).as_tuple() == (0.0, 2.5, 5.0)
        assert (a - b).as_tuple() == (2.0, 1.5, 1.0)
        assert a.dot(b) == 1.0 * -1.0 + 2.0 * 0.5 + 3.0 * 2.0
        assert a.cross(b).as_tuple() == (2.0 * 2.0 - 3.0 * 0.5, 3.0 * -1.0 - 1.0 * 2.0, 1.0 * 0.5 - 2.0 * -1.0)

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigurationError):
            Vec3(float("nan"), 0.0, 0.0)
        with pytest.raises(ConfigurationError):
            Vec3(0.0, float("inf"), 0.0)

    def test_normalize_zero_rejected(self):
        with pytest.raises(ConfigurationError):
            Vec3.zero().normalized()


class TestUnitQuat:
    @given(quat_components, quat_components, quat_components, quat_components)
    def test_normalized_and_canonical(self, w, x, y, z):
        if w * w + x * x + y * y + z * z < 1e-6:
            return
        q = UnitQuat(w, x, y, z)
        n = math.sqrt(q.w**2 + q.x**2 + q.y**2 + q.z**2)
        assert abs(n - 1.0) <= 1e-9
        assert q.w >= 0.0

    def test_zero_rejected(self):
        with pytest.raises(ConfigurationError):
            UnitQuat(0.0, 0.0, 0.0, 0.0)

    def test_to_matrix_matches_expm_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            q = random_quat(rng)
            expected = quat_to_matrix_oracle(q.w, q.x, q.y, q.z)
            np.testing.assert_allclose(q.to_matrix(), expected, atol=1e-9)

    def test_multiply_matches_matrix_product(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a, b = random_quat(rng), random_quat(rng)
            left = a.multiply(b).to_matrix()
            right = a.to_matrix() @ b.to_matrix()
            np.testing.assert_allclose(left, right, atol=1e-9)

    def test_rotate_matches_matrix_action(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            q = random_quat(rng)
            v = Vec3(*rng.uniform(-3, 3, size=3))
            np.testing.assert_allclose(
                q.rotate(v).as_array(), q.to_matrix() @ v.as_array(), atol=1e-12
            )

    def test_from_matrix_roundtrip(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            q = random_quat(rng)
            r = UnitQuat.from_matrix(q.to_matrix())
            # canonical form makes equality well-defined
            np.testing.assert_allclose(
                [r.w, r.x, r.y, r.z], [q.w, q.x, q.y, q.z], atol=1e-9
            )

    def test_axis_angle_quarter_turn(self):
        q = UnitQuat.from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        got = q.rotate(Vec3(1, 0, 0))
        np.testing.assert_allclose(got.as_array(), [0, 1, 0], atol=1e-12)

    def test_rotation_aligning(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = Vec3(*rng.standard_normal(3))
            b = Vec3(*rng.standard_normal(3))
            if a.norm() < 1e-3 or b.norm() < 1e-3:
                continue
            q = rotation_aligning(a, b)
            got = q.rotate(a.normalized())
            np.testing.assert_allclose(got.as_array(), b.normalized().as_array(), atol=1e-9)
        # antiparallel case must still work
        q = rotation_aligning(Vec3(0, 0, 1), Vec3(0, 0, -1))
        np.testing.assert_allclose(q.rotate(Vec3(0, 0, 1)).as_array(), [0, 0, -1], atol=1e-9)


class TestPose:
    def test_compose_matches_hmat_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            a, b = random_pose(rng), random_pose(rng)
            point = rng.uniform(-2, 2, size=3)
            composed = pose_compose(a, b)
            expected = apply_hmat(pose_to_hmat(a) @ pose_to_hmat(b), point)
            got = transform_point(composed, Vec3(*point))
            np.testing.assert_allclose(got.as_array(), expected, atol=1e-9)

    def test_inverse_matches_hmat_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            a = random_pose(rng)
            point = rng.uniform(-2, 2, size=3)
            expected = apply_hmat(np.linalg.inv(pose_to_hmat(a)), point)
            got = pose_inverse(a).transform(Vec3(*point))
            np.testing.assert_allclose(got.as_array(), expected, atol=1e-9)

    def test_inverse_roundtrip_identity(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            a = random_pose(rng)
            p = Vec3(*rng.uniform(-2, 2, size=3))
            back = pose_inverse(a).transform(a.transform(p))
            np.testing.assert_allclose(back.as_array(), p.as_array(), atol=1e-9)


class TestDistance:
    def test_euclidean_hand_value(self):
        m = DistanceMetric(MetricKind.EUCLIDEAN)
        assert compute_distance([0, 0], [3, 4], m) == pytest.approx(5.0, abs=1e-12)

    def test_manhattan_hand_value(self):
        m = DistanceMetric(MetricKind.MANHATTAN)
        assert compute_distance([1, -1, 2], [0, 1, 0], m) == pytest.approx(5.0, abs=1e-12)

    def test_mahalanobis_hand_value(self):
        # d = (1, 2), variances (4, 1): sqrt(1/4 + 4) = sqrt(4.25)
        m = DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(4.0, 1.0))
        assert compute_distance([1, 2], [0, 0], m) == pytest.approx(math.sqrt(4.25), abs=1e-12)

    def test_mahalanobis_identity_equals_euclidean(self):
        rng = np.random.default_rng(15)
        for n in (1, 3, 7, 48):
            maha = DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(1.0,) * n)
            eucl = DistanceMetric(MetricKind.EUCLIDEAN)
            for _ in range(50):
                a = rng.uniform(-5, 5, size=n)
                b = rng.uniform(-5, 5, size=n)
                assert abs(compute_distance(a, b, maha) - compute_distance(a, b, eucl)) <= 1e-12

    @given(
        st.lists(finite_floats, min_size=1, max_size=6),
        st.lists(finite_floats, min_size=1, max_size=6),
        st.lists(finite_floats, min_size=1, max_size=6),
    )
    @settings(max_examples=200)
    def test_triangle_inequality(self, a, b, c):
        n = min(len(a), len(b), len(c))
        a, b, c = a[:n], b[:n], c[:n]
        for metric in (
            DistanceMetric(MetricKind.EUCLIDEAN),
            DistanceMetric(MetricKind.MANHATTAN),
            DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=tuple(1.0 + i for i in range(n))),
        ):
            dab = compute_distance(a, b, metric)
            dbc = compute_distance(b, c, metric)
            dac = compute_distance(a, c, metric)
            assert dac <= dab + dbc + 1e-9

    def test_length_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            compute_distance([1, 2], [1, 2, 3], DistanceMetric(MetricKind.EUCLIDEAN))

    def test_bad_diag_rejected(self):
        with pytest.raises(ConfigurationError):
            DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(1.0, 0.0))
        with pytest.raises(ConfigurationError):
            DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(-1.0,))
        with pytest.raises(ConfigurationError):
            DistanceMetric(MetricKind.MAHALANOBIS)  # diag missing
        with pytest.raises(ConfigurationError):
            DistanceMetric(MetricKind.EUCLIDEAN, mahalanobis_diag=(1.0,))

    def test_diag_length_mismatch_rejected(self):
        m = DistanceMetric(MetricKind.MAHALANOBIS, mahalanobis_diag=(1.0, 2.0))
        with pytest.raises(ConfigurationError):
            compute_distance([1, 2, 3], [0, 0, 0], m)


class TestProjection:
    def test_optical_axis_hits_center(self):
        cam = Pose.identity()  # looks along -z
        uv = project_point(cam, math.pi / 2, (64, 64), Vec3(0, 0, -2.0))
        assert uv == pytest.approx((32.0, 32.0), abs=1e-9)

    def test_square_image_hand_value(self):
        # fov
        # 90 deg on 64x64: f = 32. Point (1, 0, -2): u = 32 + 32 * (1/2) = 48.
        cam = Pose.identity()
        uv = project_point(cam, math.pi / 2, (64, 64), Vec3(1.0, 0.0, -2.0))
        assert uv == pytest.approx((48.0, 32.0), abs=1e-9)
        # +y goes up in the world, down in pixel v
        uv = project_point(cam, math.pi / 2, (64, 64), Vec3(0.0, 1.0, -2.0))
        assert uv == pytest.approx((32.0, 16.0), abs=1e-9)

    def test_right_edge_square(self):
        # x = tan(fov/2) * d lands exactly on u = w for square images
        fov, d, w, h = 1.1, 3.0, 64, 64
        x = math.tan(fov / 2) * d
        uv = project_point(Pose.identity(), fov, (w, h), Vec3(x, 0.0, -d))
        assert uv is not None and uv[0] == pytest.approx(float(w), abs=1e-9)

    def test_right_edge_wide_image(self):
        # non-square: the horizontal half-span at depth d is tan(fov/2)*d*(w/h)
        fov, d, w, h = 1.1, 3.0, 128, 64
        x = math.tan(fov / 2) * d * (w / h)
        uv = project_point(Pose.identity(), fov, (w, h), Vec3(x, 0.0, -d))
        assert uv is not None and uv[0] == pytest.approx(float(w), abs=1e-9)

    def test_behind_camera_is_none(self):
        cam = Pose.identity()
        assert project_point(cam, 1.0, (64, 64), Vec3(0, 0, 1.0)) is None
        assert project_point(cam, 1.0, (64, 64), Vec3(0, 0, 0.0)) is None
        # just in front of the epsilon plane still rejected
        assert project_point(cam, 1.0, (64, 64), Vec3(0, 0, -1e-7)) is None

    def test_invalid_args_rejected(self):
        with pytest.raises(ConfigurationError):
            project_point(Pose.identity(), 0.0, (64, 64), Vec3(0, 0, -1))
        with pytest.raises(ConfigurationError):
            project_point(Pose.identity(), math.pi, (64, 64), Vec3(0, 0, -1))
        with pytest.raises(ConfigurationError):
            project_point(Pose.identity(), 1.0, (0, 64), Vec3(0, 0, -1))

    def test_look_at_points_minus_z_at_target(self):
        eye, target = Vec3(2.0, -1.0, 1.5), Vec3(0.1, 0.2, 0.1)
        cam = look_at_pose(eye, target)
        p = cam.inverse().transform(target)
        np.testing.assert_allclose([p.x, p.y], [0.0, 0.0], atol=1e-9)
        assert p.z == pytest.approx(-eye.distance_to(target), abs=1e-9)
        # up hint: world +z should not point downward in the image
        up_world = cam.orientation.rotate(Vec3(0, 1, 0))
        assert up_world.z > 0.0
