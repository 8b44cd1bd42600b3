import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation
from scipy.spatial.transform import Slerp

from leggedkf import so3
from leggedkf.so3 import Rotation


def scipy_from(rot: Rotation) -> ScipyRotation:
    w, x, y, z = rot.quat
    return ScipyRotation.from_quat([x, y, z, w])


def test_skew_zero():
    np.testing.assert_array_equal(so3.skew([0.0, 0.0, 0.0]), np.zeros((3, 3)))


def test_skew_pattern():
    expected = np.array([[0.0, -3.0, 2.0], [3.0, 0.0, -1.0], [-2.0, 1.0, 0.0]])
    np.testing.assert_array_equal(so3.skew([1.0, 2.0, 3.0]), expected)


def test_skew_is_cross_product():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v, w = rng.normal(size=(2, 3))
        np.testing.assert_allclose(so3.skew(v) @ w, np.cross(v, w), atol=1e-14)


@pytest.mark.parametrize("v", [[0.3, -0.1, 0.7], [1.0, 2.0, 3.0], [-np.pi, 0.0, np.pi]])
def test_vec_inverts_skew(v):
    np.testing.assert_array_equal(so3.vec(so3.skew(v)), np.asarray(v))


def test_vec_zero():
    np.testing.assert_array_equal(so3.vec(np.zeros((3, 3))), np.zeros(3))


def test_vec_rejects_non_antisymmetric():
    with pytest.raises(ValueError, match="antisymmetric"):
        so3.vec(np.eye(3))


def test_exp_identity():
    np.testing.assert_allclose(so3.exp([0.0, 0.0, 0.0]), np.eye(3), atol=1e-15)


def test_exp_quarter_turn_about_x_maps_y_to_z():
    r = so3.exp([np.pi / 2, 0.0, 0.0])
    np.testing.assert_allclose(r @ np.array([0.0, 1.0, 0.0]), [0.0, 0.0, 1.0], atol=1e-12)


def test_exp_matches_scipy_oracle():
    rng = np.random.default_rng(1)
    vs = rng.normal(size=(200, 3))
    np.testing.assert_allclose(so3.exp(vs), ScipyRotation.from_rotvec(vs).as_matrix(), atol=1e-12)


def test_exp_log_roundtrip_bulk():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(1000, 3))
    v *= (rng.uniform(0.0, np.pi - 0.01, size=1000) / np.linalg.norm(v, axis=1))[:, None]
    np.testing.assert_allclose(so3.log(so3.exp(v)), v, atol=1e-9)


def test_log_identity():
    np.testing.assert_array_equal(so3.log(np.eye(3)), np.zeros(3))


def test_log_simple_roundtrip():
    np.testing.assert_allclose(so3.log(so3.exp([0.0, 1.2, 0.0])), [0.0, 1.2, 0.0], atol=1e-12)


def test_log_near_pi():
    v = np.array([0.0, 0.0, np.pi - 1e-6])
    got = so3.log(so3.exp(v))
    np.testing.assert_allclose(got, v, atol=1e-8)
    # oracle: quaternion angle from scipy
    angle = ScipyRotation.from_matrix(so3.exp(v)).magnitude()
    assert abs(np.linalg.norm(got) - angle) < 1e-9


def test_log_at_exact_pi_is_deterministic():
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, -1.0, 0.0]), np.array([0.6, 0.0, -0.8])):
        r = so3.exp(np.pi * axis)
        got = so3.log(r)
        assert np.linalg.norm(got) == pytest.approx(np.pi, abs=1e-9)
        # largest-magnitude component is positive
        assert got[np.argmax(np.abs(got))] > 0.0
        np.testing.assert_allclose(so3.exp(got), r, atol=1e-9)


def test_exp_rotates_perpendicular_vector_by_angle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = rng.normal(size=3)
        w *= rng.uniform(0.05, np.pi - 0.05) / np.linalg.norm(w)
        # random vector perpendicular to w
        v = np.cross(w, rng.normal(size=3))
        v /= np.linalg.norm(v)
        rv = so3.exp(w) @ v
        angle = np.arctan2(np.linalg.norm(np.cross(v, rv)), v @ rv)
        assert abs(angle - np.linalg.norm(w)) < 1e-9


def test_half_vec_difference_property():
    # (1/2) vec(R - R^T) == sin(|log R|)/|log R| * log(R)
    rng = np.random.default_rng(4)
    for _ in range(100):
        v = rng.normal(size=3)
        v *= rng.uniform(1e-4, np.pi - 1e-2) / np.linalg.norm(v)
        r = so3.exp(v)
        lhs = 0.5 * so3.vec(r - r.T, tol=np.inf)
        theta = np.linalg.norm(v)
        np.testing.assert_allclose(lhs, np.sin(theta) / theta * v, atol=1e-9)


class TestRotation:
    def test_quaternion_normalized(self):
        r = Rotation((2.0, 0.0, 0.0, 0.0))
        assert np.linalg.norm(r.quat) == pytest.approx(1.0, abs=1e-12)

    def test_matrix_is_orthonormal(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = Rotation.random(rng).matrix
            np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)
            assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-12)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            a, b = Rotation.random(rng), Rotation.random(rng)
            np.testing.assert_allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-12)

    def test_compose_does_not_drift(self):
        rng = np.random.default_rng(7)
        r = Rotation.identity()
        step = Rotation.exp([1e-3, -2e-3, 3e-3])
        for _ in range(20000):
            r = r @ step
        m = r.matrix
        np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)

    def test_inverse(self):
        rng = np.random.default_rng(8)
        r = Rotation.random(rng)
        np.testing.assert_allclose((r @ r.inverse()).matrix, np.eye(3), atol=1e-12)

    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(9)
        r = Rotation.random(rng)
        v = rng.normal(size=(4, 3))
        np.testing.assert_allclose(r.apply(v), (r.matrix @ v.T).T, atol=1e-13)

    def test_from_matrix_roundtrip(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            r = Rotation.random(rng)
            np.testing.assert_allclose(Rotation.from_matrix(r.matrix).matrix, r.matrix, atol=1e-12)

    def test_exp_log_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            v = rng.normal(size=3)
            v *= rng.uniform(0.0, np.pi - 0.01) / max(np.linalg.norm(v), 1e-12)
            np.testing.assert_allclose(Rotation.exp(v).rotvec(), v, atol=1e-9)


class TestInterpolate:
    def test_endpoints(self):
        rng = np.random.default_rng(12)
        a, b = Rotation.random(rng), Rotation.random(rng)
        assert so3.interpolate(a, b, 0.0).angle_to(a) < 1e-12
        assert so3.interpolate(a, b, 1.0).angle_to(b) < 1e-12

    def test_single_axis_midpoint(self):
        b = Rotation.exp([0.0, 0.0, 0.4])
        mid = so3.interpolate(Rotation.identity(), b, 0.5)
        np.testing.assert_allclose(mid.rotvec(), [0.0, 0.0, 0.2], atol=1e-12)

    def test_matches_scipy_slerp(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            a, b = Rotation.random(rng), Rotation.random(rng)
            got = so3.interpolate(a, b, 0.3)
            slerp = Slerp([0.0, 1.0], ScipyRotation.concatenate([scipy_from(a), scipy_from(b)]))
            expected = slerp(0.3).as_matrix()
            np.testing.assert_allclose(got.matrix, expected, atol=1e-9)

    def test_rejects_rho_out_of_range(self):
        a = Rotation.identity()
        with pytest.raises(ValueError):
            so3.interpolate(a, a, 1.5)


class TestYawTilt:
    def test_split_recomposes(self):
        rng = np.random.default_rng(14)
        for _ in range(100):
            r = Rotation.random(rng)
            psi, tilt = so3.split_yaw_tilt(r)
            np.testing.assert_allclose((so3.yaw_rotation(psi) @ tilt).matrix, r.matrix, atol=1e-9)

    def test_tilt_has_no_yaw(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            _, tilt = so3.split_yaw_tilt(Rotation.random(rng))
            # tilt axis lies in the horizontal plane
            assert abs(tilt.rotvec()[2]) < 1e-9

    def test_pure_yaw(self):
        psi, tilt = so3.split_yaw_tilt(so3.yaw_rotation(1.1))
        assert psi == pytest.approx(1.1, abs=1e-12)
        assert tilt.angle_to(Rotation.identity()) < 1e-12

    def test_replace_tilt(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            a, b = Rotation.random(rng), Rotation.random(rng)
            fused = so3.replace_tilt(a, b)
            # tilt (body gravity direction) comes from b
            np.testing.assert_allclose(fused.matrix[2, :], b.matrix[2, :], atol=1e-9)
            # yaw comes from a
            assert so3.yaw_of(fused) == pytest.approx(so3.yaw_of(a), abs=1e-9)
