import numpy as np
import pytest

from helpers import random_state
from leggedkf.contact import (
    StiffnessDamping,
    contact_world_kinematics,
    discrepancy,
    viscoelastic_wrench,
)
from leggedkf.so3 import Rotation
from leggedkf.state import ContactInput, EstimatorState


def make_state(pos=(0, 0, 0), rot=None, vel=(0, 0, 0), angvel=(0, 0, 0)):
    return EstimatorState(
        np.asarray(pos, dtype=float),
        rot if rot is not None else Rotation.identity(),
        np.asarray(vel, dtype=float),
        np.asarray(angvel, dtype=float),
        np.zeros((1, 3)), np.zeros(3), np.zeros(3),
    )


class TestStiffnessDamping:
    def test_scalar_expansion(self):
        sd = StiffnessDamping(3e5, 150.0, 1000.0, 17.0)
        np.testing.assert_array_equal(sd.linear_stiffness, [3e5] * 3)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            StiffnessDamping(-1.0, 0.0, 0.0, 0.0)

    def test_rejects_non_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            StiffnessDamping(np.ones((3, 3)), 0.0, 0.0, 0.0)

    def test_point_contact_flag(self):
        assert StiffnessDamping.point_contact().is_point_contact
        assert not StiffnessDamping.default().is_point_contact


class TestWorldKinematics:
    def test_static_identity(self):
        x = make_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -1.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        np.testing.assert_allclose(kin.position, [0.0, 0.0, -1.0])
        np.testing.assert_allclose(kin.velocity, np.zeros(3), atol=1e-15)
        np.testing.assert_allclose(kin.angular_velocity, np.zeros(3), atol=1e-15)

    def test_lever_arm_velocity(self):
        x = make_state(angvel=(0, 0, 1))
        ci = ContactInput(position=np.array([1.0, 0.0, 0.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        np.testing.assert_allclose(kin.velocity, [0.0, 1.0, 0.0], atol=1e-15)

    def test_matches_rigid_transform_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = random_state(rng, contact_ids=(0,))
            ci = ContactInput(
                position=rng.normal(size=3),
                rotation=Rotation.random(rng),
                velocity=rng.normal(size=3),
                angular_velocity=rng.normal(size=3),
            )
            kin = contact_world_kinematics(x, ci)
            # homogeneous-transform oracle: T_wc = T_wb * T_bc with
            # world body pose (R, p_w = R p_l)
            R = x.rot.matrix
            p_w = R @ x.pos_local
            np.testing.assert_allclose(kin.position, p_w + R @ ci.position, atol=1e-12)
            np.testing.assert_allclose(
                kin.rotation.matrix, R @ ci.rotation.matrix, atol=1e-12
            )
            # velocity composition: v_c = v_b + w_b x (R p_bc) + R v_bc
            v_b = R @ x.vel_local
            w_b = R @ x.angvel_local
            np.testing.assert_allclose(
                kin.velocity, v_b + np.cross(w_b, R @ ci.position) + R @ ci.velocity, atol=1e-12
            )
            np.testing.assert_allclose(
                kin.angular_velocity, w_b + R @ ci.angular_velocity, atol=1e-12
            )


class TestDiscrepancy:
    def test_zero_at_rest_pose(self):
        x = make_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -1.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, kin.position, kin.rotation)
        np.testing.assert_array_equal(d.lin_offset, np.zeros(3))
        assert d.rot_offset.angle_to(Rotation.identity()) == 0.0
        np.testing.assert_allclose(d.lin_velocity, np.zeros(3), atol=1e-15)

    def test_linear_offset(self):
        x = make_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -1.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, kin.position + np.array([0.0, 0.0, 0.001]), kin.rotation)
        np.testing.assert_allclose(d.lin_offset, [0.0, 0.0, -0.001], atol=1e-15)

    def test_rotation_offset(self):
        rng = np.random.default_rng(1)
        rest = Rotation.random(rng)
        cur = Rotation.exp([0.01, 0.0, 0.0]) @ rest
        x = make_state()
        ci = ContactInput(position=np.zeros(3), rotation=cur)
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, np.zeros(3), rest)
        np.testing.assert_allclose(d.rot_offset.rotvec(), [0.01, 0.0, 0.0], atol=1e-12)


class TestViscoelasticWrench:
    def test_zero_discrepancy_zero_wrench(self):
        x = make_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -1.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, kin.position, kin.rotation)
        f, t = viscoelastic_wrench(d, kin.rotation, StiffnessDamping.default())
        np.testing.assert_allclose(f, np.zeros(3), atol=1e-12)
        np.testing.assert_allclose(t, np.zeros(3), atol=1e-12)

    def test_compression_force(self):
        # 1 mm compression at 3e5 N/m -> 300 N upward reaction
        x = make_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -1.0]), rotation=Rotation.identity())
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, kin.position + np.array([0.0, 0.0, 0.001]), kin.rotation)
        f, _ = viscoelastic_wrench(d, kin.rotation, StiffnessDamping.default())
        np.testing.assert_allclose(f, [0.0, 0.0, 300.0], atol=1e-9)

    def test_angular_spring_torque(self):
        # 0.01 rad twist at 1000 N m/rad -> ~10 N m restoring torque with
        # the sin(theta)/theta factor of the matrix-difference form
        x = make_state()
        ci = ContactInput(
            position=np.zeros(3), rotation=Rotation.exp([0.01, 0.0, 0.0])
        )
        kin = contact_world_kinematics(x, ci)
        d = discrepancy(kin, np.zeros(3), Rotation.identity())
        _, t = viscoelastic_wrench(d, Rotation.identity(), StiffnessDamping.default())
        expected = -1000.0 * np.sin(0.01)
        np.testing.assert_allclose(t, [expected, 0.0, 0.0], atol=1e-9)
        assert abs(t[0] - (-10.0)) / 10.0 < 2e-4

    def test_elastic_force_opposes_displacement(self):
        rng = np.random.default_rng(2)
        flex = StiffnessDamping(3e5, 0.0, 1000.0, 0.0)
        for _ in range(100):
            x = make_state(rot=Rotation.random(rng))
            ci = ContactInput(position=rng.normal(size=3), rotation=Rotation.random(rng))
            kin = contact_world_kinematics(x, ci)
            offset = rng.normal(scale=0.01, size=3)
            d = discrepancy(kin, kin.position - offset, kin.rotation)
            f, _ = viscoelastic_wrench(d, kin.rotation, flex)
            assert (kin.rotation.matrix @ f) @ d.lin_offset <= 1e-12

    def test_torque_magnitude_is_sin_theta(self):
        rng = np.random.default_rng(3)
        flex = StiffnessDamping(3e5, 0.0, 1000.0, 0.0)
        for _ in range(50):
            theta = rng.uniform(1e-3, np.pi / 2 - 1e-3)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            rest = Rotation.random(rng)
            x = make_state()
            ci = ContactInput(position=np.zeros(3), rotation=Rotation.exp(theta * axis) @ rest)
            kin = contact_world_kinematics(x, ci)
            d = discrepancy(kin, np.zeros(3), rest)
            _, t = viscoelastic_wrench(d, kin.rotation, flex)
            assert np.linalg.norm(t) == pytest.approx(1000.0 * np.sin(theta), rel=1e-9)

    def test_point_contact_zero_torque(self):
        rng = np.random.default_rng(4)
        flex = StiffnessDamping.point_contact()
        for _ in range(20):
            x = random_state(rng, contact_ids=(0,))
            ci = ContactInput(position=rng.normal(size=3), rotation=Rotation.random(rng))
            kin = contact_world_kinematics(x, ci)
            d = discrepancy(kin, rng.normal(size=3), Rotation.random(rng))
            _, t = viscoelastic_wrench(d, kin.rotation, flex)
            np.testing.assert_array_equal(t, np.zeros(3))
