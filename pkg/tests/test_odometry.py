import numpy as np
import pytest

from helpers import random_state
from leggedkf.contact import (
    StiffnessDamping,
    contact_world_kinematics,
    discrepancy,
    viscoelastic_wrench,
)
from leggedkf.odometry import (
    ContactTracker,
    OdometryMode,
    apply_mode,
    detect_contacts,
    init_rest_pose_6d,
)
from leggedkf.so3 import Rotation
from leggedkf.state import ContactInput, EstimatorState


class TestDetect:
    def test_above_threshold_active(self):
        assert detect_contacts({0: 200.0}, mass=100.0, fraction=0.10) == {0}

    def test_below_threshold_inactive(self):
        assert detect_contacts({0: 50.0}, mass=100.0, fraction=0.10) == set()

    def test_threshold_value(self):
        # 0.10 * 100 kg * 9.81 = 98.1 N
        assert detect_contacts({0: 98.0}, mass=100.0, fraction=0.10) == set()
        assert detect_contacts({0: 98.2}, mass=100.0, fraction=0.10) == {0}

    @pytest.mark.parametrize("fraction", [0.05, 0.15])
    def test_bound_fractions_accepted(self, fraction):
        detect_contacts({0: 100.0}, mass=100.0, fraction=fraction)

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            detect_contacts({}, mass=100.0, fraction=0.0)

    def test_pure_function_of_current_force(self):
        # same reading -> same verdict, no history involved
        for _ in range(3):
            assert detect_contacts({0: 98.2, 1: 10.0}, 100.0, 0.10) == {0}


def default_state():
    return EstimatorState.at_rest(pos=(0.0, 0.0, 0.9))


class TestInitRestPose:
    def test_zero_wrench_keeps_fk_pose(self):
        x = default_state()
        ci = ContactInput(position=np.array([0.0, 0.1, -0.9]), rotation=Rotation.identity())
        pos, rot = init_rest_pose_6d(x, ci, np.zeros(3), np.zeros(3))
        kin = contact_world_kinematics(x, ci)
        np.testing.assert_allclose(pos, kin.position, atol=1e-12)
        assert rot.angle_to(kin.rotation) < 1e-12

    def test_measured_force_offsets_position(self):
        x = default_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -0.9]), rotation=Rotation.identity())
        pos, _ = init_rest_pose_6d(x, ci, np.array([0.0, 0.0, 300.0]), np.zeros(3))
        kin = contact_world_kinematics(x, ci)
        np.testing.assert_allclose(pos, kin.position + [0.0, 0.0, 0.001], atol=1e-12)

    def test_measured_torque_recovers_rotation_offset(self):
        x = default_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -0.9]), rotation=Rotation.identity())
        _, rot = init_rest_pose_6d(x, ci, np.zeros(3), np.array([-10.0, 0.0, 0.0]))
        kin = contact_world_kinematics(x, ci)
        offset = kin.rotation @ rot.inverse()
        np.testing.assert_allclose(offset.rotvec(), [0.01, 0.0, 0.0], atol=1e-5)

    def test_roundtrip_with_viscoelastic_wrench(self):
        # wrench generated from a known deformation must invert back to the
        # original rest pose (zero velocities)
        rng = np.random.default_rng(0)
        flex = StiffnessDamping.default()
        for _ in range(200):
            x = random_state(rng, contact_ids=())
            x.vel_local[:] = 0.0
            x.angvel_local[:] = 0.0
            ci = ContactInput(
                position=rng.normal(scale=0.3, size=3),
                rotation=Rotation.exp(rng.normal(scale=0.2, size=3)),
                flex=flex,
            )
            kin = contact_world_kinematics(x, ci)
            true_rest_pos = kin.position + rng.normal(scale=0.002, size=3)
            angle = rng.uniform(0.0, 0.45)
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            true_rest_rot = Rotation.exp(angle * axis).inverse() @ kin.rotation
            d = discrepancy(kin, true_rest_pos, true_rest_rot)
            force, torque = viscoelastic_wrench(d, kin.rotation, flex)
            got_pos, got_rot = init_rest_pose_6d(x, ci, force, torque, flex)
            np.testing.assert_allclose(got_pos, true_rest_pos, atol=1e-6)
            assert got_rot.angle_to(true_rest_rot) < 1e-5

    def test_arcsin_clamped_for_large_torque(self):
        x = default_state()
        ci = ContactInput(position=np.array([0.0, 0.0, -0.9]), rotation=Rotation.identity())
        pos, rot = init_rest_pose_6d(x, ci, np.zeros(3), np.array([1e6, 0.0, 0.0]))
        assert np.isfinite(pos).all()
        assert np.isfinite(rot.quat).all()

    def test_point_contact_skips_orientation(self):
        x = default_state()
        ci = ContactInput(
            position=np.array([0.0, 0.0, -0.9]),
            rotation=Rotation.identity(),
            flex=StiffnessDamping.point_contact(),
        )
        _, rot = init_rest_pose_6d(x, ci, np.zeros(3), np.array([5.0, 0.0, 0.0]))
        kin = contact_world_kinematics(x, ci)
        assert rot.angle_to(kin.rotation) < 1e-12

    def test_zero_linear_stiffness_rejected(self):
        x = default_state()
        flex = StiffnessDamping(0.0, 0.0, 0.0, 0.0)
        ci = ContactInput(position=np.zeros(3), rotation=Rotation.identity(), flex=flex)
        with pytest.raises(ValueError, match="stiffness"):
            init_rest_pose_6d(x, ci, np.zeros(3), np.zeros(3))


class TestApplyMode:
    def test_planar_pins_height(self):
        pos, _ = apply_mode([1.0, 2.0, 0.013], Rotation.identity(), OdometryMode.PLANAR)
        np.testing.assert_array_equal(pos, [1.0, 2.0, 0.0])

    def test_six_d_is_identity(self):
        rng = np.random.default_rng(1)
        rot = Rotation.random(rng)
        pos, out_rot = apply_mode([1.0, 2.0, 3.0], rot, OdometryMode.SIX_D)
        np.testing.assert_array_equal(pos, [1.0, 2.0, 3.0])
        assert out_rot is rot

    def test_reference_mode_uses_planner_pose(self):
        rng = np.random.default_rng(2)
        ref_rot = Rotation.random(rng)
        pos, rot = apply_mode(
            [9.0, 9.0, 9.0], Rotation.identity(), OdometryMode.NONE,
            reference=([0.5, 0.0, 0.0], ref_rot),
        )
        np.testing.assert_array_equal(pos, [0.5, 0.0, 0.0])
        assert rot is ref_rot

    def test_reference_mode_requires_reference(self):
        with pytest.raises(ValueError, match="reference"):
            apply_mode([0.0, 0.0, 0.0], Rotation.identity(), OdometryMode.NONE)

    def test_mode_parsing(self):
        assert OdometryMode.parse("6d") is OdometryMode.SIX_D
        assert OdometryMode.parse("PLANAR") is OdometryMode.PLANAR
        assert OdometryMode.parse("none") is OdometryMode.NONE
        with pytest.raises(ValueError):
            OdometryMode.parse("2d")


class TestTracker:
    def test_make_and_break(self):
        tracker = ContactTracker(mass=100.0, fraction=0.10)
        active, made, broken = tracker.update({0: 200.0, 1: 10.0})
        assert active == {0} and made == {0} and not broken
        active, made, broken = tracker.update({0: 85.0, 1: 10.0})
        # hysteresis: 85 N is below make (98.1) but above break (78.5)
        assert active == {0} and not made and not broken
        active, made, broken = tracker.update({0: 70.0, 1: 10.0})
        assert not active and broken == {0}

    def test_without_hysteresis(self):
        tracker = ContactTracker(mass=100.0, fraction=0.10, hysteresis=False)
        tracker.update({0: 200.0})
        active, _, broken = tracker.update({0: 90.0})
        assert not active and broken == {0}

    def test_missing_reading_breaks_contact(self):
        tracker = ContactTracker(mass=100.0, fraction=0.10)
        tracker.update({0: 200.0})
        active, _, broken = tracker.update({})
        assert not active and broken == {0}
