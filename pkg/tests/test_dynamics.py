import numpy as np
import pytest

from helpers import random_input, random_state, standing_equilibrium
from leggedkf.contact import StiffnessDamping, contact_world_kinematics, discrepancy, viscoelastic_wrench
from leggedkf.dynamics import (
    GRAVITY,
    CentroidAccel,
    accelerations,
    angular_acceleration,
    integrate_kinematics,
    linear_acceleration,
    state_transition,
)
from leggedkf.so3 import Rotation, skew
from leggedkf.state import ContactInput, ContactState, EstimatorState, InputFrame


def bare_state(**kw):
    defaults = dict(
        pos=np.zeros(3), rot=Rotation.identity(), vel=np.zeros(3), angvel=np.zeros(3),
        contacts=(),
    )
    defaults.update(kw)
    return EstimatorState(
        defaults["pos"], defaults["rot"], defaults["vel"], defaults["angvel"],
        np.zeros((1, 3)), np.zeros(3), np.zeros(3), defaults["contacts"],
    )


def bare_input(mass=100.0, inertia=None, contacts=None):
    return InputFrame(
        mass=mass,
        inertia=inertia if inertia is not None else np.eye(3),
        contacts=contacts or {},
        imus=[],
    )


class TestLinearAcceleration:
    def test_free_fall(self):
        a = linear_acceleration(bare_state(), bare_input())
        np.testing.assert_allclose(a, [0.0, 0.0, -GRAVITY], atol=1e-15)

    def test_static_equilibrium(self):
        m = 100.0
        contact = ContactState(0, np.zeros(3), Rotation.identity(), [0.0, 0.0, m * GRAVITY], np.zeros(3))
        x = bare_state(contacts=[contact])
        u = bare_input(mass=m, contacts={0: ContactInput(position=np.zeros(3), rotation=Rotation.identity())})
        np.testing.assert_allclose(linear_acceleration(x, u), np.zeros(3), atol=1e-12)

    def test_hand_evaluated_net_thrust(self):
        contact = ContactState(0, np.zeros(3), Rotation.identity(), [0.0, 0.0, 1081.0], np.zeros(3))
        x = bare_state(contacts=[contact])
        u = bare_input(mass=100.0, contacts={0: ContactInput(position=np.zeros(3), rotation=Rotation.identity())})
        np.testing.assert_allclose(linear_acceleration(x, u), [0.0, 0.0, 1.0], atol=1e-12)

    def test_force_balance_identity(self):
        # m (a + g R^T e_z) - F_res - F_e == sum of rotated contact forces
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = random_state(rng)
            u = random_input(rng, x)
            a = linear_acceleration(x, u)
            lhs = u.mass * (a + GRAVITY * x.rot.matrix[2, :]) - u.force_residual - x.ext_force
            rhs = sum(u.contacts[c.contact_id].rotation.matrix @ c.force for c in x.contacts)
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)


class TestAngularAcceleration:
    def test_all_zero(self):
        x = bare_state()
        np.testing.assert_allclose(angular_acceleration(x, bare_input()), np.zeros(3), atol=1e-15)

    def test_unit_inertia_external_torque(self):
        x = bare_state()
        x.ext_torque[:] = [0.5, 0.0, 0.0]
        np.testing.assert_allclose(angular_acceleration(x, bare_input()), [0.5, 0.0, 0.0], atol=1e-15)

    def test_hand_evaluated_moment_arm(self):
        contact = ContactState(0, np.zeros(3), Rotation.identity(), [0.0, 0.0, 981.0], np.zeros(3))
        x = bare_state(contacts=[contact])
        u = bare_input(
            inertia=np.diag([10.0, 10.0, 5.0]),
            contacts={0: ContactInput(position=np.array([0.0, 0.1, -1.0]), rotation=Rotation.identity())},
        )
        expected = np.linalg.solve(np.diag([10.0, 10.0, 5.0]), skew([0.0, 0.1, -1.0]) @ [0.0, 0.0, 981.0])
        got = angular_acceleration(x, u)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(got, [9.81, 0.0, 0.0], atol=1e-12)


def rk4_local_kinematics(p0, R0, v0, w0, a_l, wd_l, dt, n_steps):
    """Independent RK4 integration of the continuous local-frame kinematics
    with constant local accelerations: the oracle for integrate_kinematics."""

    def deriv(state):
        p, R, v, w = state
        return (-np.cross(w, p) + v, R @ skew(w), -np.cross(w, v) + a_l, wd_l)

    def add(state, delta, h):
        return tuple(s + h * d for s, d in zip(state, delta))

    state = (np.asarray(p0, float), np.asarray(R0, float), np.asarray(v0, float), np.asarray(w0, float))
    for _ in range(n_steps):
        k1 = deriv(state)
        k2 = deriv(add(state, k1, dt / 2))
        k3 = deriv(add(state, k2, dt / 2))
        k4 = deriv(add(state, k3, dt))
        state = tuple(
            s + dt / 6.0 * (a + 2 * b + 2 * c + d)
            for s, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
    return state


class TestIntegrateKinematics:
    def test_pure_translation(self):
        x = bare_state(vel=np.array([1.0, 0.0, 0.0]), pos=np.array([0.2, 0.0, 0.0]))
        p, rot, v, w = integrate_kinematics(x, CentroidAccel(np.zeros(3), np.zeros(3)), 0.005)
        np.testing.assert_allclose(p, [0.205, 0.0, 0.0], atol=1e-15)
        assert rot.angle_to(Rotation.identity()) == 0.0
        np.testing.assert_allclose(v, [1.0, 0.0, 0.0], atol=1e-15)

    def test_constant_acceleration(self):
        x = bare_state()
        p, _, v, _ = integrate_kinematics(x, CentroidAccel(np.array([0.0, 0.0, 2.0]), np.zeros(3)), 0.005)
        np.testing.assert_allclose(p, [0.0, 0.0, 2.5e-5], atol=1e-18)
        np.testing.assert_allclose(v, [0.0, 0.0, 0.01], atol=1e-18)

    def test_single_step_matches_rk4(self):
        # position and orientation carry second-order terms (local error
        # O(dt^3)); the velocity update is explicit Euler (local O(dt^2))
        x = bare_state(
            pos=np.array([1.0, 0.0, 0.0]),
            vel=np.array([1.0, 0.0, 0.0]),
            angvel=np.array([0.0, 0.0, 1.0]),
        )
        dt = 0.01
        p, rot, v, w = integrate_kinematics(x, CentroidAccel(np.zeros(3), np.zeros(3)), dt)
        pr, Rr, vr, wr = rk4_local_kinematics(
            x.pos_local, np.eye(3), x.vel_local, x.angvel_local, np.zeros(3), np.zeros(3), dt, 1
        )
        assert np.linalg.norm(p - pr) < 5.0 * dt**3
        assert np.linalg.norm(rot.matrix - Rr) < 5.0 * dt**3
        assert np.linalg.norm(v - vr) < 5.0 * dt**2

    def test_one_step_error_is_second_order(self):
        # halving the step quarters the one-step error against the RK4 oracle
        rng = np.random.default_rng(1)
        p0 = rng.normal(size=3)
        v0 = rng.normal(size=3)
        w0 = rng.normal(size=3)
        a = rng.normal(size=3)
        wd = rng.normal(size=3)
        errors = []
        for dt in (0.02, 0.01, 0.005):
            x = bare_state(pos=p0.copy(), vel=v0.copy(), angvel=w0.copy())
            pp, _, vv, _ = integrate_kinematics(x, CentroidAccel(a, wd), dt)
            pr, _, vr, _ = rk4_local_kinematics(p0, np.eye(3), v0, w0, a, wd, dt / 8, 8)
            errors.append(np.linalg.norm(np.concatenate([pp - pr, vv - vr])))
        r1 = errors[0] / errors[1]
        r2 = errors[1] / errors[2]
        assert 3.3 < r1 < 4.8
        assert 3.3 < r2 < 4.8

    def test_rotation_stays_valid_over_many_steps(self):
        x = bare_state(angvel=np.array([0.3, -0.2, 0.5]))
        acc = CentroidAccel(np.zeros(3), np.zeros(3))
        rot = x.rot
        for _ in range(100_000):
            _, rot, _, _ = integrate_kinematics(x, acc, 0.005)
            x.rot = rot
        m = rot.matrix
        np.testing.assert_allclose(m.T @ m, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            integrate_kinematics(bare_state(), CentroidAccel(np.zeros(3), np.zeros(3)), 0.0)


class TestStateTransition:
    def test_static_equilibrium_is_fixed_point(self):
        x, u = standing_equilibrium()
        x_next = state_transition(x, u, 0.005)
        assert np.linalg.norm(x_next.pos_local - x.pos_local) < 1e-12
        assert x_next.rot.angle_to(x.rot) < 1e-12
        assert np.linalg.norm(x_next.vel_local) < 1e-12
        for c0, c1 in zip(x.contacts, x_next.contacts):
            np.testing.assert_allclose(c1.force, c0.force, atol=1e-9)
            np.testing.assert_allclose(c1.torque, c0.torque, atol=1e-12)

    def test_constant_submodels(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = random_state(rng)
            u = random_input(rng, x)
            x_next = state_transition(x, u, 0.005)
            np.testing.assert_array_equal(x_next.gyro_biases, x.gyro_biases)
            np.testing.assert_array_equal(x_next.ext_force, x.ext_force)
            np.testing.assert_array_equal(x_next.ext_torque, x.ext_torque)
            for c0, c1 in zip(x.contacts, x_next.contacts):
                np.testing.assert_array_equal(c1.rest_position, c0.rest_position)
                np.testing.assert_array_equal(
                    c1.rest_orientation.quat, c0.rest_orientation.quat
                )

    def test_wrench_recomputed_at_predicted_kinematics(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = random_state(rng)
            u = random_input(rng, x)
            x_next = state_transition(x, u, 0.005)
            for c in x_next.contacts:
                ci = u.contacts[c.contact_id]
                kin = contact_world_kinematics(x_next, ci)
                d = discrepancy(kin, c.rest_position, c.rest_orientation)
                f, t = viscoelastic_wrench(d, kin.rotation, ci.flex)
                np.testing.assert_allclose(c.force, f, atol=1e-12)
                np.testing.assert_allclose(c.torque, t, atol=1e-12)
