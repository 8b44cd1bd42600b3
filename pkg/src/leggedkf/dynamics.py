"""State transition: Newton-Euler accelerations of the centroid frame and
discrete integration of its kinematics.

All velocity/acceleration quantities are expressed in the centroid (local)
frame; gravity is a constant ``GRAVITY`` along the world -z axis.  The
accelerations are functions of the estimated wrenches, which is what couples
the kinematic state to the contact states: integrating them propagates
wrench information into pose and velocity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import contact_world_kinematics, discrepancy, viscoelastic_wrench
from .so3 import Rotation
from .state import EstimatorState, InputFrame

GRAVITY = 9.81  # m/s^2, world z-up

__all__ = [
    "GRAVITY",
    "CentroidAccel",
    "linear_acceleration",
    "angular_acceleration",
    "accelerations",
    "integrate_kinematics",
    "state_transition",
]


@dataclass
class CentroidAccel:
    """Linear and angular acceleration of the centroid, local frame."""

    linear: np.ndarray
    angular: np.ndarray


def linear_acceleration(x: EstimatorState, u: InputFrame) -> np.ndarray:
    """Local linear acceleration from the force balance at the centroid.

    Sums the residual force, the estimated external force and every contact
    force rotated into the centroid frame, divides by the mass, and removes
    gravity as seen from the body.
    """
    total = u.force_residual + x.ext_force
    for c in x.contacts:
        ci = u.contacts[c.contact_id]
        total = total + ci.rotation.matrix @ c.force
    return total / u.mass - GRAVITY * x.rot.matrix[2, :]


def contact_torque(x: EstimatorState, u: InputFrame) -> np.ndarray:
    """Total contact torque about the centroid, centroid frame."""
    total = np.zeros(3)
    for c in x.contacts:
        ci = u.contacts[c.contact_id]
        Rc = ci.rotation.matrix
        total = total + Rc @ c.torque + np.cross(ci.position, Rc @ c.force)
    return total


def angular_acceleration(x: EstimatorState, u: InputFrame) -> np.ndarray:
    """Local angular acceleration from the momentum balance at the centroid."""
    w = x.angvel_local
    rhs = (
        u.torque_residual
        + contact_torque(x, u)
        + x.ext_torque
        - u.inertia_dot @ w
        - u.momentum_dot
        - np.cross(w, u.inertia @ w + u.momentum)
    )
    return np.linalg.solve(u.inertia, rhs)


def accelerations(x: EstimatorState, u: InputFrame) -> CentroidAccel:
    return CentroidAccel(linear_acceleration(x, u), angular_acceleration(x, u))


def integrate_kinematics(
    x: EstimatorState, accel: CentroidAccel, dt: float
) -> tuple[np.ndarray, Rotation, np.ndarray, np.ndarray]:
    """One discrete step of the centroid kinematics under constant local
    accelerations.

    Local-frame position integration picks up transport terms from the
    rotating frame (including the second-order centripetal term); the
    orientation advances by the exponential of the integrated angular rate.
    Returns (pos_local, rot, vel_local, angvel_local).
    """
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    p, v, w = x.pos_local, x.vel_local, x.angvel_local
    a, wd = accel.linear, accel.angular
    wxp = np.cross(w, p)
    p_new = (
        p
        - dt * wxp
        + (0.5 * dt * dt) * (np.cross(w, wxp) - np.cross(wd, p))
        + dt * v
        - (dt * dt) * np.cross(w, v)
        + (0.5 * dt * dt) * a
    )
    rot_new = x.rot @ Rotation.exp(dt * w + (0.5 * dt * dt) * wd)
    v_new = v + dt * (a - np.cross(w, v))
    w_new = w + dt * wd
    return p_new, rot_new, v_new, w_new


def state_transition(x: EstimatorState, u: InputFrame, dt: float) -> EstimatorState:
    """Discrete state transition.

    Centroid kinematics integrate the Newton-Euler accelerations evaluated
    on the current state; gyro biases, external wrench and contact rest
    poses follow constant models.  Contact wrench states are then recomputed
    from the visco-elastic model at the *predicted* kinematics: the wrench
    depends only on the state it belongs to, not on the previous one.
    """
    acc = accelerations(x, u)
    p, rot, v, w = integrate_kinematics(x, acc, dt)
    x_new = EstimatorState(
        p, rot, v, w,
        x.gyro_biases, x.ext_force, x.ext_torque,
        [c.copy() for c in x.contacts],
    )
    for c in x_new.contacts:
        ci = u.contacts[c.contact_id]
        kin = contact_world_kinematics(x_new, ci)
        d = discrepancy(kin, c.rest_position, c.rest_orientation)
        c.force, c.torque = viscoelastic_wrench(d, kin.rotation, ci.flex)
    return x_new
