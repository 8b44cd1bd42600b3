"""Visco-elastic contact model.

A contact is a spring-damper between its rest frame (the pose the contact
material would occupy with zero deformation, fixed in the world) and its
current frame (obtained by forward kinematics from the centroid state).
The pose/velocity discrepancy between the two generates the reaction
wrench, expressed in the contact frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .so3 import Rotation, vec

if TYPE_CHECKING:  # pragma: no cover
    from .state import ContactInput, EstimatorState

__all__ = [
    "StiffnessDamping",
    "ContactKinematics",
    "Discrepancy",
    "contact_world_kinematics",
    "discrepancy",
    "viscoelastic_wrench",
]


def _diag3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        arr = np.full(3, float(arr))
    if arr.shape == (3, 3):
        if np.abs(arr - np.diag(np.diag(arr))).max() > 0.0:
            raise ValueError(f"{name} must be diagonal")
        arr = np.diag(arr).copy()
    if arr.shape != (3,):
        raise ValueError(f"{name}: expected scalar, 3-vector or diagonal 3x3")
    if np.any(arr < 0.0):
        raise ValueError(f"{name} entries must be non-negative")
    return arr


@dataclass
class StiffnessDamping:
    """Diagonal contact flexibility: linear/angular stiffness and damping.

    Units: N/m, N s/m, N m/rad, N m s/rad.  Zero angular stiffness and
    damping model a point contact (no reaction torque).
    """

    linear_stiffness: np.ndarray = field(default_factory=lambda: np.full(3, 3e5))
    linear_damping: np.ndarray = field(default_factory=lambda: np.full(3, 150.0))
    angular_stiffness: np.ndarray = field(default_factory=lambda: np.full(3, 1000.0))
    angular_damping: np.ndarray = field(default_factory=lambda: np.full(3, 17.0))

    def __post_init__(self):
        self.linear_stiffness = _diag3(self.linear_stiffness, "linear_stiffness")
        self.linear_damping = _diag3(self.linear_damping, "linear_damping")
        self.angular_stiffness = _diag3(self.angular_stiffness, "angular_stiffness")
        self.angular_damping = _diag3(self.angular_damping, "angular_damping")

    @classmethod
    def default(cls) -> "StiffnessDamping":
        """Stiff flat-foot sole (the values used throughout the test scenarios)."""
        return cls()

    @classmethod
    def soft(cls) -> "StiffnessDamping":
        """More compliant sole variant."""
        return cls(np.full(3, 4e4), np.full(3, 65.0), np.full(3, 720.0), np.full(3, 17.0))

    @classmethod
    def point_contact(cls, linear_stiffness=3e5, linear_damping=150.0) -> "StiffnessDamping":
        return cls(_diag3(linear_stiffness, "k"), _diag3(linear_damping, "d"), np.zeros(3), np.zeros(3))

    @property
    def is_point_contact(self) -> bool:
        return not self.angular_stiffness.any()

    def scaled(self, factor: float) -> "StiffnessDamping":
        return StiffnessDamping(
            factor * self.linear_stiffness,
            factor * self.linear_damping,
            factor * self.angular_stiffness,
            factor * self.angular_damping,
        )


@dataclass
class ContactKinematics:
    """World-frame pose and velocity of a contact frame."""

    position: np.ndarray
    rotation: Rotation
    velocity: np.ndarray
    angular_velocity: np.ndarray


@dataclass
class Discrepancy:
    """Deviation of the contact frame from its rest frame (world frame).

    The rest frame has zero linear and angular velocity (no-slip), so the
    velocity parts are the contact-frame velocities themselves.
    """

    lin_offset: np.ndarray
    lin_velocity: np.ndarray
    rot_offset: Rotation
    ang_velocity: np.ndarray


def contact_world_kinematics(x: "EstimatorState", ci: "ContactInput") -> ContactKinematics:
    """Forward kinematics of a contact from the centroid state.

    ``ci`` holds the contact pose and velocity in the centroid frame (what
    joint encoders provide); the result is in the world frame.
    """
    R = x.rot.matrix
    pos = R @ (ci.position + x.pos_local)
    rot = x.rot @ ci.rotation
    velocity = R @ (ci.velocity + np.cross(x.angvel_local, ci.position) + x.vel_local)
    angular_velocity = R @ (ci.angular_velocity + x.angvel_local)
    return ContactKinematics(pos, rot, velocity, angular_velocity)


def discrepancy(kin: ContactKinematics, rest_position, rest_orientation: Rotation) -> Discrepancy:
    """Deviation between current contact kinematics and the (static) rest pose."""
    return Discrepancy(
        lin_offset=kin.position - np.asarray(rest_position, dtype=float),
        lin_velocity=kin.velocity,
        rot_offset=kin.rotation @ rest_orientation.inverse(),
        ang_velocity=kin.angular_velocity,
    )


def viscoelastic_wrench(
    d: Discrepancy, contact_rotation: Rotation, flex: StiffnessDamping
) -> tuple[np.ndarray, np.ndarray]:
    """Reaction wrench of the spring-damper contact, in the contact frame.

    The angular spring acts on ``vec(Rt - Rt^T)/2``, which equals
    ``sin(theta)/theta`` times the rotation vector of the offset ``Rt``; a
    point contact (zero angular stiffness and damping) yields zero torque.
    """
    Rc = contact_rotation.matrix
    force = -Rc.T @ (flex.linear_stiffness * d.lin_offset + flex.linear_damping * d.lin_velocity)
    m = d.rot_offset.matrix
    half_vec = 0.5 * vec(m - m.T, tol=np.inf)
    torque = -Rc.T @ (flex.angular_stiffness * half_vec + flex.angular_damping * d.ang_velocity)
    return force, torque
