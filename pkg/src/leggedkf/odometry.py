"""Contact lifecycle for the estimator.

Contacts are detected by thresholding the measured force norm against a
fraction of the robot's weight.  A newly detected contact needs an initial
rest-pose guess: forward kinematics gives the current contact pose, and the
measured wrench is inverted through the spring-damper law to place the rest
frame where the material would be undeformed.  Odometry modes then post-
process that guess (6d keeps it, planar pins the height, reference mode
replaces it with the planner pose).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .contact import StiffnessDamping, contact_world_kinematics
from .dynamics import GRAVITY
from .so3 import Rotation
from .state import ContactInput, EstimatorState

__all__ = [
    "OdometryMode",
    "detect_contacts",
    "init_rest_pose_6d",
    "apply_mode",
    "ContactTracker",
]


class OdometryMode(Enum):
    SIX_D = "6d"
    PLANAR = "planar"
    NONE = "none"

    @classmethod
    def parse(cls, text: str) -> "OdometryMode":
        for mode in cls:
            if mode.value == text.lower():
                return mode
        raise ValueError(f"unknown odometry mode {text!r} (expected 6d, planar or none)")


def detect_contacts(
    force_norms: Mapping[int, float],
    mass: float,
    fraction: float,
    g0: float = GRAVITY,
) -> set:
    """Contacts whose measured force norm reaches ``fraction`` of the weight.

    Pure threshold on the instantaneous norm, no hysteresis; forces below
    the threshold are meant to be routed into the residual-wrench input.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"threshold fraction must be in (0, 1), got {fraction}")
    threshold = fraction * mass * g0
    return {cid for cid, norm in force_norms.items() if norm >= threshold}


def init_rest_pose_6d(
    x: EstimatorState,
    contact_input: ContactInput,
    measured_force,
    measured_torque,
    flex: Optional[StiffnessDamping] = None,
) -> tuple[np.ndarray, Rotation]:
    """Creation-time rest-pose guess from the measured wrench.

    The contact already carries load when detection fires, so the current
    contact pose is not the undeformed pose: the measured force maps back
    through the linear stiffness to a position offset, and the measured
    torque through the angular stiffness to the sine-scaled rotation offset
    (angle recovered by arcsin, valid for deformations below 90 degrees and
    clamped for robustness).  Point contacts skip the orientation step.
    """
    flex = flex if flex is not None else contact_input.flex
    if np.any(flex.linear_stiffness <= 0.0):
        raise ValueError("rest-pose initialization requires nonzero linear stiffness")
    measured_force = np.asarray(measured_force, dtype=float)
    measured_torque = np.asarray(measured_torque, dtype=float)

    kin = contact_world_kinematics(x, contact_input)
    Rc = kin.rotation.matrix
    rest_pos = kin.position + Rc @ (
        (measured_force + Rc.T @ (flex.linear_damping * kin.velocity)) / flex.linear_stiffness
    )

    if flex.is_point_contact:
        return rest_pos, kin.rotation

    vec_d = -2.0 * Rc @ (
        (measured_torque + Rc.T @ (flex.angular_damping * kin.angular_velocity))
        / flex.angular_stiffness
    )
    norm_d = float(np.linalg.norm(vec_d))
    if norm_d < 1e-12:
        return rest_pos, kin.rotation
    angle = float(np.arcsin(np.clip(norm_d / 2.0, -1.0, 1.0)))
    offset = Rotation.exp(angle * vec_d / norm_d)
    rest_rot = offset.inverse() @ kin.rotation
    return rest_pos, rest_rot


def apply_mode(
    rest_pos,
    rest_rot: Rotation,
    mode: OdometryMode,
    ground_height: float = 0.0,
    reference: Optional[tuple] = None,
) -> tuple[np.ndarray, Rotation]:
    """Post-process a rest-pose guess according to the odometry mode."""
    rest_pos = np.asarray(rest_pos, dtype=float)
    if mode is OdometryMode.SIX_D:
        return rest_pos, rest_rot
    if mode is OdometryMode.PLANAR:
        out = rest_pos.copy()
        out[2] = ground_height
        return out, rest_rot
    if mode is OdometryMode.NONE:
        if reference is None:
            raise ValueError("reference odometry mode requires a planner rest pose")
        ref_pos, ref_rot = reference
        return np.asarray(ref_pos, dtype=float).copy(), ref_rot
    raise ValueError(f"unhandled mode {mode}")


@dataclass
class ContactTracker:
    """Make/break bookkeeping with optional break hysteresis.

    A contact becomes active when its force norm reaches the make threshold
    (``fraction`` of the weight) and, with hysteresis on, breaks only when
    the norm falls below ``break_ratio`` times that threshold, suppressing
    chatter around the detection level.
    """

    mass: float
    fraction: float = 0.10
    g0: float = GRAVITY
    hysteresis: bool = True
    break_ratio: float = 0.8
    active: set = field(default_factory=set)

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"threshold fraction must be in (0, 1), got {self.fraction}")
        if not 0.0 < self.break_ratio <= 1.0:
            raise ValueError(f"break ratio must be in (0, 1], got {self.break_ratio}")

    def update(self, force_norms: Mapping[int, float]) -> tuple[set, set, set]:
        """Process one tick of force norms; returns (active, made, broken).

        Effectors absent from ``force_norms`` are treated as reading zero.
        """
        make = self.fraction * self.mass * self.g0
        keep = make * self.break_ratio if self.hysteresis else make
        made, broken = set(), set()
        for cid, norm in force_norms.items():
            if cid in self.active:
                if norm < keep:
                    broken.add(cid)
            elif norm >= make:
                made.add(cid)
        for cid in self.active - set(force_norms):
            broken.add(cid)
        self.active = (self.active | made) - broken
        return set(self.active), made, broken
