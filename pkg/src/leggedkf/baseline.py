"""Baseline legged odometry: contact-anchored dead reckoning.

The comparison method for the filter.  Each detected contact is frozen as a
world-frame anchor at creation; between creations the base pose is rebuilt
from the anchors by forward kinematics, fusing multiple contacts with
force-norm weights.  Orientation uses foot contacts only and keeps just the
yaw part, with roll/pitch replaced by an externally supplied tilt (here the
filter's own tilt, to make the comparison fair).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .so3 import Rotation, interpolate, replace_tilt

__all__ = [
    "ContactAnchor",
    "baseline_position",
    "baseline_orientation",
    "baseline_planar",
    "BaselineOdometry",
]


@dataclass
class ContactAnchor:
    """World-frame reference pose captured when a contact is created."""

    contact_id: int
    position: np.ndarray
    rotation: Rotation
    is_foot: bool = True


def baseline_position(
    anchors: Mapping[int, ContactAnchor],
    offsets: Mapping[int, np.ndarray],
    force_norms: Mapping[int, float],
    base_pos: np.ndarray,
    base_rot: Rotation,
) -> np.ndarray:
    """Force-weighted average of per-contact base position estimates.

    Each anchor predicts the base at its reference position minus the
    current forward-kinematics offset (``offsets[cid]`` is the contact
    position in the base frame).  Raises if no anchor carries force.
    """
    total = 0.0
    accum = np.zeros(3)
    R = base_rot.matrix
    for cid, anchor in anchors.items():
        weight = float(force_norms.get(cid, 0.0))
        if weight <= 0.0:
            continue
        contact_from_base = base_pos + R @ offsets[cid]
        estimate = anchor.position + (base_pos - contact_from_base)
        accum += weight * estimate
        total += weight
    if total <= 0.0:
        raise ValueError("no loaded anchor to estimate the base position from")
    return accum / total


def baseline_orientation(
    anchors: Mapping[int, ContactAnchor],
    rot_offsets: Mapping[int, Rotation],
    force_norms: Mapping[int, float],
    base_rot: Rotation,
    tilt_source: Optional[Rotation] = None,
) -> Rotation:
    """Base orientation from foot anchors, force-weighted, tilt-corrected.

    Per-anchor estimates ``R_ref (R_b R_off)^T R_b`` are fused pairwise on
    the geodesic with weights proportional to the force norms; more than two
    anchors fold left with cumulative weights.  If a tilt source is given,
    its roll/pitch replaces the fused estimate's while the yaw is kept.
    """
    candidates = []
    for cid, anchor in anchors.items():
        if not anchor.is_foot:
            continue
        weight = float(force_norms.get(cid, 0.0))
        if weight <= 0.0:
            continue
        contact_rot = base_rot @ rot_offsets[cid]
        estimate = anchor.rotation @ contact_rot.inverse() @ base_rot
        candidates.append((weight, estimate))
    if not candidates:
        raise ValueError("no loaded foot anchor to estimate the base orientation from")
    cumulative, fused = candidates[0]
    for weight, estimate in candidates[1:]:
        rho = weight / (cumulative + weight)
        fused = interpolate(fused, estimate, rho)
        cumulative += weight
    if tilt_source is not None:
        fused = replace_tilt(fused, tilt_source)
    return fused


def baseline_planar(position, ground_height: float = 0.0) -> np.ndarray:
    """Pin the height of an anchor (planar variant), identity elsewhere."""
    out = np.asarray(position, dtype=float).copy()
    out[2] = ground_height
    return out


class BaselineOdometry:
    """Stateful dead-reckoning runner around the pure fusion functions."""

    def __init__(
        self,
        initial_position,
        initial_rotation: Rotation,
        planar: bool = False,
        ground_height: float = 0.0,
    ):
        self.position = np.asarray(initial_position, dtype=float).copy()
        self.rotation = initial_rotation
        self.planar = planar
        self.ground_height = ground_height
        self.anchors: dict[int, ContactAnchor] = {}

    def contact_made(self, cid: int, offset, rot_offset: Rotation, is_foot: bool = True):
        """Freeze an anchor at the contact's pose under the current estimate."""
        pos = self.position + self.rotation.matrix @ np.asarray(offset, dtype=float)
        if self.planar:
            pos = baseline_planar(pos, self.ground_height)
        self.anchors[cid] = ContactAnchor(cid, pos, self.rotation @ rot_offset, is_foot)

    def contact_broken(self, cid: int):
        self.anchors.pop(cid, None)

    def update(
        self,
        offsets: Mapping[int, np.ndarray],
        rot_offsets: Mapping[int, Rotation],
        force_norms: Mapping[int, float],
        tilt_source: Optional[Rotation] = None,
    ) -> tuple[np.ndarray, Rotation]:
        """One tick: refresh orientation then position from the anchors.

        With no loaded anchors the previous estimate is held.
        """
        foot_loaded = any(
            a.is_foot and force_norms.get(cid, 0.0) > 0.0 for cid, a in self.anchors.items()
        )
        if foot_loaded:
            self.rotation = baseline_orientation(
                self.anchors, rot_offsets, force_norms, self.rotation, tilt_source
            )
        loaded = any(force_norms.get(cid, 0.0) > 0.0 for cid in self.anchors)
        if loaded:
            self.position = baseline_position(
                self.anchors, offsets, force_norms, self.position, self.rotation
            )
        return self.position.copy(), self.rotation
