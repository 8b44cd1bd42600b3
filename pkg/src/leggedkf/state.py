"""Dynamic-size state, input and measurement containers.

The estimator state lives on a product group mixing R^3 blocks with SO(3)
blocks; its tangent space is indexed in a fixed order (centroid pose,
velocities, per-IMU gyro biases, external wrench, then per-contact blocks
sorted by contact id).  :class:`StateLayout` owns that index map,
:func:`boxplus`/:func:`boxminus` are the group retraction and its inverse,
and :func:`add_contact`/:func:`remove_contact` grow and shrink state and
covariance together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .noise import NoiseConfig
from .so3 import Rotation


def _arr3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(3).copy()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components: {arr}")
    return arr


# --------------------------------------------------------------------------
# layout / tangent indexing


class ContactSlices(NamedTuple):
    rest_pos: slice
    rest_ori: slice
    force: slice
    torque: slice


class StateLayout:
    """Tangent-space index map for a given (IMU count, contact-id set)."""

    def __init__(self, n_imus: int, contact_ids: Sequence[int]):
        ids = tuple(contact_ids)
        if list(ids) != sorted(set(ids)):
            raise ValueError(f"contact ids must be unique and ascending, got {ids}")
        self.n_imus = int(n_imus)
        self.contact_ids = ids
        self.pos = slice(0, 3)
        self.ori = slice(3, 6)
        self.vel = slice(6, 9)
        self.angvel = slice(9, 12)
        self.bias = tuple(slice(12 + 3 * j, 15 + 3 * j) for j in range(self.n_imus))
        off = 12 + 3 * self.n_imus
        self.ext_force = slice(off, off + 3)
        self.ext_torque = slice(off + 3, off + 6)
        off += 6
        self.contact: dict[int, ContactSlices] = {}
        for cid in ids:
            self.contact[cid] = ContactSlices(
                slice(off, off + 3),
                slice(off + 3, off + 6),
                slice(off + 6, off + 9),
                slice(off + 9, off + 12),
            )
            off += 12
        self.dim = off
        self.measurement_dim = 6 * self.n_imus + 6 * len(ids)

    @staticmethod
    @lru_cache(maxsize=None)
    def of(n_imus: int, contact_ids: tuple) -> "StateLayout":
        return StateLayout(n_imus, contact_ids)

    def key(self) -> tuple:
        return (self.n_imus, self.contact_ids)


# --------------------------------------------------------------------------
# state containers


@dataclass
class ContactState:
    """Rest pose (world frame) and wrench (contact frame) of one contact."""

    contact_id: int
    rest_position: np.ndarray
    rest_orientation: Rotation
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rest_position = _arr3(self.rest_position, "rest_position")
        self.force = _arr3(self.force, "force")
        self.torque = _arr3(self.torque, "torque")

    def copy(self) -> "ContactState":
        return ContactState(
            self.contact_id, self.rest_position, self.rest_orientation, self.force, self.torque
        )

    @classmethod
    def _unchecked(cls, contact_id, rest_position, rest_orientation, force, torque):
        # hot-path constructor: caller guarantees shapes/finiteness/ownership
        obj = object.__new__(cls)
        obj.contact_id = contact_id
        obj.rest_position = rest_position
        obj.rest_orientation = rest_orientation
        obj.force = force
        obj.torque = torque
        return obj


class EstimatorState:
    """Full estimator state.

    Parameters
    ----------
    pos_local:
        Centroid position in the world, expressed in the centroid frame
        (``R.T @ world_position``), meters.
    rot:
        Orientation of the centroid frame in the world.
    vel_local, angvel_local:
        World-frame velocities of the centroid expressed in the centroid
        frame, m/s and rad/s.
    gyro_biases:
        (n_imus, 3) additive rate biases, rad/s.
    ext_force, ext_torque:
        Unmodeled external wrench at the centroid, centroid frame, N / N m.
    contacts:
        Contact states; stored sorted by contact id.
    """

    __slots__ = (
        "pos_local", "rot", "vel_local", "angvel_local",
        "gyro_biases", "ext_force", "ext_torque", "contacts",
    )

    def __init__(
        self,
        pos_local,
        rot: Rotation,
        vel_local,
        angvel_local,
        gyro_biases,
        ext_force,
        ext_torque,
        contacts: Sequence[ContactState] = (),
    ):
        self.pos_local = _arr3(pos_local, "pos_local")
        self.rot = rot
        self.vel_local = _arr3(vel_local, "vel_local")
        self.angvel_local = _arr3(angvel_local, "angvel_local")
        self.gyro_biases = np.asarray(gyro_biases, dtype=float).reshape(-1, 3).copy()
        self.ext_force = _arr3(ext_force, "ext_force")
        self.ext_torque = _arr3(ext_torque, "ext_torque")
        contacts = sorted(contacts, key=lambda c: c.contact_id)
        ids = [c.contact_id for c in contacts]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate contact ids: {ids}")
        self.contacts = list(contacts)

    @classmethod
    def at_rest(cls, n_imus: int = 1, pos=(0.0, 0.0, 0.0), rot: Optional[Rotation] = None):
        """Zero-velocity state with no contacts, identity orientation by default."""
        return cls(
            pos, rot if rot is not None else Rotation.identity(),
            np.zeros(3), np.zeros(3), np.zeros((n_imus, 3)), np.zeros(3), np.zeros(3),
        )

    @classmethod
    def _unchecked(cls, pos_local, rot, vel_local, angvel_local, gyro_biases,
                   ext_force, ext_torque, contacts):
        # hot-path constructor: caller guarantees invariants and ownership
        obj = object.__new__(cls)
        obj.pos_local = pos_local
        obj.rot = rot
        obj.vel_local = vel_local
        obj.angvel_local = angvel_local
        obj.gyro_biases = gyro_biases
        obj.ext_force = ext_force
        obj.ext_torque = ext_torque
        obj.contacts = contacts
        return obj

    # --- structure ----------------------------------------------------------
    @property
    def n_imus(self) -> int:
        return self.gyro_biases.shape[0]

    @property
    def contact_ids(self) -> tuple:
        return tuple(c.contact_id for c in self.contacts)

    def layout(self) -> StateLayout:
        return StateLayout.of(self.n_imus, self.contact_ids)

    @property
    def tangent_dim(self) -> int:
        return self.layout().dim

    def contact(self, contact_id: int) -> ContactState:
        for c in self.contacts:
            if c.contact_id == contact_id:
                return c
        raise KeyError(f"no contact with id {contact_id}")

    @property
    def world_position(self) -> np.ndarray:
        """Centroid position in world coordinates, ``R @ pos_local``."""
        return self.rot.matrix @ self.pos_local

    def copy(self) -> "EstimatorState":
        return EstimatorState(
            self.pos_local, self.rot, self.vel_local, self.angvel_local,
            self.gyro_biases, self.ext_force, self.ext_torque,
            [c.copy() for c in self.contacts],
        )


# --------------------------------------------------------------------------
# inputs and measurements


@dataclass
class ContactInput:
    """Per-contact input: kinematics in the centroid frame plus the contact
    flexibility model; ``rest_pose_guess`` is supplied only on the creation
    step."""

    position: np.ndarray
    rotation: Rotation
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    flex: "StiffnessDamping | None" = None
    rest_pose_guess: Optional[tuple[np.ndarray, Rotation]] = None

    def __post_init__(self):
        self.position = _arr3(self.position, "contact position")
        self.velocity = _arr3(self.velocity, "contact velocity")
        self.angular_velocity = _arr3(self.angular_velocity, "contact angular velocity")
        if self.flex is None:
            from .contact import StiffnessDamping

            self.flex = StiffnessDamping.default()


@dataclass
class ImuInput:
    """IMU mounting kinematics in the centroid frame."""

    position: np.ndarray
    rotation: Rotation = field(default_factory=Rotation.identity)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = _arr3(self.position, "imu position")
        self.velocity = _arr3(self.velocity, "imu velocity")
        self.angular_velocity = _arr3(self.angular_velocity, "imu angular velocity")
        self.acceleration = _arr3(self.acceleration, "imu acceleration")


@dataclass
class InputFrame:
    """One tick of estimator inputs: whole-body dynamics quantities, the
    residual wrench from sensors not attributed to contacts, and the
    kinematics of every tracked contact and IMU."""

    mass: float
    inertia: np.ndarray
    inertia_dot: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    momentum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    momentum_dot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    force_residual: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque_residual: np.ndarray = field(default_factory=lambda: np.zeros(3))
    contacts: dict[int, ContactInput] = field(default_factory=dict)
    imus: list[ImuInput] = field(default_factory=list)
    validate: bool = True

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.inertia_dot = np.asarray(self.inertia_dot, dtype=float).reshape(3, 3)
        self.momentum = _arr3(self.momentum, "momentum")
        self.momentum_dot = _arr3(self.momentum_dot, "momentum_dot")
        self.force_residual = _arr3(self.force_residual, "force_residual")
        self.torque_residual = _arr3(self.torque_residual, "torque_residual")
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.validate:
            if np.abs(self.inertia - self.inertia.T).max() > 1e-9:
                raise ValueError("inertia matrix is not symmetric")
            if np.linalg.eigvalsh(self.inertia).min() <= 0.0:
                raise ValueError("inertia matrix is not positive definite")


@dataclass
class MeasurementFrame:
    """Per-tick sensor readings with presence flags.

    ``imus[j]`` is an (accel, gyro) pair or None when IMU j produced no
    sample this tick; ``wrenches[cid]`` is a (force, torque) pair in the
    contact frame, keyed by contact id.
    """

    imus: list[Optional[tuple[np.ndarray, np.ndarray]]] = field(default_factory=list)
    wrenches: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def dimension(self) -> int:
        n_imu = sum(1 for m in self.imus if m is not None)
        n_w = sum(1 for m in self.wrenches.values() if m is not None)
        return 6 * (n_imu + n_w)

    def stack(self, layout: StateLayout) -> tuple[np.ndarray, np.ndarray]:
        """Stacked measurement vector and presence mask over the full stack.

        Full-stack order: per IMU (accel, gyro), then per contact id
        ascending (force, torque).  The vector holds only present rows; the
        boolean mask has the full dimension ``layout.measurement_dim``.
        """
        if len(self.imus) != layout.n_imus:
            raise ValueError(f"expected {layout.n_imus} IMU entries, got {len(self.imus)}")
        unknown = set(self.wrenches) - set(layout.contact_ids)
        if unknown:
            raise ValueError(f"wrench measurements for unknown contacts: {sorted(unknown)}")
        mask = np.zeros(layout.measurement_dim, dtype=bool)
        rows = []
        off = 0
        for sample in self.imus:
            if sample is not None:
                accel, gyro = sample
                rows += [np.asarray(accel, dtype=float), np.asarray(gyro, dtype=float)]
                mask[off : off + 6] = True
            off += 6
        for cid in layout.contact_ids:
            sample = self.wrenches.get(cid)
            if sample is not None:
                force, torque = sample
                rows += [np.asarray(force, dtype=float), np.asarray(torque, dtype=float)]
                mask[off : off + 6] = True
            off += 6
        y = np.concatenate(rows) if rows else np.zeros(0)
        return y, mask


# --------------------------------------------------------------------------
# group operations


def boxplus(x: EstimatorState, delta) -> EstimatorState:
    """Apply a tangent increment: R^3 blocks add, rotation blocks right-
    multiply by the exponential of their sub-vector."""
    delta = np.asarray(delta, dtype=float)
    lay = x.layout()
    if delta.shape != (lay.dim,):
        raise ValueError(f"tangent dimension mismatch: state {lay.dim}, delta {delta.shape}")
    biases = x.gyro_biases.copy()
    for j in range(lay.n_imus):
        biases[j] += delta[lay.bias[j]]
    contacts = []
    for c in x.contacts:
        sl = lay.contact[c.contact_id]
        contacts.append(
            ContactState(
                c.contact_id,
                c.rest_position + delta[sl.rest_pos],
                c.rest_orientation @ Rotation.exp(delta[sl.rest_ori]),
                c.force + delta[sl.force],
                c.torque + delta[sl.torque],
            )
        )
    return EstimatorState(
        x.pos_local + delta[lay.pos],
        x.rot @ Rotation.exp(delta[lay.ori]),
        x.vel_local + delta[lay.vel],
        x.angvel_local + delta[lay.angvel],
        biases,
        x.ext_force + delta[lay.ext_force],
        x.ext_torque + delta[lay.ext_torque],
        contacts,
    )


def boxminus(x1: EstimatorState, x2: EstimatorState) -> np.ndarray:
    """Tangent difference such that ``boxplus(x2, boxminus(x1, x2)) == x1``.

    Rotation blocks use the right difference ``log(R2^T R1)``, matching the
    right-multiplicative convention of :func:`boxplus`.
    """
    lay = x1.layout()
    if x2.layout().key() != lay.key():
        raise ValueError("states have different structures")
    delta = np.empty(lay.dim)
    delta[lay.pos] = x1.pos_local - x2.pos_local
    delta[lay.ori] = (x2.rot.inverse() @ x1.rot).rotvec()
    delta[lay.vel] = x1.vel_local - x2.vel_local
    delta[lay.angvel] = x1.angvel_local - x2.angvel_local
    for j in range(lay.n_imus):
        delta[lay.bias[j]] = x1.gyro_biases[j] - x2.gyro_biases[j]
    delta[lay.ext_force] = x1.ext_force - x2.ext_force
    delta[lay.ext_torque] = x1.ext_torque - x2.ext_torque
    for c1, c2 in zip(x1.contacts, x2.contacts):
        sl = lay.contact[c1.contact_id]
        delta[sl.rest_pos] = c1.rest_position - c2.rest_position
        delta[sl.rest_ori] = (c2.rest_orientation.inverse() @ c1.rest_orientation).rotvec()
        delta[sl.force] = c1.force - c2.force
        delta[sl.torque] = c1.torque - c2.torque
    return delta


# --------------------------------------------------------------------------
# contact set edits (state + covariance together)


def _embedding_indices(old: StateLayout, new: StateLayout) -> np.ndarray:
    """New tangent indices of every old-layout symbol, in old order."""
    idx: list[np.ndarray] = []

    def block(sl_old: slice, sl_new: slice):
        idx.append(np.arange(sl_new.start, sl_new.stop))

    block(old.pos, new.pos)
    block(old.ori, new.ori)
    block(old.vel, new.vel)
    block(old.angvel, new.angvel)
    for j in range(old.n_imus):
        block(old.bias[j], new.bias[j])
    block(old.ext_force, new.ext_force)
    block(old.ext_torque, new.ext_torque)
    for cid in old.contact_ids:
        for sl_old, sl_new in zip(old.contact[cid], new.contact[cid]):
            block(sl_old, sl_new)
    return np.concatenate(idx) if idx else np.zeros(0, dtype=int)


def add_contact(
    x: EstimatorState,
    P: np.ndarray,
    contact_id: int,
    contact_input: ContactInput,
    init_diag: Optional[np.ndarray] = None,
    measured_wrench: Optional[tuple] = None,
) -> tuple[EstimatorState, np.ndarray]:
    """Append a contact to state and covariance.

    The rest pose comes from the contact input's creation-time guess.  The
    wrench block is seeded from ``measured_wrench`` when a collocated sensor
    reading exists, else zero.  The new 12x12 covariance block is diagonal
    (``init_diag``, default :meth:`NoiseConfig.contact_init_diag`) with zero
    cross-covariance.
    """
    if contact_id in x.contact_ids:
        raise ValueError(f"contact {contact_id} already present")
    if contact_input.rest_pose_guess is None:
        raise ValueError(f"contact {contact_id}: creation requires a rest-pose guess")
    if init_diag is None:
        init_diag = NoiseConfig.default().contact_init_diag()
    init_diag = np.asarray(init_diag, dtype=float).reshape(12)

    guess_pos, guess_rot = contact_input.rest_pose_guess
    if measured_wrench is not None:
        force, torque = measured_wrench
    else:
        force, torque = np.zeros(3), np.zeros(3)
    new_contact = ContactState(contact_id, guess_pos, guess_rot, force, torque)

    x_new = x.copy()
    x_new.contacts.append(new_contact)
    x_new.contacts.sort(key=lambda c: c.contact_id)

    old_lay, new_lay = x.layout(), x_new.layout()
    P_new = np.zeros((new_lay.dim, new_lay.dim))
    emb = _embedding_indices(old_lay, new_lay)
    P_new[np.ix_(emb, emb)] = P
    sl = new_lay.contact[contact_id]
    P_new[sl.rest_pos.start : sl.torque.stop, sl.rest_pos.start : sl.torque.stop] = np.diag(init_diag)
    return x_new, P_new


def remove_contact(
    x: EstimatorState, P: np.ndarray, contact_id: int
) -> tuple[EstimatorState, np.ndarray]:
    """Delete a contact's state block and its covariance rows/columns."""
    if contact_id not in x.contact_ids:
        raise ValueError(f"no contact with id {contact_id}")
    x_new = x.copy()
    x_new.contacts = [c for c in x_new.contacts if c.contact_id != contact_id]
    old_lay, new_lay = x.layout(), x_new.layout()
    keep = _embedding_indices(new_lay, old_lay)  # old indices of surviving symbols
    P_new = P[np.ix_(keep, keep)]
    return x_new, P_new
