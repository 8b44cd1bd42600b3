"""Synthetic ground truth: a single rigid body on spring-damper contacts.

The body (the full robot collapsed to its centroid) moves under gravity,
scripted massless limbs and the same visco-elastic contact law the
estimator models (optionally stiffness-scaled to create model mismatch).
Contacts anchor where the limb touches down and stay fixed in the world
until lift-off, scripted slippage displaces them.  The integrator is RK4 at
a tenth of the output step.  Sensor streams add Gaussian noise and an
injected gyro bias (offset plus random walk); input streams carry only
relative geometry, never the true world pose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .contact import StiffnessDamping
from .dynamics import GRAVITY
from .so3 import Rotation, split_yaw_tilt, yaw_rotation
from .state import ContactInput, ImuInput, InputFrame

__all__ = [
    "SensorNoise",
    "ImuMount",
    "EffectorScript",
    "SlipEvent",
    "WrenchWindow",
    "SimScenario",
    "TruthRecord",
    "SensorFrame",
    "SimResult",
    "SimulationUnstable",
    "simulate",
]


class SimulationUnstable(RuntimeError):
    """Raised when the integration blows up (energy runaway / non-finite)."""


@dataclass
class SensorNoise:
    """Standard deviations of the additive Gaussian sensor noise."""

    gyro: float = 1e-3
    accel: float = 1e-2
    force: float = 4.5
    torque: float = 1.2

    @classmethod
    def silent(cls) -> "SensorNoise":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass
class ImuMount:
    """Rigid IMU mounting in the body (centroid) frame."""

    position: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.3]))
    rotation: Rotation = field(default_factory=Rotation.identity)


def _const_vec(value):
    arr = np.asarray(value, dtype=float).reshape(3).copy()
    return lambda t: arr


def _zero_vec(t):
    return np.zeros(3)


@dataclass
class EffectorScript:
    """One limb end: scripted body-frame mount trajectory and contact windows.

    ``mount_pos``/``mount_vel`` give the contact point's position and
    velocity in the body frame (what joint encoders measure);
    ``scheduled_down`` is the gait's allowed-contact window.  Within it, an
    anchor engages when the foot reaches the ground and releases when its
    anchor-frame normal force goes clearly tensile (physical lift-off); the
    falling edge of the window always releases.
    """

    contact_id: int
    mount_pos: Callable[[float], np.ndarray]
    mount_vel: Callable[[float], np.ndarray] = _zero_vec
    mount_rot: Callable[[float], Rotation] = lambda t: Rotation.identity()
    mount_angvel: Callable[[float], np.ndarray] = _zero_vec
    scheduled_down: Callable[[float], bool] = lambda t: True
    flex: StiffnessDamping = field(default_factory=StiffnessDamping.default)
    is_foot: bool = True
    has_sensor: bool = True
    planned_pose: Optional[tuple] = None

    @classmethod
    def fixed(cls, contact_id: int, offset, **kw) -> "EffectorScript":
        return cls(contact_id, mount_pos=_const_vec(offset), **kw)


@dataclass
class SlipEvent:
    """Instantaneous displacement of a contact's true anchor.

    Targeting an inactive contact is an error unless ``require_active`` is
    cleared (gait builders clear it: a scheduled mid-stance slide may find
    its foot momentarily airborne after a bounce).
    """

    contact_id: int
    time: float
    displacement: np.ndarray
    require_active: bool = True

    def __post_init__(self):
        self.displacement = np.asarray(self.displacement, dtype=float).reshape(3)


@dataclass
class WrenchWindow:
    """External wrench applied to the body (centroid frame) over a window."""

    force: np.ndarray
    torque: np.ndarray
    start: float
    stop: float

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)


@dataclass
class SimScenario:
    mass: float
    inertia: np.ndarray
    effectors: list[EffectorScript]
    imus: list[ImuMount] = field(default_factory=lambda: [ImuMount()])
    noise: SensorNoise = field(default_factory=SensorNoise)
    gyro_bias_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias_walk_std: float = 0.0
    slip_events: list[SlipEvent] = field(default_factory=list)
    perturbations: list[WrenchWindow] = field(default_factory=list)
    seed: int = 0
    dt: float = 0.005
    duration: float = 10.0
    truth_flex_scale: float = 1.0
    initial_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_rotation: Rotation = field(default_factory=Rotation.identity)
    settle: bool = True
    # flat-ground world: new anchors rest on the ground plane, so a touchdown
    # under a sagged body starts preloaded instead of anchoring mid-bounce
    anchor_on_plane: bool = True
    ground_height: float = 0.0
    # emit substep-averaged sensor signals (anti-aliasing, like decimating
    # sensor pipelines); instantaneous sampling when off
    average_sensors: bool = True

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.gyro_bias_offset = np.asarray(self.gyro_bias_offset, dtype=float).reshape(3)
        self.initial_position = np.asarray(self.initial_position, dtype=float).reshape(3)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.duration < self.dt:
            raise ValueError("duration must cover at least one step")


@dataclass
class TruthRecord:
    t: float
    position: np.ndarray          # world
    rotation: Rotation
    vel_local: np.ndarray
    angvel_local: np.ndarray
    contacts: dict                # cid -> (rest_pos, rest_rot, force, torque)
    gyro_bias: np.ndarray         # (n_imus, 3)
    ext_force: np.ndarray         # centroid frame (applied perturbation)
    ext_torque: np.ndarray


@dataclass
class SensorFrame:
    """One tick of sensor readings.

    Signals are averaged over the integrator substeps of the preceding
    output interval (the first frame is instantaneous): like real decimated
    IMU/force-sensor pipelines, the average keeps the impulse content of
    contact transients that a point sample at the tick would alias away.
    """

    imus: list                    # [(accel, gyro)] per IMU
    wrenches: dict                # cid -> (force, torque), sensor-equipped effectors


@dataclass
class SimResult:
    scenario: SimScenario
    times: np.ndarray
    truth: list
    sensors: list
    inputs: list

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


# --------------------------------------------------------------------------
# truth-side physics


def _contact_wrench_world(p, R, v_l, w_l, mount_pos, mount_vel, mount_rot_m, mount_angvel,
                          anchor_pos, anchor_rot_m, flex: StiffnessDamping):
    """Spring-damper wrench: returns (force_world, torque_world, p_c)."""
    p_c = p + R @ mount_pos
    R_c = R @ mount_rot_m
    v_c = R @ (mount_vel + np.cross(w_l, mount_pos) + v_l)
    w_c = R @ (mount_angvel + w_l)
    offset = p_c - anchor_pos
    force_world = -(flex.linear_stiffness * offset + flex.linear_damping * v_c)
    rot_off = R_c @ anchor_rot_m.T
    half_vec = 0.5 * np.array(
        [rot_off[2, 1] - rot_off[1, 2], rot_off[0, 2] - rot_off[2, 0], rot_off[1, 0] - rot_off[0, 1]]
    )
    torque_world = -(flex.angular_stiffness * half_vec + flex.angular_damping * w_c)
    return force_world, torque_world, p_c


class _TruthEngine:
    """Holds scenario constants and evaluates the rigid-body derivative."""

    def __init__(self, scn: SimScenario):
        self.scn = scn
        self.inv_inertia = np.linalg.inv(scn.inertia)
        self.truth_flex = {
            e.contact_id: e.flex.scaled(scn.truth_flex_scale) for e in scn.effectors
        }

    def perturbation(self, t: float):
        force = np.zeros(3)
        torque = np.zeros(3)
        for w in self.scn.perturbations:
            if w.start <= t < w.stop:
                force += w.force
                torque += w.torque
        return force, torque

    def wrenches(self, t, p, R, v_l, w_l, anchors, mounts):
        """Per-active-contact world wrench and application point."""
        out = {}
        for cid, (anchor_pos, anchor_rot_m) in anchors.items():
            mp, mv, mr, mw = mounts[cid]
            out[cid] = _contact_wrench_world(
                p, R, v_l, w_l, mp, mv, mr, mw, anchor_pos, anchor_rot_m, self.truth_flex[cid]
            )
        return out

    def accelerations(self, t, p, R, v_l, w_l, anchors, mounts):
        """Local accelerations; mirrors the estimator's force balance."""
        scn = self.scn
        pert_f, pert_t = self.perturbation(t)
        force_w = np.zeros(3)
        torque_cent = pert_t.copy()
        for cid, (fw, tw, p_c) in self.wrenches(t, p, R, v_l, w_l, anchors, mounts).items():
            force_w += fw
            arm = R.T @ (p_c - p)
            torque_cent += R.T @ tw + np.cross(arm, R.T @ fw)
        a_l = (R.T @ force_w + pert_f) / scn.mass - GRAVITY * R[2, :]
        wd_l = self.inv_inertia @ (torque_cent - np.cross(w_l, scn.inertia @ w_l))
        return a_l, wd_l

    def derivative(self, t, y, anchors, mounts):
        p = y[0:3]
        q = y[3:7]
        q = q / np.linalg.norm(q)
        v_l = y[7:10]
        w_l = y[10:13]
        R = _quat_matrix(q)
        a_l, wd_l = self.accelerations(t, p, R, v_l, w_l, anchors, mounts)
        dp = R @ v_l
        dq = 0.5 * _quat_mul_vec(q, w_l)
        dv = -np.cross(w_l, v_l) + a_l
        return np.concatenate([dp, dq, dv, wd_l])


def _quat_matrix(q):
    w, x, y, z = q
    return np.array(
        (
            (1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)),
            (2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)),
            (2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)),
        )
    )


def _quat_mul_vec(q, w):
    """Quaternion product q * (0, w) for the body-rate kinematics."""
    qw, qx, qy, qz = q
    wx, wy, wz = w
    return np.array(
        (
            -qx * wx - qy * wy - qz * wz,
            qw * wx + qy * wz - qz * wy,
            qw * wy - qx * wz + qz * wx,
            qw * wz + qx * wy - qy * wx,
        )
    )


def solve_static_pose(scn: SimScenario, anchors, mounts) -> tuple[np.ndarray, Rotation]:
    """Newton-solve the body pose where springs exactly balance gravity."""
    engine = _TruthEngine(scn)
    p0 = scn.initial_position.copy()
    R0 = scn.initial_rotation

    def residual(xi):
        p = p0 + xi[0:3]
        rot = Rotation.exp(xi[3:6]) @ R0
        R = rot.matrix
        force_w = np.array([0.0, 0.0, -scn.mass * GRAVITY])
        torque_w = np.zeros(3)
        for cid, (fw, tw, p_c) in engine.wrenches(0.0, p, R, np.zeros(3), np.zeros(3), anchors, mounts).items():
            force_w += fw
            torque_w += tw + np.cross(p_c - p, fw)
        return np.concatenate([force_w, torque_w])

    xi = np.zeros(6)
    for _ in range(60):
        r = residual(xi)
        if np.linalg.norm(r) < 1e-9:
            break
        J = np.empty((6, 6))
        h = 1e-7
        for c in range(6):
            dxi = xi.copy()
            dxi[c] += h
            J[:, c] = (residual(dxi) - r) / h
        xi = xi - np.linalg.solve(J, r)
    else:
        raise SimulationUnstable("static equilibrium solve did not converge")
    return p0 + xi[0:3], Rotation.exp(xi[3:6]) @ R0


# --------------------------------------------------------------------------
# main loop


def simulate(scenario: SimScenario) -> SimResult:
    """Run the scenario; returns aligned truth, sensor and input streams.

    ``sensors[k]`` and ``inputs[k]`` are sampled at ``times[k]``; there are
    ``n_steps + 1`` samples of each.  Identical scenarios (same seed)
    produce bit-identical streams.
    """
    scn = scenario
    engine = _TruthEngine(scn)
    rng = np.random.default_rng(scn.seed)
    n_steps = int(round(scn.duration / scn.dt))
    times = np.arange(n_steps + 1) * scn.dt
    slip_queue = sorted(scn.slip_events, key=lambda e: e.time)
    slip_idx = 0

    effectors = scn.effectors
    mounts_at = _mount_sampler(effectors)

    # initial contacts and pose
    anchors: dict[int, tuple] = {}
    was_down = {e.contact_id: False for e in effectors}
    mounts0 = mounts_at(0.0)
    p = scn.initial_position.copy()
    rot = scn.initial_rotation

    def _anchor_pose(body_pos, R, mount_pos, mount_rot_m):
        pos = body_pos + R @ mount_pos
        rot = R @ mount_rot_m
        if scn.anchor_on_plane:
            pos = pos.copy()
            pos[2] = scn.ground_height
            # the sole conforms to the flat ground: level rest orientation,
            # keeping only the foot's heading
            psi, _ = split_yaw_tilt(Rotation.from_matrix(rot))
            rot = yaw_rotation(psi).matrix
        return pos, rot

    for e in effectors:
        if e.scheduled_down(0.0):
            mp, _, mr, _ = mounts0[e.contact_id]
            foot = p + rot.matrix @ mp
            if not scn.anchor_on_plane or foot[2] <= scn.ground_height + 1e-9:
                anchors[e.contact_id] = _anchor_pose(p, rot.matrix, mp, mr)
            was_down[e.contact_id] = True
    if scn.settle and anchors:
        p, rot = solve_static_pose(scn, anchors, mounts0)

    q = rot.quat
    y = np.concatenate([p, q, np.zeros(3), np.zeros(3)])
    bias = np.tile(scn.gyro_bias_offset, (len(scn.imus), 1))

    truth: list[TruthRecord] = []
    sensors: list[SensorFrame] = []
    inputs: list[InputFrame] = []

    h = scn.dt / 10.0
    weight_scale = scn.mass * GRAVITY

    for k in range(n_steps + 1):
        t = float(times[k])
        mounts = mounts_at(t)

        # contact schedule edges; with plane anchoring a scheduled-down foot
        # engages only while it penetrates the ground (unilateral contact)
        R_now = _quat_matrix(y[3:7] / np.linalg.norm(y[3:7]))
        for e in effectors:
            cid = e.contact_id
            down = bool(e.scheduled_down(t))
            if down and cid not in anchors:
                mp, mv, mr, _ = mounts[cid]
                foot = y[0:3] + R_now @ mp
                if not scn.anchor_on_plane:
                    if not was_down[cid]:
                        anchors[cid] = (foot, R_now @ mr)
                else:
                    foot_w_vel = R_now @ (mv + np.cross(y[10:13], mp) + y[7:10])
                    if foot[2] <= scn.ground_height + 1e-12 and foot_w_vel[2] <= 1e-12:
                        anchors[cid] = _anchor_pose(y[0:3], R_now, mp, mr)
            elif not down and was_down[cid]:
                anchors.pop(cid, None)
            was_down[cid] = down

        # scripted slippage (instantaneous anchor displacement)
        while slip_idx < len(slip_queue) and slip_queue[slip_idx].time <= t + 1e-12:
            ev = slip_queue[slip_idx]
            slip_idx += 1
            if ev.contact_id not in anchors:
                if ev.require_active:
                    raise ValueError(
                        f"slip event at t={ev.time:.3f}s targets inactive contact {ev.contact_id}"
                    )
                continue
            pos, rm = anchors[ev.contact_id]
            anchors[ev.contact_id] = (pos + ev.displacement, rm)

        # emit streams at t
        q = y[3:7] / np.linalg.norm(y[3:7])
        R = _quat_matrix(q)
        p = y[0:3]
        v_l, w_l = y[7:10], y[10:13]
        rot = Rotation(q)
        if not np.all(np.isfinite(y)) or np.linalg.norm(v_l) > 1e3:
            raise SimulationUnstable(f"integration diverged at step {k} (t={t:.3f}s)")

        wr = engine.wrenches(t, p, R, v_l, w_l, anchors, mounts)
        a_l, wd_l = engine.accelerations(t, p, R, v_l, w_l, anchors, mounts)
        pert_f, pert_t = engine.perturbation(t)

        contacts_rec = {}
        for cid, (anchor_pos, anchor_rot_m) in anchors.items():
            fw, tw, _ = wr[cid]
            mr = mounts[cid][2]
            Rc = R @ mr
            contacts_rec[cid] = (
                anchor_pos.copy(),
                Rotation.from_matrix(anchor_rot_m),
                Rc.T @ fw,
                Rc.T @ tw,
            )
        truth.append(
            TruthRecord(t, p.copy(), rot, v_l.copy(), w_l.copy(), contacts_rec,
                        bias.copy(), pert_f, pert_t)
        )

        if k == 0 or not scn.average_sensors:
            imu_ideal = [
                _imu_ideal(imu, R, w_l, wd_l, a_l) for imu in scn.imus
            ]
            wrench_ideal = {
                e.contact_id: contacts_rec.get(e.contact_id, (None, None, np.zeros(3), np.zeros(3)))[2:4]
                for e in effectors if e.has_sensor
            }
        else:
            imu_ideal = [(acc / 10.0, gyr / 10.0) for acc, gyr in accum_imu]
            wrench_ideal = {cid: (f / 10.0, tq / 10.0) for cid, (f, tq) in accum_wrench.items()}

        imu_frames = []
        for j in range(len(scn.imus)):
            accel_ideal, gyro_ideal = imu_ideal[j]
            accel = accel_ideal + rng.normal(scale=scn.noise.accel, size=3)
            gyro = gyro_ideal + bias[j] + rng.normal(scale=scn.noise.gyro, size=3)
            imu_frames.append((accel, gyro))
        wrench_frames = {}
        for e in effectors:
            if not e.has_sensor:
                continue
            cf, ct = wrench_ideal[e.contact_id]
            wrench_frames[e.contact_id] = (
                cf + rng.normal(scale=scn.noise.force, size=3),
                ct + rng.normal(scale=scn.noise.torque, size=3),
            )
        sensors.append(SensorFrame(imu_frames, wrench_frames))

        contact_inputs = {}
        for e in effectors:
            mp, mv, mr, mw = mounts[e.contact_id]
            contact_inputs[e.contact_id] = ContactInput(
                position=mp, rotation=Rotation.from_matrix(mr), velocity=mv,
                angular_velocity=mw, flex=e.flex,
            )
        inputs.append(
            InputFrame(
                mass=scn.mass, inertia=scn.inertia,
                contacts=contact_inputs,
                imus=[ImuInput(position=imu.position, rotation=imu.rotation) for imu in scn.imus],
                validate=False,
            )
        )

        # gyro bias random walk advances between samples
        if scn.gyro_bias_walk_std > 0.0:
            bias = bias + rng.normal(scale=scn.gyro_bias_walk_std, size=bias.shape)

        if k == n_steps:
            break

        # integrate to t + dt with RK4 substeps; lift-off checks and sensor
        # accumulation at every substep boundary
        accum_imu = [(np.zeros(3), np.zeros(3)) for _ in scn.imus]
        accum_wrench = {e.contact_id: (np.zeros(3), np.zeros(3)) for e in effectors if e.has_sensor}
        for s in range(10):
            ts = t + s * h
            m1 = mounts_at(ts)
            m2 = mounts_at(ts + 0.5 * h)
            m3 = mounts_at(ts + h)
            k1 = engine.derivative(ts, y, anchors, m1)
            k2 = engine.derivative(ts + 0.5 * h, y + 0.5 * h * k1, anchors, m2)
            k3 = engine.derivative(ts + 0.5 * h, y + 0.5 * h * k2, anchors, m2)
            k4 = engine.derivative(ts + h, y + h * k3, anchors, m3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            y[3:7] /= np.linalg.norm(y[3:7])

            Rs = _quat_matrix(y[3:7])
            ps, vs, ws = y[0:3], y[7:10], y[10:13]
            wr_s = engine.wrenches(ts + h, ps, Rs, vs, ws, anchors, m3)

            # physical lift-off: a contact breaks once its normal force goes
            # clearly tensile (the small allowance rides out benign bounce
            # zero-crossings during support transfers); a scheduled-down
            # foot that later penetrates the plane re-engages
            for cid in list(anchors):
                fw = wr_s[cid][0]
                normal = anchors[cid][1][:, 2] @ fw
                if normal < -0.02 * weight_scale:
                    anchors.pop(cid)
                    wr_s.pop(cid)
            if scn.anchor_on_plane:
                for e in effectors:
                    cid = e.contact_id
                    if cid in anchors or not e.scheduled_down(ts + h):
                        continue
                    mp, mv, mr, _ = m3[cid]
                    foot = ps + Rs @ mp
                    foot_w_vel = Rs @ (mv + np.cross(ws, mp) + vs)
                    # unilateral ground: engage only a descending foot (a
                    # foot being pulled out of the deformation zone must not
                    # be re-grabbed)
                    if foot[2] <= scn.ground_height and foot_w_vel[2] <= 0.0:
                        anchors[cid] = _anchor_pose(ps, Rs, mp, mr)
                        wr_s[cid] = engine.wrenches(ts + h, ps, Rs, vs, ws,
                                                    {cid: anchors[cid]}, m3)[cid]

            # accumulate substep sensor signals for interval averaging
            if scn.average_sensors:
                a_s, wd_s = engine.accelerations(ts + h, ps, Rs, vs, ws, anchors, m3)
                for j, imu in enumerate(scn.imus):
                    acc, gyr = _imu_ideal(imu, Rs, ws, wd_s, a_s)
                    accum_imu[j] = (accum_imu[j][0] + acc, accum_imu[j][1] + gyr)
                for cid, (facc, tacc) in accum_wrench.items():
                    if cid in wr_s:
                        fw, tw, _ = wr_s[cid]
                        Rc = Rs @ m3[cid][2]
                        accum_wrench[cid] = (facc + Rc.T @ fw, tacc + Rc.T @ tw)

    return SimResult(scn, times, truth, sensors, inputs)


def _imu_ideal(imu: ImuMount, R, w_l, wd_l, a_l):
    """Noise- and bias-free IMU reading for a rigidly mounted sensor."""
    Rs = imu.rotation.matrix
    mounting = np.cross(wd_l, imu.position) + np.cross(w_l, np.cross(w_l, imu.position))
    accel = Rs.T @ (mounting + GRAVITY * R[2, :] + a_l)
    gyro = Rs.T @ w_l
    return accel, gyro


def _mount_sampler(effectors):
    def sample(t: float) -> dict:
        out = {}
        for e in effectors:
            out[e.contact_id] = (
                np.asarray(e.mount_pos(t), dtype=float),
                np.asarray(e.mount_vel(t), dtype=float),
                e.mount_rot(t).matrix,
                np.asarray(e.mount_angvel(t), dtype=float),
            )
        return out

    return sample
