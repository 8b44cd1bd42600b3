"""Vectorized kernels for the filter hot path.

The finite-difference Jacobians need hundreds of state-transition and
measurement evaluations per filter step; evaluating them one by one in
Python would dominate the runtime.  This module packs a state into two flat
arrays (``lin`` for every R^3 block, ``rots`` for the rotation matrices) and
evaluates the transition and measurement maps over whole batches of
perturbed states at once.  The formulas mirror ``dynamics``/``measurement``/
``contact`` exactly; a dedicated test asserts agreement with the plain
implementations.

Packed representation for a layout with ``n`` IMUs and ``c`` contacts:

  lin  (..., 15+3n+9c): p | v | w | bg*n | fe | te | pr*c | cf*c | ct*c
  rots (..., 1+c, 3, 3): body rotation, then contact rest rotations

Batch row order for central differences with tangent dimension D:
rows 0..D-1 are +eps perturbations, rows D..2D-1 are -eps, row 2D is the
unperturbed center.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import so3
from .dynamics import GRAVITY
from .so3 import Rotation
from .state import EstimatorState, InputFrame, StateLayout

# --------------------------------------------------------------------------
# small array helpers


def _cross(a, b):
    """Broadcasting cross product via views (faster than np.cross here)."""
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    np.subtract(ay * bz, az * by, out=out[..., 0])
    np.subtract(az * bx, ax * bz, out=out[..., 1])
    np.subtract(ax * by, ay * bx, out=out[..., 2])
    return out


def _skew_batch(v):
    """Stacked cross-product matrices; one matmul then replaces one cross."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def _exp_batch(v):
    """Rodrigues map on (..., 3) rotation vectors, Taylor-safe near zero."""
    t2 = (v * v).sum(-1)
    t = np.sqrt(t2)
    small = t < 1e-8
    safe = np.where(small, 1.0, t)
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    c = 1.0 - b * t2
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    ax, ay, az = a * x, a * y, a * z
    bx, by = b * x, b * y
    out = np.empty(v.shape[:-1] + (3, 3))
    out[..., 0, 0] = c + bx * x
    out[..., 0, 1] = bx * y - az
    out[..., 0, 2] = bx * z + ay
    out[..., 1, 0] = bx * y + az
    out[..., 1, 1] = c + by * y
    out[..., 1, 2] = by * z - ax
    out[..., 2, 0] = bx * z - ay
    out[..., 2, 1] = by * z + ax
    out[..., 2, 2] = c + b * z * z
    return out


def _log_batch(m):
    """Batched rotation log; fast sine-based path away from pi.

    The finite-difference deltas this is used on are microradians, where the
    sine path is exact; anything beyond 60 degrees falls back to the general
    quaternion-based log.
    """
    c = 0.5 * (m[..., 0, 0] + m[..., 1, 1] + m[..., 2, 2] - 1.0)
    if np.any(c < 0.5):
        return so3.log(m)
    sx = 0.5 * (m[..., 2, 1] - m[..., 1, 2])
    sy = 0.5 * (m[..., 0, 2] - m[..., 2, 0])
    sz = 0.5 * (m[..., 1, 0] - m[..., 0, 1])
    n2 = sx * sx + sy * sy + sz * sz
    n = np.sqrt(n2)
    small = n < 1e-8
    safe = np.where(small, 1.0, n)
    scale = np.where(small, 1.0 + n2 / 6.0, np.arctan2(n, c) / safe)
    out = np.empty(m.shape[:-2] + (3,))
    out[..., 0] = scale * sx
    out[..., 1] = scale * sy
    out[..., 2] = scale * sz
    return out


# --------------------------------------------------------------------------
# packed layout


class BatchLayout:
    """Column maps between the packed arrays and the tangent space."""

    def __init__(self, lay: StateLayout):
        n, ids = lay.n_imus, lay.contact_ids
        c = len(ids)
        self.state_layout = lay
        self.n_imus = n
        self.contact_ids = ids
        self.n_contacts = c
        self.dim = lay.dim
        self.lin_dim = 15 + 3 * n + 9 * c
        self.n_rots = 1 + c
        self.meas_dim = lay.measurement_dim

        # lin column slices
        self.p = slice(0, 3)
        self.v = slice(3, 6)
        self.w = slice(6, 9)
        self.bg = slice(9, 9 + 3 * n)
        self.fe = slice(9 + 3 * n, 12 + 3 * n)
        self.te = slice(12 + 3 * n, 15 + 3 * n)
        o = 15 + 3 * n
        self.pr = slice(o, o + 3 * c)
        self.cf = slice(o + 3 * c, o + 6 * c)
        self.ct = slice(o + 6 * c, o + 9 * c)
        # transition copies bias / external wrench / rest positions verbatim
        self.const = slice(9, o + 3 * c)

        # tangent index of every lin column
        lin_tan = np.empty(self.lin_dim, dtype=int)
        lin_tan[self.p] = np.arange(lay.pos.start, lay.pos.stop)
        lin_tan[self.v] = np.arange(lay.vel.start, lay.vel.stop)
        lin_tan[self.w] = np.arange(lay.angvel.start, lay.angvel.stop)
        for j in range(n):
            lin_tan[9 + 3 * j : 12 + 3 * j] = np.arange(lay.bias[j].start, lay.bias[j].stop)
        lin_tan[self.fe] = np.arange(lay.ext_force.start, lay.ext_force.stop)
        lin_tan[self.te] = np.arange(lay.ext_torque.start, lay.ext_torque.stop)
        for i, cid in enumerate(ids):
            sl = lay.contact[cid]
            lin_tan[o + 3 * i : o + 3 * i + 3] = np.arange(sl.rest_pos.start, sl.rest_pos.stop)
            base = o + 3 * c
            lin_tan[base + 3 * i : base + 3 * i + 3] = np.arange(sl.force.start, sl.force.stop)
            base = o + 6 * c
            lin_tan[base + 3 * i : base + 3 * i + 3] = np.arange(sl.torque.start, sl.torque.stop)
        self.lin_tan = lin_tan
        self.lin_cols = np.arange(self.lin_dim)

        # tangent rows of each rotation block (body first, then rest rotations)
        rot_rows = [np.arange(lay.ori.start, lay.ori.stop)]
        for cid in ids:
            sl = lay.contact[cid].rest_ori
            rot_rows.append(np.arange(sl.start, sl.stop))
        self.rot_rows = np.stack(rot_rows)  # (n_rots, 3)
        self.rot_rows_flat = self.rot_rows.ravel()
        self.rot_index = np.repeat(np.arange(self.n_rots), 3)


@lru_cache(maxsize=None)
def _batch_layout(n_imus: int, contact_ids: tuple) -> BatchLayout:
    return BatchLayout(StateLayout.of(n_imus, contact_ids))


def batch_layout(lay: StateLayout) -> BatchLayout:
    return _batch_layout(lay.n_imus, lay.contact_ids)


@lru_cache(maxsize=None)
def _eps_rotations(eps: float, n_rots: int):
    """Exp(+-eps e_a) for the three axes, tiled once per rotation block."""
    plus = np.stack([so3.exp(eps * np.eye(3)[a]) for a in range(3)])
    minus = np.stack([so3.exp(-eps * np.eye(3)[a]) for a in range(3)])
    return np.tile(plus, (n_rots, 1, 1)), np.tile(minus, (n_rots, 1, 1))


# --------------------------------------------------------------------------
# state packing


def pack_state(x: EstimatorState, bl: BatchLayout):
    lin = np.empty(bl.lin_dim)
    lin[bl.p] = x.pos_local
    lin[bl.v] = x.vel_local
    lin[bl.w] = x.angvel_local
    lin[bl.bg] = x.gyro_biases.ravel()
    lin[bl.fe] = x.ext_force
    lin[bl.te] = x.ext_torque
    rots = np.empty((bl.n_rots, 3, 3))
    rots[0] = x.rot.matrix
    for i, c in enumerate(x.contacts):
        lin[bl.pr.start + 3 * i : bl.pr.start + 3 * i + 3] = c.rest_position
        lin[bl.cf.start + 3 * i : bl.cf.start + 3 * i + 3] = c.force
        lin[bl.ct.start + 3 * i : bl.ct.start + 3 * i + 3] = c.torque
        rots[1 + i] = c.rest_orientation.matrix
    return lin, rots


def unpack_state(lin, rots, bl: BatchLayout) -> EstimatorState:
    from .state import ContactState

    contacts = []
    for i, cid in enumerate(bl.contact_ids):
        contacts.append(
            ContactState._unchecked(
                cid,
                lin[bl.pr.start + 3 * i : bl.pr.start + 3 * i + 3].copy(),
                Rotation.from_matrix(rots[1 + i]),
                lin[bl.cf.start + 3 * i : bl.cf.start + 3 * i + 3].copy(),
                lin[bl.ct.start + 3 * i : bl.ct.start + 3 * i + 3].copy(),
            )
        )
    return EstimatorState._unchecked(
        lin[bl.p].copy(), Rotation.from_matrix(rots[0]), lin[bl.v].copy(), lin[bl.w].copy(),
        lin[bl.bg].reshape(-1, 3).copy(), lin[bl.fe].copy(), lin[bl.te].copy(), contacts,
    )


def boxplus_packed(lin, rots, delta, bl: BatchLayout):
    lin_new = lin + delta[bl.lin_tan]
    rots_new = rots @ _exp_batch(delta[bl.rot_rows])
    return lin_new, rots_new


# --------------------------------------------------------------------------
# packed inputs


def _inv3(m):
    """Adjugate-based 3x3 inverse (np.linalg.inv overhead dominates here)."""
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    A, B, C = e * i - f * h, c * h - b * i, b * f - c * e
    D, E, F = f * g - d * i, a * i - c * g, c * d - a * f
    G, H, I = d * h - e * g, b * g - a * h, a * e - b * d
    det = a * A + b * D + c * G
    if det == 0.0:
        raise np.linalg.LinAlgError("singular inertia matrix")
    return np.array(((A, B, C), (D, E, F), (G, H, I))) / det


class PackedInput:
    """Per-step constants extracted from an InputFrame for batch kernels."""

    def __init__(self, u: InputFrame, bl: BatchLayout):
        if len(u.imus) != bl.n_imus:
            raise ValueError(f"input has {len(u.imus)} IMUs, state expects {bl.n_imus}")
        missing = [cid for cid in bl.contact_ids if cid not in u.contacts]
        if missing:
            raise ValueError(f"input frame is missing contacts {missing}")
        self.mass = float(u.mass)
        self.inertia = u.inertia
        self.inertia_inv_t = _inv3(u.inertia).T
        self.inertia_dot_t = u.inertia_dot.T
        self.has_inertia_dot = bool(u.inertia_dot.any())
        self.momentum = u.momentum
        self.momentum_dot = u.momentum_dot
        self.fres = u.force_residual
        self.tres = u.torque_residual

        c = bl.n_contacts
        self.gp = np.empty((c, 3))
        self.gR = np.empty((c, 3, 3))
        self.gpd = np.empty((c, 3))
        self.gw = np.empty((c, 3))
        self.kpt = np.empty((c, 3))
        self.kdt = np.empty((c, 3))
        self.kpr = np.empty((c, 3))
        self.kdr = np.empty((c, 3))
        for i, cid in enumerate(bl.contact_ids):
            ci = u.contacts[cid]
            self.gp[i] = ci.position
            self.gR[i] = ci.rotation.matrix
            self.gpd[i] = ci.velocity
            self.gw[i] = ci.angular_velocity
            self.kpt[i] = ci.flex.linear_stiffness
            self.kdt[i] = ci.flex.linear_damping
            self.kpr[i] = ci.flex.angular_stiffness
            self.kdr[i] = ci.flex.angular_damping
        self.SpR = so3.skew(self.gp) @ self.gR if c else np.zeros((0, 3, 3))
        self.has_gpd = bool(self.gpd.any())
        self.has_gw = bool(self.gw.any())

        self.imu_p = [imu.position for imu in u.imus]
        self.imu_R = [imu.rotation.matrix for imu in u.imus]
        self.imu_pd = [imu.velocity for imu in u.imus]
        self.imu_w = [imu.angular_velocity for imu in u.imus]
        self.imu_pdd = [imu.acceleration for imu in u.imus]


# --------------------------------------------------------------------------
# batched model maps


def _newton_euler(lin, rots, pin: PackedInput, bl: BatchLayout):
    """Batched centroid accelerations; returns (a, wdot, skew(w))."""
    B = lin.shape[:-1]
    w = lin[..., bl.w]
    fe = lin[..., bl.fe]
    te = lin[..., bl.te]
    R = rots[..., 0, :, :]
    if bl.n_contacts:
        cf = lin[..., bl.cf].reshape(B + (bl.n_contacts, 3))
        ct = lin[..., bl.ct].reshape(B + (bl.n_contacts, 3))
        fc = (pin.gR @ cf[..., None])[..., 0].sum(-2)
        tc = (pin.gR @ ct[..., None] + pin.SpR @ cf[..., None])[..., 0].sum(-2)
    else:
        fc = 0.0
        tc = 0.0
    Sw = _skew_batch(w)
    a = (pin.fres + fe + fc) / pin.mass - GRAVITY * R[..., 2, :]
    rhs = (
        pin.tres + tc + te - pin.momentum_dot
        - (Sw @ (w @ pin.inertia.T + pin.momentum)[..., None])[..., 0]
    )
    if pin.has_inertia_dot:
        rhs = rhs - w @ pin.inertia_dot_t
    wdot = rhs @ pin.inertia_inv_t
    return a, wdot, Sw


def f_batch(lin, rots, pin: PackedInput, bl: BatchLayout, dt: float):
    """Batched state transition on packed arrays."""
    B = lin.shape[:-1]
    p = lin[..., bl.p]
    v = lin[..., bl.v]
    w = lin[..., bl.w]
    R = rots[..., 0, :, :]
    a, wdot, Sw = _newton_euler(lin, rots, pin, bl)
    Swd = _skew_batch(wdot)

    half_dt2 = 0.5 * dt * dt
    wxp = (Sw @ p[..., None])[..., 0]
    wxv = (Sw @ v[..., None])[..., 0]
    p_new = (
        p - dt * wxp + half_dt2 * ((Sw @ wxp[..., None])[..., 0] - (Swd @ p[..., None])[..., 0])
        + dt * v - (dt * dt) * wxv + half_dt2 * a
    )
    R_new = R @ _exp_batch(dt * w + half_dt2 * wdot)
    v_new = v + dt * (a - wxv)
    w_new = w + dt * wdot

    lin_out = np.empty_like(lin)
    lin_out[..., bl.p] = p_new
    lin_out[..., bl.v] = v_new
    lin_out[..., bl.w] = w_new
    lin_out[..., bl.const] = lin[..., bl.const]
    rots_out = np.empty_like(rots)
    rots_out[..., 0, :, :] = R_new
    rots_out[..., 1:, :, :] = rots[..., 1:, :, :]

    if bl.n_contacts:
        # contact wrenches recomputed from the predicted kinematics
        pr = lin[..., bl.pr].reshape(B + (bl.n_contacts, 3))
        Rn = R_new[..., None, :, :]
        pC = (Rn @ (pin.gp + p_new[..., None, :])[..., None])[..., 0]
        RC = Rn @ pin.gR
        # skew(w_new) = skew(w) + dt skew(wdot); cross with each contact offset
        Swn = Sw + dt * Swd
        vel_arg = (Swn[..., None, :, :] @ pin.gp[..., None])[..., 0] + v_new[..., None, :]
        if pin.has_gpd:
            vel_arg += pin.gpd
        pdC = (Rn @ vel_arg[..., None])[..., 0]
        w_arg = pin.gw + w_new[..., None, :] if pin.has_gw else w_new[..., None, :]
        wC = (Rn @ np.broadcast_to(w_arg, B + (bl.n_contacts, 3))[..., None])[..., 0]
        Rtil = RC @ np.swapaxes(rots[..., 1:, :, :], -1, -2)
        elast = pin.kpt * (pC - pr) + pin.kdt * pdC
        cf_new = -(elast[..., None, :] @ RC)[..., 0, :]
        half_vec = np.empty(B + (bl.n_contacts, 3))
        half_vec[..., 0] = 0.5 * (Rtil[..., 2, 1] - Rtil[..., 1, 2])
        half_vec[..., 1] = 0.5 * (Rtil[..., 0, 2] - Rtil[..., 2, 0])
        half_vec[..., 2] = 0.5 * (Rtil[..., 1, 0] - Rtil[..., 0, 1])
        tors = pin.kpr * half_vec + pin.kdr * wC
        ct_new = -(tors[..., None, :] @ RC)[..., 0, :]
        lin_out[..., bl.cf] = cf_new.reshape(B + (3 * bl.n_contacts,))
        lin_out[..., bl.ct] = ct_new.reshape(B + (3 * bl.n_contacts,))
    return lin_out, rots_out


def g_batch(lin, rots, pin: PackedInput, bl: BatchLayout):
    """Batched measurement prediction, full stack (..., meas_dim)."""
    B = lin.shape[:-1]
    w = lin[..., bl.w]
    R = rots[..., 0, :, :]
    a, wdot, Sw = _newton_euler(lin, rots, pin, bl)
    out = np.empty(B + (bl.meas_dim,))
    grav = GRAVITY * R[..., 2, :]
    for j in range(bl.n_imus):
        off = 6 * j
        mounting = _cross(wdot, pin.imu_p[j]) + (Sw @ (Sw @ pin.imu_p[j])[..., None])[..., 0]
        if pin.imu_pd[j].any():
            mounting = mounting + 2.0 * (Sw @ pin.imu_pd[j])
        out[..., off : off + 3] = (mounting + grav + a + pin.imu_pdd[j]) @ pin.imu_R[j]
        bias = lin[..., 9 + 3 * j : 12 + 3 * j]
        out[..., off + 3 : off + 6] = (pin.imu_w[j] + w) @ pin.imu_R[j] + bias
    woff = 6 * bl.n_imus
    for i in range(bl.n_contacts):
        out[..., woff + 6 * i : woff + 6 * i + 3] = lin[..., bl.cf.start + 3 * i : bl.cf.start + 3 * i + 3]
        out[..., woff + 6 * i + 3 : woff + 6 * i + 6] = lin[..., bl.ct.start + 3 * i : bl.ct.start + 3 * i + 3]
    return out


# --------------------------------------------------------------------------
# central-difference Jacobians


def perturbed_batch(lin, rots, bl: BatchLayout, eps: float):
    """Batch of 2*D+1 packed states: +eps rows, -eps rows, center last."""
    D = bl.dim
    B = 2 * D + 1
    linb = np.broadcast_to(lin, (B, bl.lin_dim)).copy()
    linb[bl.lin_tan, bl.lin_cols] += eps
    linb[bl.lin_tan + D, bl.lin_cols] -= eps
    rotsb = np.broadcast_to(rots, (B,) + rots.shape).copy()
    eplus, eminus = _eps_rotations(eps, bl.n_rots)
    base = rots[bl.rot_index]
    rotsb[bl.rot_rows_flat, bl.rot_index] = base @ eplus
    rotsb[bl.rot_rows_flat + D, bl.rot_index] = base @ eminus
    return linb, rotsb


def fd_transition_packed(lin, rots, pin: PackedInput, bl: BatchLayout, dt: float, eps: float):
    """Transition Jacobian from packed state; also returns the packed
    unperturbed transition result (the predicted state)."""
    linb, rotsb = perturbed_batch(lin, rots, bl, eps)
    lin_out, rots_out = f_batch(linb, rotsb, pin, bl, dt)
    D = bl.dim
    A = np.empty((D, D))
    A[bl.lin_tan, :] = (lin_out[:D] - lin_out[D : 2 * D]).T / (2.0 * eps)
    m = np.swapaxes(rots_out[D : 2 * D], -1, -2) @ rots_out[:D]
    logs = _log_batch(m)  # (D, n_rots, 3)
    A[bl.rot_rows_flat, :] = logs.transpose(1, 2, 0).reshape(3 * bl.n_rots, D) / (2.0 * eps)
    return A, (lin_out[2 * D], rots_out[2 * D])


def fd_transition(x: EstimatorState, u: InputFrame, dt: float, eps: float = 1e-6):
    """Central-difference transition Jacobian of a state-level pair."""
    bl = batch_layout(x.layout())
    lin, rots = pack_state(x, bl)
    pin = PackedInput(u, bl)
    return fd_transition_packed(lin, rots, pin, bl, dt, eps)


def fd_measurement(lin, rots, pin: PackedInput, bl: BatchLayout, eps: float = 1e-6):
    """Central-difference measurement Jacobian and the center prediction."""
    linb, rotsb = perturbed_batch(lin, rots, bl, eps)
    Y = g_batch(linb, rotsb, pin, bl)
    D = bl.dim
    C = (Y[:D] - Y[D : 2 * D]).T / (2.0 * eps)
    return C, Y[2 * D]
