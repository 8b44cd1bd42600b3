"""Rotation primitives on SO(3) and its tangent space.

All array functions broadcast over leading dimensions: rotation vectors are
``(..., 3)``, rotation matrices ``(..., 3, 3)``.  Angles are radians.  The
:class:`Rotation` value type wraps a unit quaternion (w, x, y, z) and is the
representation used by the state containers; the free functions operate on
raw arrays and are the ones used in batched hot paths.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "skew",
    "vec",
    "exp",
    "log",
    "Rotation",
    "interpolate",
    "yaw_rotation",
    "split_yaw_tilt",
    "yaw_of",
    "tilt_of",
    "replace_tilt",
]

# Below this angle the exp/log coefficients switch to 2nd-order Taylor
# expansions; squared-angle terms underflow near machine precision there.
_SMALL_ANGLE = 1e-8


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vec(m, tol: float = 1e-9) -> np.ndarray:
    """Inverse of :func:`skew` for antisymmetric matrices.

    Raises ``ValueError`` if ``m + m.T`` exceeds ``tol`` anywhere.
    """
    m = np.asarray(m, dtype=float)
    sym = np.abs(m + np.swapaxes(m, -1, -2)).max()
    if sym > tol:
        raise ValueError(f"matrix is not antisymmetric: max |M + M^T| = {sym:.3e}")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _sin_cos_coeffs(theta_sq: np.ndarray):
    """Rodrigues coefficients sin(t)/t and (1-cos(t))/t^2, Taylor-safe."""
    theta = np.sqrt(theta_sq)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta_sq / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta_sq / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    return a, b


def exp(rotvec) -> np.ndarray:
    """Rotation matrix from rotation vector (Rodrigues form)."""
    v = np.asarray(rotvec, dtype=float)
    theta_sq = (v * v).sum(axis=-1)
    a, b = _sin_cos_coeffs(theta_sq)
    s = skew(v)
    outer = v[..., :, None] * v[..., None, :]
    c = 1.0 - b * theta_sq  # equals cos(theta)
    eye = np.zeros(v.shape[:-1] + (3, 3))
    eye[..., 0, 0] = eye[..., 1, 1] = eye[..., 2, 2] = 1.0
    return (
        c[..., None, None] * eye
        + a[..., None, None] * s
        + b[..., None, None] * outer
    )


def _quat_from_rotvec(rotvec) -> np.ndarray:
    v = np.asarray(rotvec, dtype=float)
    theta_sq = (v * v).sum(axis=-1)
    theta = np.sqrt(theta_sq)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # sin(t/2)/t with Taylor fallback
    k = np.where(small, 0.5 - theta_sq / 48.0, np.sin(safe / 2.0) / safe)
    w = np.cos(theta / 2.0)
    return np.concatenate([w[..., None], k[..., None] * v], axis=-1)


def _quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def _quat_from_matrix_single(m) -> tuple:
    """Scalar-path quaternion extraction for one 3x3 matrix (hot path)."""
    m00, m01, m02 = float(m[0, 0]), float(m[0, 1]), float(m[0, 2])
    m10, m11, m12 = float(m[1, 0]), float(m[1, 1]), float(m[1, 2])
    m20, m21, m22 = float(m[2, 0]), float(m[2, 1]), float(m[2, 2])
    tr = m00 + m11 + m22
    t0, t1, t2, t3 = 1.0 + tr, 1.0 + m00 - m11 - m22, 1.0 - m00 + m11 - m22, 1.0 - m00 - m11 + m22
    best = max(t0, t1, t2, t3)
    s = 2.0 * math.sqrt(max(best, 1e-30))
    if best == t0:
        return s / 4.0, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s
    if best == t1:
        return (m21 - m12) / s, s / 4.0, (m01 + m10) / s, (m02 + m20) / s
    if best == t2:
        return (m02 - m20) / s, (m01 + m10) / s, s / 4.0, (m12 + m21) / s
    return (m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, s / 4.0


def _quat_from_matrix(m) -> np.ndarray:
    """Quaternion (w, x, y, z) from rotation matrix, branch-free over batches.

    Uses the four-candidate extraction keyed on the dominant diagonal term,
    which stays well conditioned at every angle including pi.
    """
    m = np.asarray(m, dtype=float)
    m00, m01, m02 = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    m10, m11, m12 = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    m20, m21, m22 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    tr = m00 + m11 + m22

    t = np.stack(
        [1.0 + tr, 1.0 + m00 - m11 - m22, 1.0 - m00 + m11 - m22, 1.0 - m00 - m11 + m22],
        axis=-1,
    )
    case = np.argmax(t, axis=-1)
    s = 2.0 * np.sqrt(np.maximum(np.take_along_axis(t, case[..., None], -1)[..., 0], 1e-30))

    q0 = np.stack([s / 4.0, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s], -1)
    q1 = np.stack([(m21 - m12) / s, s / 4.0, (m01 + m10) / s, (m02 + m20) / s], -1)
    q2 = np.stack([(m02 - m20) / s, (m01 + m10) / s, s / 4.0, (m12 + m21) / s], -1)
    q3 = np.stack([(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, s / 4.0], -1)
    q = np.choose(case[..., None], [q0, q1, q2, q3])
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q


def _quat_to_rotvec(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    # minimal-norm branch: flip to non-negative scalar part
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = q[..., 0]
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    small = n < _SMALL_ANGLE
    safe_n = np.where(small, 1.0, n)
    angle = 2.0 * np.arctan2(n, w)
    safe_w = np.where(small, np.maximum(w, _SMALL_ANGLE), 1.0)
    # near zero: angle/n -> 2/w * (1 - n^2/(3 w^2))
    scale = np.where(small, (2.0 / safe_w) * (1.0 - n * n / (3.0 * safe_w * safe_w)), angle / safe_n)
    out = scale[..., None] * v
    # angle == pi: sign is ambiguous; make the largest-magnitude component positive
    at_pi = angle > np.pi - 1e-12
    if np.any(at_pi):
        dom = np.take_along_axis(out, np.argmax(np.abs(out), axis=-1)[..., None], -1)[..., 0]
        flip = at_pi & (dom < 0.0)
        out = np.where(flip[..., None], -out, out)
    return out


def log(rotmat) -> np.ndarray:
    """Minimal rotation vector of a rotation matrix.

    The angle is extracted through the quaternion, which is stable both near
    zero and near pi (the trace formula is singular at pi).
    """
    return _quat_to_rotvec(_quat_from_matrix(rotmat))


class Rotation:
    """Element of SO(3), internally a unit quaternion with a cached matrix.

    Instances are immutable values: composition, inversion and tangent maps
    all return new objects.  The quaternion is renormalized after every
    composing operation so that repeated products cannot drift.
    """

    __slots__ = ("_q", "_matrix")

    def __init__(self, quat):
        w, x, y, z = (float(c) for c in np.asarray(quat).reshape(4))
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if not math.isfinite(norm) or norm < 1e-12:
            raise ValueError("quaternion norm is zero or non-finite")
        self._q = np.array((w / norm, x / norm, y / norm, z / norm))
        self._matrix = None

    # --- constructors -----------------------------------------------------
    @classmethod
    def identity(cls) -> "Rotation":
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def exp(cls, rotvec) -> "Rotation":
        """Rotation by angle ``|rotvec|`` about ``rotvec``'s direction."""
        return cls(_quat_from_rotvec(np.asarray(rotvec, dtype=float).reshape(3)))

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        return cls(_quat_from_matrix_single(np.asarray(m, dtype=float).reshape(3, 3)))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "Rotation":
        """Haar-uniform random rotation."""
        return cls(rng.normal(size=4))

    # --- views ------------------------------------------------------------
    @property
    def quat(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z); copy, scalar part sign preserved."""
        return self._q.copy()

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            w, x, y, z = self._q
            self._matrix = np.array(
                (
                    (1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)),
                    (2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)),
                    (2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)),
                )
            )
        return self._matrix

    def rotvec(self) -> np.ndarray:
        """Minimal rotation vector, ``Rotation.exp(r.rotvec()) == r``."""
        return _quat_to_rotvec(self._q)

    def log(self) -> np.ndarray:
        return self.rotvec()

    # --- algebra ----------------------------------------------------------
    def __matmul__(self, other: "Rotation") -> "Rotation":
        if not isinstance(other, Rotation):
            return NotImplemented
        w1, x1, y1, z1 = self._q
        w2, x2, y2, z2 = other._q
        return Rotation(
            (
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            )
        )

    def inverse(self) -> "Rotation":
        w, x, y, z = self._q
        return Rotation((w, -x, -y, -z))

    def apply(self, v) -> np.ndarray:
        """Rotate vectors: ``R @ v`` for ``v`` of shape (..., 3)."""
        v = np.asarray(v, dtype=float)
        return v @ self.matrix.T

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle between two rotations."""
        return float(np.linalg.norm((self.inverse() @ other).rotvec()))

    def __repr__(self) -> str:  # pragma: no cover
        w, x, y, z = self._q
        return f"Rotation(quat=[{w:.6f}, {x:.6f}, {y:.6f}, {z:.6f}])"


def interpolate(r1: Rotation, r2: Rotation, rho: float) -> Rotation:
    """Geodesic interpolation ``r1 * exp(rho * log(r1^T r2))``, rho in [0, 1]."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"interpolation parameter must be in [0, 1], got {rho}")
    return r1 @ Rotation.exp(rho * (r1.inverse() @ r2).rotvec())


# --- yaw / tilt splitting -------------------------------------------------
#
# R = Rz(yaw) @ R_tilt where R_tilt is the minimal rotation aligning the
# world vertical with the body vertical.  The tilt part carries exactly the
# body-frame gravity direction R^T e_z; yaw is the remaining twist about the
# world z axis.


def yaw_rotation(psi: float) -> Rotation:
    """Rotation by ``psi`` about the world z axis."""
    return Rotation.exp((0.0, 0.0, float(psi)))


def split_yaw_tilt(rot: Rotation) -> tuple[float, Rotation]:
    """Split into (yaw angle, tilt rotation) with ``rot = Rz(yaw) @ tilt``."""
    w = rot.matrix[2, :]  # body-frame gravity direction R^T e_z
    axis = np.array([w[1], -w[0], 0.0])  # w x e_z
    s = float(np.linalg.norm(axis))
    c = float(w[2])
    if s < 1e-12:
        # w parallel to e_z: upright (tilt = I) or upside-down (pick x axis)
        tilt = Rotation.identity() if c > 0.0 else Rotation.exp((np.pi, 0.0, 0.0))
    else:
        tilt = Rotation.exp(np.arctan2(s, c) * axis / s)
    r_yaw = (rot @ tilt.inverse()).matrix
    psi = float(np.arctan2(r_yaw[1, 0], r_yaw[0, 0]))
    return psi, tilt


def yaw_of(rot: Rotation) -> float:
    return split_yaw_tilt(rot)[0]


def tilt_of(rot: Rotation) -> Rotation:
    return split_yaw_tilt(rot)[1]


def replace_tilt(rot: Rotation, tilt_source: Rotation) -> Rotation:
    """Keep ``rot``'s yaw, substitute the tilt component of ``tilt_source``."""
    psi, _ = split_yaw_tilt(rot)
    _, tilt = split_yaw_tilt(tilt_source)
    return yaw_rotation(psi) @ tilt
