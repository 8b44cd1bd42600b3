"""Multiplicative EKF loop.

Prediction propagates the state through the transition map and the
covariance through a central finite-difference Jacobian taken on the group
(perturbations applied with boxplus, differences read back with boxminus).
The update solves the innovation system with a symmetric positive-definite
factorization and applies the correction multiplicatively; the covariance
uses the Joseph form and is re-symmetrized after every step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _batch
from .noise import NoiseConfig
from .state import EstimatorState, InputFrame, MeasurementFrame, boxplus

DEFAULT_FD_EPS = 1e-6

__all__ = [
    "DEFAULT_FD_EPS",
    "InnovationNotPositiveDefinite",
    "UpdateInfo",
    "StepDiagnostics",
    "transition_jacobian",
    "measurement_jacobian",
    "predict",
    "update",
    "step",
]


class InnovationNotPositiveDefinite(ValueError):
    """Innovation covariance failed its SPD factorization even after the
    jitter fallback; carries the offending minimum eigenvalue."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            f"innovation covariance is not positive definite (min eigenvalue {min_eigenvalue:.3e})"
        )


@dataclass
class UpdateInfo:
    """Innovation and its covariance for the rows that were present."""

    innovation: np.ndarray
    innovation_cov: np.ndarray
    mask: np.ndarray


@dataclass
class StepDiagnostics:
    innovation: Optional[np.ndarray]
    innovation_cov: Optional[np.ndarray]
    wall_time: float


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _noise_diags(cfg: NoiseConfig, lay) -> tuple[np.ndarray, np.ndarray]:
    """Assembled (process, measurement) diagonals, memoized per layout.

    NoiseConfig instances are treated as immutable once in use (overrides go
    through ``with_overrides``, which returns a new object).
    """
    cache = cfg.__dict__.setdefault("_diag_cache", {})
    key = lay.key()
    hit = cache.get(key)
    if hit is None:
        hit = (cfg.process_diag(lay), cfg.measurement_diag(lay))
        cache[key] = hit
    return hit


def transition_jacobian(
    x: EstimatorState, u: InputFrame, dt: float, eps: float = DEFAULT_FD_EPS
) -> np.ndarray:
    """Central-difference Jacobian of the state transition on the group."""
    A, _ = _batch.fd_transition(x, u, dt, eps)
    return A


def measurement_jacobian(
    x: EstimatorState, u: InputFrame, eps: float = DEFAULT_FD_EPS
) -> np.ndarray:
    """Central-difference Jacobian of the full measurement stack."""
    bl = _batch.batch_layout(x.layout())
    lin, rots = _batch.pack_state(x, bl)
    pin = _batch.PackedInput(u, bl)
    C, _ = _batch.fd_measurement(lin, rots, pin, bl, eps)
    return C


def predict(
    x: EstimatorState,
    P: np.ndarray,
    u: InputFrame,
    cfg: NoiseConfig,
    dt: float,
    eps: float = DEFAULT_FD_EPS,
) -> tuple[EstimatorState, np.ndarray]:
    """Propagate state and covariance one step; P is re-symmetrized."""
    lay = x.layout()
    if P.shape != (lay.dim, lay.dim):
        raise ValueError(f"covariance shape {P.shape} does not match tangent dim {lay.dim}")
    A, packed_bar = _batch.fd_transition(x, u, dt, eps)
    x_bar = _batch.unpack_state(*packed_bar, _batch.batch_layout(lay))
    P_bar = A @ P @ A.T
    P_bar.flat[:: lay.dim + 1] += cfg.process_diag(lay)
    return x_bar, _symmetrize(P_bar)


def _solve_spd(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve S X = rhs for symmetric positive-definite S, with a one-shot
    jitter fallback before giving up."""
    try:
        return cho_solve(cho_factor(S, lower=True, check_finite=False), rhs, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    jittered = S + 1e-12 * np.eye(S.shape[0])
    try:
        return cho_solve(
            cho_factor(jittered, lower=True, check_finite=False), rhs, check_finite=False
        )
    except np.linalg.LinAlgError:
        raise InnovationNotPositiveDefinite(float(np.linalg.eigvalsh(S).min())) from None


def update(
    x_bar: EstimatorState,
    P_bar: np.ndarray,
    y: MeasurementFrame,
    u: InputFrame,
    cfg: NoiseConfig,
    eps: float = DEFAULT_FD_EPS,
) -> tuple[EstimatorState, np.ndarray, UpdateInfo]:
    """Measurement update with masked rows and Joseph-form covariance.

    With no measurement rows present the update is a no-op.
    """
    lay = x_bar.layout()
    y_vec, mask = y.stack(lay)
    if y_vec.size == 0:
        return x_bar, P_bar, UpdateInfo(np.zeros(0), np.zeros((0, 0)), mask)
    bl = _batch.batch_layout(lay)
    lin, rots = _batch.pack_state(x_bar, bl)
    pin = _batch.PackedInput(u, bl)
    C_full, y_hat = _batch.fd_measurement(lin, rots, pin, bl, eps)
    C = C_full[mask]
    r = cfg.measurement_diag(lay)[mask]
    m = C.shape[0]

    S = C @ P_bar @ C.T
    S.flat[:: m + 1] += r
    K = _solve_spd(S, C @ P_bar).T
    innovation = y_vec - y_hat[mask]
    delta = K @ innovation

    lin_new, rots_new = _batch.boxplus_packed(lin, rots, delta, bl)
    x_hat = _batch.unpack_state(lin_new, rots_new, bl)

    IKC = -K @ C
    IKC.flat[:: lay.dim + 1] += 1.0
    P_new = IKC @ P_bar @ IKC.T + (K * r) @ K.T
    return x_hat, _symmetrize(P_new), UpdateInfo(innovation, S, mask)


def step(
    x: EstimatorState,
    P: np.ndarray,
    u: InputFrame,
    y: MeasurementFrame,
    cfg: NoiseConfig,
    dt: float,
    eps: float = DEFAULT_FD_EPS,
) -> tuple[EstimatorState, np.ndarray, StepDiagnostics]:
    """One full filter iteration: predict, then update with ``y``.

    Contact-set edits (add/remove) must be applied to (x, P, u) before
    stepping.  ``u`` should carry the contact/IMU kinematics at the
    measurement time: the predicted wrench states are evaluated at the
    predicted kinematics and compared against the measured wrench, and a
    millimeter of unmodeled mount motion maps through the contact
    stiffness into hundreds of newtons of phantom innovation.  Diagnostics
    carry the innovation, its covariance and the wall time.  Equivalent to
    ``predict`` followed by ``update`` but stays packed throughout.
    """
    t0 = time.perf_counter()
    lay = x.layout()
    if P.shape != (lay.dim, lay.dim):
        raise ValueError(f"covariance shape {P.shape} does not match tangent dim {lay.dim}")
    bl = _batch.batch_layout(lay)
    pin = _batch.PackedInput(u, bl)
    q_diag, r_full = _noise_diags(cfg, lay)

    lin, rots = _batch.pack_state(x, bl)
    A, (lin_bar, rots_bar) = _batch.fd_transition_packed(lin, rots, pin, bl, dt, eps)
    P_bar = A @ P @ A.T
    P_bar.flat[:: lay.dim + 1] += q_diag
    P_bar = _symmetrize(P_bar)

    y_vec, mask = y.stack(lay)
    if y_vec.size == 0:
        x_bar = _batch.unpack_state(lin_bar, rots_bar, bl)
        return x_bar, P_bar, StepDiagnostics(None, None, time.perf_counter() - t0)

    C_full, y_hat = _batch.fd_measurement(lin_bar, rots_bar, pin, bl, eps)
    C = C_full[mask]
    r = r_full[mask]
    m = C.shape[0]
    S = C @ P_bar @ C.T
    S.flat[:: m + 1] += r
    K = _solve_spd(S, C @ P_bar).T
    innovation = y_vec - y_hat[mask]
    lin_new, rots_new = _batch.boxplus_packed(lin_bar, rots_bar, K @ innovation, bl)
    x_hat = _batch.unpack_state(lin_new, rots_new, bl)
    IKC = -K @ C
    IKC.flat[:: lay.dim + 1] += 1.0
    P_new = _symmetrize(IKC @ P_bar @ IKC.T + (K * r) @ K.T)
    return x_hat, P_new, StepDiagnostics(innovation, S, time.perf_counter() - t0)
