"""Covariance tuning for the estimator.

All blocks are per-axis variances (diagonal covariance sub-matrices).  The
defaults are the tuning validated on full-size humanoids; they are the same
for every scenario unless a config overrides specific blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def _v3(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        arr = np.full(3, float(arr))
    if arr.shape != (3,):
        raise ValueError(f"expected scalar or 3-vector, got shape {arr.shape}")
    if np.any(arr < 0.0):
        raise ValueError("variances must be non-negative")
    return arr


@dataclass
class NoiseConfig:
    """Process, initial and measurement variances, per state/sensor block."""

    # process variances (added each filter step)
    q_pos: np.ndarray = field(default_factory=lambda: _v3(1e-10))
    q_ori: np.ndarray = field(default_factory=lambda: _v3(1e-12))
    q_vel: np.ndarray = field(default_factory=lambda: _v3(0.0))
    q_angvel: np.ndarray = field(default_factory=lambda: _v3(0.0))
    q_gyro_bias: np.ndarray = field(default_factory=lambda: _v3(1e-12))
    q_ext_force: np.ndarray = field(default_factory=lambda: _v3(9e-2))
    q_ext_torque: np.ndarray = field(default_factory=lambda: _v3(5e-2))
    q_rest_pos: np.ndarray = field(default_factory=lambda: _v3(0.0))
    q_rest_ori: np.ndarray = field(default_factory=lambda: _v3(0.0))
    q_contact_force: np.ndarray = field(default_factory=lambda: _v3((250.0, 250.0, 2500.0)))
    q_contact_torque: np.ndarray = field(default_factory=lambda: _v3(250.0))

    # initial variances for the centroid/bias/external-wrench blocks
    p0_pos: np.ndarray = field(default_factory=lambda: _v3(0.0))
    p0_ori: np.ndarray = field(default_factory=lambda: _v3(0.0))
    p0_vel: np.ndarray = field(default_factory=lambda: _v3(0.0))
    p0_angvel: np.ndarray = field(default_factory=lambda: _v3(0.0))
    p0_gyro_bias: np.ndarray = field(default_factory=lambda: _v3(1e-2))
    p0_ext_force: np.ndarray = field(default_factory=lambda: _v3(0.0))
    p0_ext_torque: np.ndarray = field(default_factory=lambda: _v3(0.0))

    # initial variances granted to every newly created contact
    c0_rest_pos: np.ndarray = field(default_factory=lambda: _v3((1e-9, 1e-8, 1e-8)))
    c0_rest_ori: np.ndarray = field(default_factory=lambda: _v3(1e-6))
    c0_force: np.ndarray = field(default_factory=lambda: _v3(400.0))
    c0_torque: np.ndarray = field(default_factory=lambda: _v3(360.0))

    # measurement variances
    r_gyro: np.ndarray = field(default_factory=lambda: _v3(1e-6))
    r_accel: np.ndarray = field(default_factory=lambda: _v3(1e-4))
    r_force: np.ndarray = field(default_factory=lambda: _v3(20.0))
    r_torque: np.ndarray = field(default_factory=lambda: _v3(1.5))

    def __post_init__(self):
        for name, value in vars(self).items():
            setattr(self, name, _v3(value))

    @classmethod
    def default(cls) -> "NoiseConfig":
        return cls()

    def with_overrides(self, **blocks) -> "NoiseConfig":
        """Copy with named blocks replaced (values: scalar or 3-vector)."""
        return replace(self, **{k: _v3(v) for k, v in blocks.items()})

    # --- assembled diagonals, ordered like the state tangent space ---------
    def contact_init_diag(self) -> np.ndarray:
        return np.concatenate([self.c0_rest_pos, self.c0_rest_ori, self.c0_force, self.c0_torque])

    def _state_diag(self, layout, pos, ori, vel, angvel, bias, fe, te, rp, ro, cf, ct) -> np.ndarray:
        parts = [pos, ori, vel, angvel]
        parts += [bias] * layout.n_imus
        parts += [fe, te]
        parts += [rp, ro, cf, ct] * len(layout.contact_ids)
        return np.concatenate(parts) if parts else np.zeros(0)

    def process_diag(self, layout) -> np.ndarray:
        """Diagonal of Q for a state with the given layout."""
        return self._state_diag(
            layout, self.q_pos, self.q_ori, self.q_vel, self.q_angvel, self.q_gyro_bias,
            self.q_ext_force, self.q_ext_torque, self.q_rest_pos, self.q_rest_ori,
            self.q_contact_force, self.q_contact_torque,
        )

    def initial_diag(self, layout) -> np.ndarray:
        """Diagonal of P0; contact blocks get the new-contact values."""
        return self._state_diag(
            layout, self.p0_pos, self.p0_ori, self.p0_vel, self.p0_angvel, self.p0_gyro_bias,
            self.p0_ext_force, self.p0_ext_torque, self.c0_rest_pos, self.c0_rest_ori,
            self.c0_force, self.c0_torque,
        )

    def measurement_diag(self, layout) -> np.ndarray:
        """Diagonal of R for the fully populated measurement stack."""
        parts = [self.r_accel, self.r_gyro] * layout.n_imus
        parts += [self.r_force, self.r_torque] * len(layout.contact_ids)
        return np.concatenate(parts) if parts else np.zeros(0)
