"""Predicted sensor outputs.

Wrench sensors read the contact wrench states directly.  The gyro reads the
IMU-frame angular velocity plus its bias state.  The accelerometer is
predicted from the Newton-Euler linear acceleration of the centroid (a
function of the estimated wrenches) plus mounting and gravity terms, which
makes it behave as a whole-body force sensor rather than a differentiated
position.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from .dynamics import GRAVITY, angular_acceleration, linear_acceleration
from .state import EstimatorState, InputFrame, MeasurementFrame

__all__ = [
    "predict_contact_wrench",
    "predict_gyro",
    "predict_accelerometer",
    "assemble_measurement_prediction",
]


def predict_contact_wrench(x: EstimatorState, contact_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Predicted (force, torque) reading of the contact's wrench sensor."""
    c = x.contact(contact_id)
    return c.force.copy(), c.torque.copy()


def predict_gyro(x: EstimatorState, u: InputFrame, imu_index: int) -> np.ndarray:
    """Predicted rate reading of IMU ``imu_index``, including its bias state."""
    imu = u.imus[imu_index]
    return imu.rotation.matrix.T @ (imu.angular_velocity + x.angvel_local) + x.gyro_biases[imu_index]


def predict_accelerometer(x: EstimatorState, u: InputFrame, imu_index: int) -> np.ndarray:
    """Predicted specific-force reading of IMU ``imu_index``.

    Combines the mounting terms (tangential, centripetal and Coriolis from
    the IMU offset), gravity seen from the body, the centroid linear
    acceleration from the force balance, and the IMU's own acceleration
    relative to the centroid.
    """
    imu = u.imus[imu_index]
    w = x.angvel_local
    wd = angular_acceleration(x, u)
    a_l = linear_acceleration(x, u)
    mounting = (
        np.cross(wd, imu.position)
        + np.cross(w, np.cross(w, imu.position))
        + 2.0 * np.cross(w, imu.velocity)
    )
    body = GRAVITY * x.rot.matrix[2, :] + a_l + imu.acceleration
    return imu.rotation.matrix.T @ (mounting + body)


def assemble_measurement_prediction(
    x: EstimatorState,
    u: InputFrame,
    imu_present: Optional[Sequence[bool]] = None,
    wrench_present: Optional[Mapping[int, bool]] = None,
) -> MeasurementFrame:
    """Predicted measurement frame for the given sensor availability.

    Only sensors flagged present contribute entries; the stacked order is
    all IMUs (accelerometer then gyro) followed by contact wrench sensors in
    ascending contact-id order.
    """
    n_imus = len(u.imus)
    if imu_present is None:
        imu_present = [True] * n_imus
    if len(imu_present) != n_imus:
        raise ValueError(f"expected {n_imus} IMU flags, got {len(imu_present)}")
    imus = []
    for j, present in enumerate(imu_present):
        if present:
            imus.append((predict_accelerometer(x, u, j), predict_gyro(x, u, j)))
        else:
            imus.append(None)
    wrenches = {}
    for cid in x.contact_ids:
        if wrench_present is None or wrench_present.get(cid, False):
            wrenches[cid] = predict_contact_wrench(x, cid)
    return MeasurementFrame(imus=imus, wrenches=wrenches)
