"""Rotation primitives and the visco-elastic contact law, by example.

Run:  python demos/01_rotations_and_contacts.py
"""

import numpy as np

from leggedkf import Rotation, StiffnessDamping, so3
from leggedkf.contact import Discrepancy, viscoelastic_wrench

print("=== rotation primitives ===")
r = Rotation.exp([0.0, 0.0, np.pi / 2])
print("quarter turn about z maps e_x to:", np.round(r.apply([1.0, 0.0, 0.0]), 12))
print("log recovers the rotation vector:", np.round(r.rotvec(), 12))

rng = np.random.default_rng(0)
a, b = Rotation.random(rng), Rotation.random(rng)
mid = so3.interpolate(a, b, 0.5)
print("geodesic midpoint is equidistant:",
      f"{a.angle_to(mid):.6f} rad vs {mid.angle_to(b):.6f} rad")

yaw, tilt = so3.split_yaw_tilt(a)
print(f"yaw/tilt split: yaw={yaw:+.4f} rad, tilt angle={tilt.angle_to(Rotation.identity()):.4f} rad")

print()
print("=== spring-damper contact ===")
flex = StiffnessDamping.default()
print("sole stiffness:", flex.linear_stiffness[2], "N/m")

# compress the contact 2 mm into the ground
d = Discrepancy(
    lin_offset=np.array([0.0, 0.0, -0.002]),
    lin_velocity=np.zeros(3),
    rot_offset=Rotation.identity(),
    ang_velocity=np.zeros(3),
)
force, torque = viscoelastic_wrench(d, Rotation.identity(), flex)
print("2 mm compression pushes back with", np.round(force, 3), "N")

# twist the foot 0.02 rad about x
d = Discrepancy(np.zeros(3), np.zeros(3), Rotation.exp([0.02, 0.0, 0.0]), np.zeros(3))
_, torque = viscoelastic_wrench(d, Rotation.identity(), flex)
print("0.02 rad twist resists with   ", np.round(torque, 3), "N m",
      f"(sin factor {np.sin(0.02)/0.02:.6f})")
