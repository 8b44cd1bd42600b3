"""Standing still: the filter pulls a deliberately wrong initial pose onto
the true one using only contact wrenches and the IMU.

The filter starts 5 cm to the side and 5 degrees pitched; the contact
reference poses pin the world frame, and the wrench innovations do the rest.

Run:  python demos/02_standing_convergence.py
"""

import numpy as np

from leggedkf import load_config, run

config = load_config("configs/standing.cfg")
result = run(config)
m = result.metrics

print("initial position error:", f"{m.pos_err_est[0] * 100:.1f} cm")
print()
print("convergence:")
for s in (0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 8.0):
    k = min(int(s / 0.005), len(m.t) - 1)
    print(f"  t={s:5.2f} s   position error {m.pos_err_est[k] * 1000:9.4f} mm"
          f"   yaw error {np.degrees(m.yaw_err_est[k]):8.5f} deg")
print()
est = result.logs.estimate
k = len(m.t) - 1
print("final per-foot vertical force estimates:",
      f"{est['c0_fz'][k]:.2f} N, {est['c1_fz'][k]:.2f} N",
      f"(half weight = {100 * 9.81 / 2:.2f} N)")
print()
print(m.summary())
