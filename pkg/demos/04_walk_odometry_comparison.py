"""Walking odometry: tightly coupled filter vs classic legged odometry.

A scripted 60 s walk where each stance foot slides 2-5 mm mid-stance.  The
baseline dead-reckons from contact anchors and inherits every slip; the
filter cross-checks anchors against the wrench sensors and the IMU and
rejects most of the slippage.

Run:  python demos/04_walk_odometry_comparison.py        (about a minute)
"""

import numpy as np

from leggedkf import load_config, run

config = load_config("configs/walk.cfg")
result = run(config)
m = result.metrics

print(f"walked {result.logs.truth['px'][-1]:.2f} m in {m.t[-1]:.0f} s "
      f"with {len(result.sim.scenario.slip_events)} scripted anchor-slip events")
print()
print(f"{'time':>6} | {'filter pos err':>15} | {'baseline pos err':>17}")
for s in (10.0, 20.0, 30.0, 40.0, 50.0, 60.0):
    k = min(int(s / result.sim.scenario.dt), len(m.t) - 1)
    print(f"{s:5.0f}s | {m.pos_err_est[k] * 100:13.2f} cm | {m.pos_err_base[k] * 100:15.2f} cm")
print()
improvement = 1.0 - m.final_pos_err_est / m.final_pos_err_base
print(f"final: filter {m.final_pos_err_est * 100:.2f} cm vs baseline "
      f"{m.final_pos_err_base * 100:.2f} cm  ({improvement * 100:.0f}% better)")
print(f"yaw:   filter {np.degrees(m.final_yaw_err_est):.3f} deg vs baseline "
      f"{np.degrees(m.final_yaw_err_base):.3f} deg")
