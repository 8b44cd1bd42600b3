"""Canned scenario builders.

Each builder returns a :class:`SimScenario` from a handful of flat
parameters, so scenarios round-trip through plain config files.  The walk
builder also pre-generates its per-stance slippage schedule from the
scenario seed (each slip is a short ramp of small anchor displacements, a
slide rather than a hammer blow).
"""

from __future__ import annotations

import numpy as np

from .contact import StiffnessDamping
from .simulator import EffectorScript, ImuMount, SensorNoise, SimScenario, SlipEvent
from .so3 import Rotation

__all__ = [
    "standing_scenario",
    "tripod_scenario",
    "walk_scenario",
    "free_fall_scenario",
]

_DEFAULT_INERTIA = np.diag([10.0, 10.0, 5.0])


def _noise(noise_on: bool, scale: float = 1.0) -> SensorNoise:
    if not noise_on:
        return SensorNoise.silent()
    base = SensorNoise()
    return SensorNoise(base.gyro * scale, base.accel * scale, base.force * scale, base.torque * scale)


def standing_scenario(
    mass: float = 100.0,
    duration: float = 8.0,
    dt: float = 0.005,
    seed: int = 0,
    half_spacing: float = 0.1,
    height: float = 0.9,
    noise_on: bool = False,
    flex: StiffnessDamping | None = None,
    gyro_bias_offset=(0.0, 0.0, 0.0),
    gyro_bias_walk_std: float = 0.0,
    truth_flex_scale: float = 1.0,
) -> SimScenario:
    """Two feet, static stance, pre-settled at exact equilibrium."""
    flex = flex if flex is not None else StiffnessDamping.default()
    effectors = []
    for cid, side in ((0, 1.0), (1, -1.0)):
        offset = np.array([0.0, side * half_spacing, -height])
        effectors.append(
            EffectorScript.fixed(
                cid, offset, flex=flex,
                planned_pose=(offset + np.array([0.0, 0.0, height]), Rotation.identity()),
            )
        )
    return SimScenario(
        mass=mass, inertia=_DEFAULT_INERTIA, effectors=effectors,
        imus=[ImuMount()], noise=_noise(noise_on),
        gyro_bias_offset=np.asarray(gyro_bias_offset, dtype=float),
        gyro_bias_walk_std=gyro_bias_walk_std,
        seed=seed, dt=dt, duration=duration,
        truth_flex_scale=truth_flex_scale,
        initial_position=np.array([0.0, 0.0, height]),
    )


def tripod_scenario(
    mass: float = 100.0,
    duration: float = 12.0,
    dt: float = 0.005,
    seed: int = 0,
    noise_on: bool = True,
    hand_share: float = 0.2,
    height: float = 0.9,
    flex: StiffnessDamping | None = None,
) -> SimScenario:
    """Two feet plus a hand-like third contact carrying ``hand_share`` of the
    weight (through the support geometry), used for hidden-contact runs."""
    flex = flex if flex is not None else StiffnessDamping.default()
    if not 0.05 <= hand_share <= 0.5:
        raise ValueError(f"hand share {hand_share} outside the supported range")
    # support points at x_f (feet) and x_h (hand) with the CoM above x = 0:
    # the hand carries x_f / (x_f - x_h) of the weight
    x_h = 0.8
    x_f = -hand_share * x_h / (1.0 - hand_share)
    effectors = []
    for cid, (x_off, y_off) in ((0, (x_f, 0.25)), (1, (x_f, -0.25))):
        offset = np.array([x_off, y_off, -height])
        effectors.append(
            EffectorScript.fixed(
                cid, offset, flex=flex,
                planned_pose=(offset + np.array([0.0, 0.0, height]), Rotation.identity()),
            )
        )
    hand_offset = np.array([x_h, 0.0, -height])
    effectors.append(
        EffectorScript.fixed(
            2, hand_offset, flex=flex, is_foot=False,
            planned_pose=(hand_offset + np.array([0.0, 0.0, height]), Rotation.identity()),
        )
    )
    return SimScenario(
        mass=mass, inertia=_DEFAULT_INERTIA, effectors=effectors,
        imus=[ImuMount()], noise=_noise(noise_on),
        seed=seed, dt=dt, duration=duration,
        initial_position=np.array([0.0, 0.0, height]),
    )


def _stance_profile(stride: float, lift: float, height: float, period: float,
                    duty: float, phase: float, warmup: float, cooldown: float,
                    sag: float, rise_frac: float = 0.35, approach_frac: float = 0.45):
    """Foot mount trajectory: backward sweep in stance, three-phase swing.

    The swing rises with zero corner slope (gentle unload), returns over a
    smooth bridge, then descends through the ground crossing on a slow
    linear approach whose speed is set by the expected static sag; a fast
    crossing multiplies through the contact damping into an impact spike.
    Returns (pos(t), vel(t), down(t)).  Outside [warmup, cooldown] the mount
    freezes at the gait's boundary configuration, keeping the trajectory
    continuous; the caller picks a cooldown instant in double support.
    """
    sweep_rate = stride / (duty * period)
    t_swing = (1.0 - duty) * period
    a = rise_frac
    b = 1.0 - approach_frac
    z_app = 1.2 * sag          # approach entry, just above the loaded level
    z_end = -0.6 * sag         # commanded stance depth (slightly through)
    slope_land = (z_end - z_app) / (1.0 - b)  # per unit swing phase

    def z_swing(sw):
        if sw < a:
            return z_end + (lift - z_end) * np.sin(0.5 * np.pi * sw / a) ** 2
        if sw < b:
            # cubic Hermite bridge (lift, slope 0) -> (z_app, slope_land)
            u = (sw - a) / (b - a)
            h00 = (1.0 + 2.0 * u) * (1.0 - u) ** 2
            h10 = u * (1.0 - u) ** 2
            h01 = u * u * (3.0 - 2.0 * u)
            h11 = u * u * (u - 1.0)
            return h00 * lift + h01 * z_app + h11 * slope_land * (b - a)
        return z_app + slope_land * (sw - b)

    def dz_swing(sw):
        if sw < a:
            return (lift - z_end) * 0.5 * np.pi / a * np.sin(np.pi * sw / a)
        if sw < b:
            u = (sw - a) / (b - a)
            dh00 = 6.0 * u * (u - 1.0)
            dh01 = -dh00
            dh11 = u * (3.0 * u - 2.0)
            return (dh00 * lift + dh01 * z_app) / (b - a) + dh11 * slope_land
        return slope_land

    def raw_pos(tau):
        s = (tau / period + phase) % 1.0
        if s < duty:  # stance: sweep from +stride/2 to -stride/2
            x = 0.5 * stride - sweep_rate * s * period
            return np.array([x, 0.0, -height + z_end])
        sw = (s - duty) / (1.0 - duty)
        # the x return completes before the landing approach begins: the
        # foot touches down moving purely vertically
        sx = min(sw / b, 1.0)
        x = -0.5 * stride + stride * 0.5 * (1.0 - np.cos(np.pi * sx))
        return np.array([x, 0.0, -height + z_swing(sw)])

    def pos(t):
        tau = min(max(t, warmup), cooldown) - warmup
        return raw_pos(tau)

    def vel(t):
        if not warmup <= t < cooldown:
            return np.zeros(3)
        s = ((t - warmup) / period + phase) % 1.0
        if s < duty:
            return np.array([-sweep_rate, 0.0, 0.0])
        sw = (s - duty) / (1.0 - duty)
        dx = 0.0
        if sw < b:
            dx = stride * 0.5 * np.pi * np.sin(np.pi * sw / b) / (b * t_swing)
        dz = dz_swing(sw) / t_swing
        return np.array([dx, 0.0, dz])

    def down(t):
        # allowed-contact window: the whole stance, the early swing (so the
        # foot unloads through the tension break rather than a hard cut) and
        # the landing approach (so it engages at its natural crossing)
        tau = min(max(t, warmup), cooldown) - warmup
        s = (tau / period + phase) % 1.0
        if s < duty:
            return True
        sw = (s - duty) / (1.0 - duty)
        return sw <= 0.5 * a or sw >= b

    return pos, vel, down


def walk_scenario(
    mass: float = 100.0,
    duration: float = 60.0,
    dt: float = 0.005,
    seed: int = 0,
    stride: float = 0.08,
    lift: float = 0.05,
    period: float = 1.2,
    duty: float = 0.67,
    half_spacing: float = 0.08,
    height: float = 0.9,
    warmup: float = 2.0,
    noise_on: bool = True,
    slip_range: tuple = (0.002, 0.005),
    slip_on: bool = True,
    gyro_bias_offset=(0.0, 0.0, 0.0),
    gyro_bias_walk_std: float = 0.0,
    flex: StiffnessDamping | None = None,
    truth_flex_scale: float = 1.0,
) -> SimScenario:
    """Alternating two-foot gait with per-stance anchor slippage.

    The stance foot sweeps backward in the body frame, which propels the
    body forward over its world-fixed anchor.  Once per stance (mid-stance)
    the true anchor slides 2-5 mm in a random horizontal direction over a
    handful of steps.

    The default flexibility differs from the standing scenario: a medium
    linear stiffness keeps the contact dynamics well below the sensor
    Nyquist rate, damping is strong enough to kill transfer bounces between
    steps, and the ankle is stiff enough that single support is statically
    stable through the springs alone (the body walks open loop, there is no
    balance controller).  The swing lift must stay well above the static
    sag so touchdown and lift-off pass gently through the ground plane.
    """
    flex = flex if flex is not None else StiffnessDamping(1e5, 1500.0, 2e4, 400.0)
    # static sag of a single loaded foot sets the landing approach speed
    sag = mass * 9.81 / float(flex.linear_stiffness[2])
    # end the gait at a double-support instant (both phases in stance) so the
    # frozen final configuration stands on both feet
    n_periods = max(0, int(np.floor((duration - 1.0 - warmup) / period)))
    cooldown = warmup + n_periods * period + 0.05 * period
    effectors = []
    offsets = {0: np.array([0.0, half_spacing, 0.0]), 1: np.array([0.0, -half_spacing, 0.0])}
    profiles = {}
    for cid, phase in ((0, 0.0), (1, 0.5)):
        pos_fn, vel_fn, down_fn = _stance_profile(
            stride, lift, height, period, duty, phase, warmup, cooldown, sag
        )
        side = offsets[cid]
        profiles[cid] = (pos_fn, down_fn)
        effectors.append(
            EffectorScript(
                cid,
                mount_pos=(lambda t, f=pos_fn, o=side: f(t) + o),
                mount_vel=(lambda t, f=vel_fn: f(t)),
                scheduled_down=down_fn,
                flex=flex,
            )
        )

    slip_events: list[SlipEvent] = []
    if slip_on:
        slip_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        ramp_steps = 6
        for cid, phase in ((0, 0.0), (1, 0.5)):
            _, down_fn = profiles[cid]
            stance_start = warmup - phase * period
            while stance_start < warmup:
                stance_start += period
            t = stance_start
            while t + duty * period < cooldown - period:
                magnitude = slip_rng.uniform(slip_range[0], slip_range[1])
                angle = slip_rng.uniform(0.0, 2.0 * np.pi)
                direction = np.array([np.cos(angle), np.sin(angle), 0.0])
                mid = t + 0.35 * duty * period
                start_step = int(np.ceil(mid / dt))
                for k in range(ramp_steps):
                    slip_events.append(
                        SlipEvent(cid, (start_step + k) * dt,
                                  magnitude / ramp_steps * direction, require_active=False)
                    )
                t += period
        slip_events.sort(key=lambda e: e.time)

    return SimScenario(
        mass=mass, inertia=_DEFAULT_INERTIA, effectors=effectors,
        imus=[ImuMount()], noise=_noise(noise_on),
        gyro_bias_offset=np.asarray(gyro_bias_offset, dtype=float),
        gyro_bias_walk_std=gyro_bias_walk_std,
        slip_events=slip_events,
        seed=seed, dt=dt, duration=duration,
        initial_position=np.array([0.0, 0.0, height]),
        truth_flex_scale=truth_flex_scale,
    )


def free_fall_scenario(
    mass: float = 100.0, duration: float = 0.5, dt: float = 0.005, seed: int = 0,
    noise_on: bool = False,
) -> SimScenario:
    """No contacts: the body falls freely (weightless sensors)."""
    return SimScenario(
        mass=mass, inertia=_DEFAULT_INERTIA, effectors=[],
        imus=[ImuMount()], noise=_noise(noise_on),
        seed=seed, dt=dt, duration=duration,
        initial_position=np.array([0.0, 0.0, 5.0]),
        settle=False,
    )
