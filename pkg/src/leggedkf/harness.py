"""End-to-end runs: simulate, estimate, compare, log.

The pipeline feeds the simulator streams through contact detection, rest-
pose initialization and the filter, runs the baseline odometry alongside
(with the filter's tilt), and records everything as flat column tables.
The CSV files are loss-free: floats are written with shortest round-trip
formatting so re-reading the logs and recomputing the metrics reproduces
the in-memory values exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace as dc_replace
from typing import Optional

import numpy as np

from . import mekf
from .config import EstimatorSettings, RunConfig
from .noise import NoiseConfig
from .odometry import ContactTracker, OdometryMode, apply_mode, init_rest_pose_6d
from .baseline import BaselineOdometry
from .simulator import SimResult, simulate
from .so3 import Rotation, yaw_of
from .state import EstimatorState, InputFrame, MeasurementFrame, add_contact, remove_contact

__all__ = [
    "EstimatorDiverged",
    "RunLogs",
    "RunMetrics",
    "RunResult",
    "run_estimation",
    "compute_metrics",
    "run",
    "write_csv",
    "read_csv",
    "CSV_SCHEMA_VERSION",
]

CSV_SCHEMA_VERSION = 1


class EstimatorDiverged(RuntimeError):
    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"estimator state became non-finite at step {step}{detail}")


@dataclass
class RunLogs:
    """Column tables for one run (see ``write_csv`` for the layouts)."""

    effector_ids: tuple
    n_imus: int
    truth: dict
    estimate: dict
    baseline: Optional[dict]
    step_times: np.ndarray


@dataclass
class RunMetrics:
    """Per-step error traces and summary statistics."""

    t: np.ndarray
    pos_err_est: np.ndarray
    pos_err_base: np.ndarray
    yaw_err_est: np.ndarray
    yaw_err_base: np.ndarray
    bias_err: np.ndarray
    ext_force_err: np.ndarray
    step_time_us: np.ndarray

    @property
    def final_pos_err_est(self) -> float:
        return float(self.pos_err_est[-1])

    @property
    def final_pos_err_base(self) -> float:
        return float(self.pos_err_base[-1])

    @property
    def final_yaw_err_est(self) -> float:
        return float(self.yaw_err_est[-1])

    @property
    def final_yaw_err_base(self) -> float:
        return float(self.yaw_err_base[-1])

    @property
    def mean_step_time_us(self) -> float:
        valid = self.step_time_us[self.step_time_us > 0.0]
        return float(valid.mean()) if valid.size else 0.0

    @property
    def p99_step_time_us(self) -> float:
        valid = self.step_time_us[self.step_time_us > 0.0]
        return float(np.percentile(valid, 99)) if valid.size else 0.0

    def summary(self) -> str:
        lines = [
            f"final position error (estimator): {self.final_pos_err_est * 100.0:.3f} cm",
            f"final yaw error (estimator):      {np.degrees(self.final_yaw_err_est):.4f} deg",
        ]
        if np.isfinite(self.final_pos_err_base):
            lines += [
                f"final position error (baseline):  {self.final_pos_err_base * 100.0:.3f} cm",
                f"final yaw error (baseline):       {np.degrees(self.final_yaw_err_base):.4f} deg",
            ]
        lines += [
            f"final gyro-bias error:            {self.bias_err[-1]:.3e} rad/s",
            f"filter iteration wall time:       mean {self.mean_step_time_us:.0f} us, "
            f"p99 {self.p99_step_time_us:.0f} us",
        ]
        return "\n".join(lines)


@dataclass
class RunResult:
    config: RunConfig
    sim: SimResult
    logs: RunLogs
    metrics: RunMetrics
    paths: dict


# --------------------------------------------------------------------------
# pipeline


def _initial_state(sim: SimResult, settings: EstimatorSettings) -> EstimatorState:
    truth0 = sim.truth[0]
    rot0 = Rotation.exp(settings.init_rotvec_offset) @ truth0.rotation
    p_world = truth0.position + settings.init_pos_offset
    n_imus = len(sim.scenario.imus)
    return EstimatorState(
        rot0.matrix.T @ p_world, rot0, np.zeros(3), np.zeros(3),
        np.zeros((n_imus, 3)), np.zeros(3), np.zeros(3), [],
    )


def run_estimation(sim: SimResult, settings: EstimatorSettings) -> RunLogs:
    """Feed the simulated streams through detection, the filter and the
    baseline; returns the full log tables."""
    scn = sim.scenario
    noise = settings.noise
    hidden = settings.hidden_contacts
    effectors = {e.contact_id: e for e in scn.effectors}
    effector_ids = tuple(sorted(effectors))
    n_imus = len(scn.imus)
    n_steps = sim.n_steps

    x = _initial_state(sim, settings)
    P = np.diag(noise.initial_diag(x.layout()))
    tracker = ContactTracker(
        mass=scn.mass, fraction=settings.threshold_fraction,
        hysteresis=settings.hysteresis, break_ratio=settings.break_ratio,
    )
    baseline = None
    if settings.baseline_on:
        baseline = BaselineOdometry(
            x.world_position, x.rot,
            planar=settings.mode is OdometryMode.PLANAR,
            ground_height=settings.ground_height,
        )

    log = _LogBuffers(effector_ids, n_imus, n_steps, hidden)
    log.record_truth(0, sim, effectors)
    log.record_estimate(0, x, P, noise)
    if baseline is not None:
        log.record_baseline(0, baseline.position, baseline.rotation)

    for k in range(n_steps):
        u_sim = sim.inputs[k]
        frame_k = sim.sensors[k]

        force_norms = {
            cid: float(np.linalg.norm(f))
            for cid, (f, _) in frame_k.wrenches.items()
            if cid not in hidden
        }
        active, made, broken = tracker.update(force_norms)

        for cid in sorted(broken):
            x, P = remove_contact(x, P, cid)
            if baseline is not None:
                baseline.contact_broken(cid)
        for cid in sorted(made):
            ci = u_sim.contacts[cid]
            # average the two readings bracketing t[k]: sensor frames are
            # interval averages centered half a tick early, and a half-tick
            # skew against the forward-kinematics pose bakes a millimeter
            # bias into every new anchor at walking speeds
            f_k, t_k = frame_k.wrenches[cid]
            f_n, t_n = sim.sensors[k + 1].wrenches[cid]
            f_meas, t_meas = 0.5 * (f_k + f_n), 0.5 * (t_k + t_n)
            guess_pos, guess_rot = init_rest_pose_6d(x, ci, f_meas, t_meas, ci.flex)
            reference = effectors[cid].planned_pose
            try:
                guess_pos, guess_rot = apply_mode(
                    guess_pos, guess_rot, settings.mode,
                    ground_height=settings.ground_height, reference=reference,
                )
            except ValueError as exc:
                raise ValueError(f"contact {cid}: {exc}") from None
            ci = dc_replace(ci, rest_pose_guess=(guess_pos, guess_rot))
            x, P = add_contact(
                x, P, cid, ci, noise.contact_init_diag(), measured_wrench=(f_meas, t_meas)
            )
            if baseline is not None:
                baseline.contact_made(cid, ci.position, ci.rotation, effectors[cid].is_foot)

        # the filter consumes the measurement-time inputs: predicted wrench
        # states are compared against the wrenches measured at t[k+1], so the
        # contact kinematics must be sampled there too (a stiff spring turns
        # a millimeter of mount lag into hundreds of newtons of innovation)
        u_next = sim.inputs[k + 1]
        frame_next = sim.sensors[k + 1]

        # below-threshold and broken sensors feed the residual wrench input
        fres = np.zeros(3)
        tres = np.zeros(3)
        for cid, (f_meas, t_meas) in frame_next.wrenches.items():
            if cid in hidden or cid in active:
                continue
            ci = u_next.contacts[cid]
            rc = ci.rotation.matrix
            fres += rc @ f_meas
            tres += rc @ t_meas + np.cross(ci.position, rc @ f_meas)

        u = InputFrame(
            mass=scn.mass, inertia=u_next.inertia,
            force_residual=fres, torque_residual=tres,
            contacts={cid: u_next.contacts[cid] for cid in sorted(active)},
            imus=u_next.imus, validate=False,
        )
        y = MeasurementFrame(
            imus=list(frame_next.imus),
            wrenches={
                cid: frame_next.wrenches[cid]
                for cid in sorted(active)
                if cid in frame_next.wrenches
            },
        )
        x, P, diag = mekf.step(x, P, u, y, noise, scn.dt, settings.fd_eps)
        if not (np.all(np.isfinite(x.pos_local)) and np.all(np.isfinite(P))):
            raise EstimatorDiverged(k)
        log.step_times[k] = diag.wall_time

        log.record_truth(k + 1, sim, effectors)
        log.record_estimate(k + 1, x, P, noise)
        if baseline is not None:
            u_next = sim.inputs[k + 1]
            norms_next = {
                cid: float(np.linalg.norm(f))
                for cid, (f, _) in frame_next.wrenches.items()
                if cid not in hidden
            }
            offsets = {cid: u_next.contacts[cid].position for cid in baseline.anchors}
            rots = {cid: u_next.contacts[cid].rotation for cid in baseline.anchors}
            base_pos, base_rot = baseline.update(offsets, rots, norms_next, tilt_source=x.rot)
            log.record_baseline(k + 1, base_pos, base_rot)

    return log.finish()


class _LogBuffers:
    def __init__(self, effector_ids, n_imus, n_steps, hidden):
        n = n_steps + 1
        self.effector_ids = effector_ids
        self.n_imus = n_imus
        self.hidden = hidden
        self.truth_core = np.zeros((n, 14))
        self.truth_contacts = np.zeros((n, len(effector_ids), 14))
        self.truth_bias = np.zeros((n, n_imus, 3))
        self.truth_ext = np.zeros((n, 6))
        self.est_core = np.zeros((n, 14))
        self.est_contacts = np.zeros((n, len(effector_ids), 14))
        self.est_bias = np.zeros((n, n_imus, 3))
        self.est_ext = np.zeros((n, 6))
        self.est_cov_core = np.zeros((n, 12 + 3 * n_imus + 6))
        self.est_cov_contacts = np.zeros((n, len(effector_ids), 12))
        self.base_core = np.zeros((n, 8))
        self.step_times = np.zeros(n_steps)
        self.has_baseline = False

    def record_truth(self, k, sim, effectors):
        rec = sim.truth[k]
        u = sim.inputs[k]
        row = self.truth_core[k]
        row[0] = rec.t
        row[1:4] = rec.position
        row[4:8] = rec.rotation.quat
        row[8:11] = rec.vel_local
        row[11:14] = rec.angvel_local
        for i, cid in enumerate(self.effector_ids):
            if cid in rec.contacts:
                pos, rot, force, torque = rec.contacts[cid]
                slot = self.truth_contacts[k, i]
                slot[0] = 1.0
                slot[1:4] = pos
                slot[4:8] = rot.quat
                slot[8:11] = force
                slot[11:14] = torque
        self.truth_bias[k] = rec.gyro_bias
        # external wrench from the estimator's viewpoint: scenario
        # perturbations plus the centroid-frame wrench of hidden contacts
        ext_f = rec.ext_force.copy()
        ext_t = rec.ext_torque.copy()
        for cid in self.hidden:
            if cid in rec.contacts:
                _, _, force, torque = rec.contacts[cid]
                ci = u.contacts[cid]
                rc = ci.rotation.matrix
                ext_f += rc @ force
                ext_t += rc @ torque + np.cross(ci.position, rc @ force)
        self.truth_ext[k, 0:3] = ext_f
        self.truth_ext[k, 3:6] = ext_t

    def record_estimate(self, k, x, P, noise):
        row = self.est_core[k]
        row[0] = self.truth_core[k, 0]
        row[1:4] = x.world_position
        row[4:8] = x.rot.quat
        row[8:11] = x.vel_local
        row[11:14] = x.angvel_local
        self.est_bias[k] = x.gyro_biases
        self.est_ext[k, 0:3] = x.ext_force
        self.est_ext[k, 3:6] = x.ext_torque
        lay = x.layout()
        diag = np.diag(P)
        core_dim = 12 + 3 * self.n_imus + 6
        self.est_cov_core[k] = diag[:core_dim]
        for i, cid in enumerate(self.effector_ids):
            if cid in lay.contact:
                c = x.contact(cid)
                slot = self.est_contacts[k, i]
                slot[0] = 1.0
                slot[1:4] = c.rest_position
                slot[4:8] = c.rest_orientation.quat
                slot[8:11] = c.force
                slot[11:14] = c.torque
                sl = lay.contact[cid]
                self.est_cov_contacts[k, i] = diag[sl.rest_pos.start : sl.torque.stop]

    def record_baseline(self, k, pos, rot):
        self.has_baseline = True
        row = self.base_core[k]
        row[0] = self.truth_core[k, 0]
        row[1:4] = pos
        row[4:8] = rot.quat

    def finish(self) -> RunLogs:
        ids = self.effector_ids

        def state_table(core, contacts, bias, ext, cov_core=None, cov_contacts=None):
            table = {
                "t": core[:, 0],
                "px": core[:, 1], "py": core[:, 2], "pz": core[:, 3],
                "qw": core[:, 4], "qx": core[:, 5], "qy": core[:, 6], "qz": core[:, 7],
                "vx": core[:, 8], "vy": core[:, 9], "vz": core[:, 10],
                "wx": core[:, 11], "wy": core[:, 12], "wz": core[:, 13],
            }
            names = ["active", "prx", "pry", "prz", "qw", "qx", "qy", "qz",
                     "fx", "fy", "fz", "tx", "ty", "tz"]
            for i, cid in enumerate(ids):
                for j, name in enumerate(names):
                    table[f"c{cid}_{name}"] = contacts[:, i, j]
            for j in range(bias.shape[1]):
                for a, ax in enumerate("xyz"):
                    table[f"bias{j}_{ax}"] = bias[:, j, a]
            for a, ax in enumerate("xyz"):
                table[f"extF{ax}"] = ext[:, a]
                table[f"extT{ax}"] = ext[:, 3 + a]
            if cov_core is not None:
                for j in range(cov_core.shape[1]):
                    table[f"cov{j}"] = cov_core[:, j]
                for i, cid in enumerate(ids):
                    for j in range(12):
                        table[f"c{cid}_cov{j}"] = cov_contacts[:, i, j]
            return table

        truth = state_table(self.truth_core, self.truth_contacts, self.truth_bias, self.truth_ext)
        estimate = state_table(
            self.est_core, self.est_contacts, self.est_bias, self.est_ext,
            self.est_cov_core, self.est_cov_contacts,
        )
        baseline = None
        if self.has_baseline:
            baseline = {
                "t": self.base_core[:, 0],
                "px": self.base_core[:, 1], "py": self.base_core[:, 2], "pz": self.base_core[:, 3],
                "qw": self.base_core[:, 4], "qx": self.base_core[:, 5],
                "qy": self.base_core[:, 6], "qz": self.base_core[:, 7],
            }
        return RunLogs(ids, self.n_imus, truth, estimate, baseline, self.step_times)


# --------------------------------------------------------------------------
# metrics


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _yaw_series(table):
    n = table["t"].shape[0]
    out = np.empty(n)
    for k in range(n):
        out[k] = yaw_of(Rotation((table["qw"][k], table["qx"][k], table["qy"][k], table["qz"][k])))
    return out


def compute_metrics(
    truth: dict,
    estimate: dict,
    baseline: Optional[dict] = None,
    step_times_us: Optional[np.ndarray] = None,
) -> RunMetrics:
    """Error traces from log tables (in-memory or re-read from CSV)."""
    t = truth["t"]
    n = t.shape[0]
    if estimate["t"].shape[0] != n or (baseline is not None and baseline["t"].shape[0] != n):
        raise ValueError("log streams have mismatched lengths")

    def pos_of(table):
        return np.stack([table["px"], table["py"], table["pz"]], axis=1)

    pos_err_est = np.linalg.norm(pos_of(estimate) - pos_of(truth), axis=1)
    yaw_truth = _yaw_series(truth)
    yaw_err_est = np.abs(_wrap_angle(_yaw_series(estimate) - yaw_truth))
    if baseline is not None:
        pos_err_base = np.linalg.norm(pos_of(baseline) - pos_of(truth), axis=1)
        yaw_err_base = np.abs(_wrap_angle(_yaw_series(baseline) - yaw_truth))
    else:
        pos_err_base = np.full(n, np.nan)
        yaw_err_base = np.full(n, np.nan)

    bias_err = np.linalg.norm(
        np.stack([estimate[f"bias0_{ax}"] - truth[f"bias0_{ax}"] for ax in "xyz"], axis=1),
        axis=1,
    )
    ext_err = np.linalg.norm(
        np.stack([estimate[f"extF{ax}"] - truth[f"extF{ax}"] for ax in "xyz"], axis=1),
        axis=1,
    )
    step_us = np.zeros(n)
    if step_times_us is not None:
        step_us[1 : 1 + len(step_times_us)] = step_times_us
    return RunMetrics(t, pos_err_est, pos_err_base, yaw_err_est, yaw_err_base,
                      bias_err, ext_err, step_us)


def metrics_table(metrics: RunMetrics) -> dict:
    return {
        "t": metrics.t,
        "pos_err_est": metrics.pos_err_est,
        "pos_err_base": metrics.pos_err_base,
        "yaw_err_est": metrics.yaw_err_est,
        "yaw_err_base": metrics.yaw_err_base,
        "bias_err": metrics.bias_err,
        "extF_err": metrics.ext_force_err,
        "step_time_us": metrics.step_time_us,
    }


# --------------------------------------------------------------------------
# CSV I/O (loss-free: shortest round-trip float formatting)


def write_csv(path, table: dict, kind: str, meta: str = ""):
    columns = list(table)
    rows = len(table[columns[0]])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# leggedkf-csv schema={CSV_SCHEMA_VERSION} kind={kind}{meta}\n")
        fh.write(",".join(columns) + "\n")
        for k in range(rows):
            fh.write(",".join(repr(float(table[c][k])) for c in columns) + "\n")


def read_csv(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("# leggedkf-csv"):
            raise ValueError(f"{path} is not a leggedkf csv (missing schema header)")
        columns = fh.readline().strip().split(",")
        data = [[] for _ in columns]
        for line in fh:
            for slot, text in zip(data, line.rstrip("\n").split(",")):
                slot.append(float(text))
    return {c: np.asarray(v) for c, v in zip(columns, data)}


# --------------------------------------------------------------------------
# top-level runner


def run(config: RunConfig, outdir: Optional[str] = None) -> RunResult:
    """Simulate, estimate, compute metrics and (optionally) write CSV logs."""
    sim = simulate(config.build_scenario())
    logs = run_estimation(sim, config.settings)
    step_us = logs.step_times * 1e6
    csv_step_us = step_us if config.settings.timing_in_csv else np.zeros_like(step_us)
    metrics = compute_metrics(logs.truth, logs.estimate, logs.baseline, csv_step_us)
    # keep the real timing in the returned metrics regardless of CSV policy
    real = compute_metrics(logs.truth, logs.estimate, logs.baseline, step_us)
    paths = {}
    if outdir is not None:
        os.makedirs(outdir, exist_ok=True)
        meta = f" effectors={','.join(str(i) for i in logs.effector_ids)} imus={logs.n_imus}"
        paths["truth"] = os.path.join(outdir, "truth.csv")
        write_csv(paths["truth"], logs.truth, "truth", meta)
        paths["estimate"] = os.path.join(outdir, "estimate.csv")
        write_csv(paths["estimate"], logs.estimate, "estimate", meta)
        if logs.baseline is not None:
            paths["baseline"] = os.path.join(outdir, "baseline.csv")
            write_csv(paths["baseline"], logs.baseline, "baseline", meta)
        paths["metrics"] = os.path.join(outdir, "metrics.csv")
        write_csv(paths["metrics"], metrics_table(metrics), "metrics", meta)
    return RunResult(config, sim, logs, real, paths)
