"""Autoregressive trajectory generation and gait-quality metrics.

Each 20 ms step assembles the network input from the rolling history
(future window slots clamp to the newest frame), predicts the next state,
applies proportional drift correction to the current-step base velocity,
integrates the base pose from the corrected velocity, and adopts the
predicted joint state. Only the current-step velocity triple advances the
state; the predicted future-velocity slots and pose slots are logged for
diagnosis. The support foot is re-annotated every step from foot heights
and speeds.

Zero gains reproduce the raw autoregressive rollout bit for bit -- the
correction terms are exact zeros, not a separate code path.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .correction import CorrectionGains, correct_angular, correct_linear
from .features import MIN_HISTORY, OutputLayout, assemble_rollout_input, ContactTracker
from .kinematics import forward_kinematics, frame_jacobian
from .mann import load_checkpoint, predict
from .kinematics import KinematicTree
from .rotations import GimbalLockError, matrix_to_rpy, reorthonormalize, rodrigues
from .trajectory import RATE_HZ, Trajectory
from .training import Normalization

log = logging.getLogger(__name__)

DT = 1.0 / RATE_HZ
REORTHONORMALIZE_EVERY = 256

CONTACT_HEIGHT = 0.01   # m, sole below this counts as grounded
CONTACT_SPEED = 0.05    # m/s


def integrate_base(p, R, v6, dt):
    """Advance a base pose by one body-fixed twist sample.

    p <- p + R v dt, R <- R exp(hat(w dt)) via the closed-form Rodrigues
    map. Returns (p, R, rpy); near gimbal lock the angles come back as NaN
    with a warning while the rotation itself stays valid.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v6 = np.asarray(v6, dtype=float).reshape(6)
    p = np.asarray(p, dtype=float) + np.asarray(R, dtype=float) @ v6[:3] * dt
    R = np.asarray(R, dtype=float) @ rodrigues(v6[3:] * dt)
    try:
        rpy = matrix_to_rpy(R)
    except GimbalLockError:
        log.warning("pitch at gimbal lock; angle log entry flagged invalid")
        rpy = np.full(3, np.nan)
    return p, R, rpy


@dataclass
class MannPredictor:
    """Checkpointed network plus its feature standardization."""

    params: object
    config: object
    normalization: Normalization

    @property
    def n(self):
        return self.config.n

    def predict_vector(self, x):
        xn = self.normalization.normalize_x(np.asarray(x, dtype=float))
        return self.normalization.denormalize_y(predict(self.params, self.config, xn))


def load_predictor(checkpoint_path):
    """Load a checkpoint into a predictor and its kinematic tree."""
    params, config, header, arrays = load_checkpoint(checkpoint_path)
    if "x_mean" not in arrays:
        norm = Normalization.identity(config.input_size, config.output_size)
    else:
        norm = Normalization(arrays["x_mean"], arrays["x_std"],
                             arrays["y_mean"], arrays["y_std"])
    tree = None
    if header.get("tree_text"):
        tree = KinematicTree.from_text(header["tree_text"], origin=str(checkpoint_path))
    return MannPredictor(params, config, norm), tree, header


LOG_SCHEMA = "gaitgen-rollout v1"


@dataclass
class TrajectoryLog:
    """Per-step record of one rollout."""

    time: np.ndarray
    y_hat: np.ndarray                # (T, 2n+48) raw predictions
    corrected_velocity: np.ndarray   # (T, 6)
    base_position: np.ndarray
    base_rpy: np.ndarray             # NaN rows where angle extraction failed
    base_rotation: np.ndarray
    joint_positions: np.ndarray
    joint_velocities: np.ndarray
    alpha: np.ndarray                # re-annotated support flag
    support_velocity: np.ndarray     # (T, 6) J_SF nu at the logged state
    desired_position: np.ndarray
    desired_rpy: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.time)

    @property
    def n(self):
        return self.joint_positions.shape[1]

    def to_trajectory(self):
        return Trajectory(
            self.time, self.base_position, self.base_rpy,
            self.corrected_velocity, self.joint_positions,
            self.joint_velocities, contact=self.alpha,
            base_rotation=self.base_rotation, meta=dict(self.meta))

    def save(self, path):
        n = self.n
        m = self.y_hat.shape[1]
        cols = (["time", "px", "py", "pz", "roll", "pitch", "yaw",
                 "vx", "vy", "vz", "wx", "wy", "wz"]
                + [f"s{i}" for i in range(n)] + [f"ds{i}" for i in range(n)]
                + ["alpha"]
                + [f"sv{i}" for i in range(6)]
                + ["des_x", "des_y", "des_z", "des_roll", "des_pitch", "des_yaw"]
                + [f"yhat{i}" for i in range(m)])
        with open(path, "w") as fh:
            fh.write(f"# schema: {LOG_SCHEMA}\n")
            fh.write(f"# meta: {json.dumps(self.meta, sort_keys=True)}\n")
            fh.write(",".join(cols) + "\n")
            for k in range(len(self)):
                row = [self.time[k], *self.base_position[k], *self.base_rpy[k],
                       *self.corrected_velocity[k], *self.joint_positions[k],
                       *self.joint_velocities[k], float(self.alpha[k]),
                       *self.support_velocity[k], *self.desired_position[k],
                       *self.desired_rpy[k], *self.y_hat[k]]
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        with open(path) as fh:
            lines = fh.readlines()
        at = 0
        for line in lines:
            if not line.startswith("#"):
                break
            at += 1
            if line.startswith("# meta:"):
                meta = json.loads(line[len("# meta:"):])
        header = lines[at].strip().split(",")
        data = np.array([[float(v) for v in line.strip().split(",")]
                         for line in lines[at + 1:] if line.strip()])
        col = {name: i for i, name in enumerate(header)}
        n = sum(1 for c in header if c.startswith("s") and c[1:].isdigit())
        m = sum(1 for c in header if c.startswith("yhat"))
        rpy = data[:, col["roll"]:col["roll"] + 3]
        rot = np.stack([_rpy_matrix_or_nan(a) for a in rpy])
        return cls(
            time=data[:, col["time"]],
            y_hat=data[:, col["yhat0"]:col["yhat0"] + m],
            corrected_velocity=data[:, col["vx"]:col["vx"] + 6],
            base_position=data[:, col["px"]:col["px"] + 3],
            base_rpy=rpy, base_rotation=rot,
            joint_positions=data[:, col["s0"]:col["s0"] + n],
            joint_velocities=data[:, col["ds0"]:col["ds0"] + n],
            alpha=data[:, col["alpha"]].astype(int),
            support_velocity=data[:, col["sv0"]:col["sv0"] + 6],
            desired_position=data[:, col["des_x"]:col["des_x"] + 3],
            desired_rpy=data[:, col["des_roll"]:col["des_roll"] + 3],
            meta=meta)


def _rpy_matrix_or_nan(rpy):
    from .rotations import rpy_to_matrix
    if np.any(np.isnan(rpy)):
        return np.full((3, 3), np.nan)
    return rpy_to_matrix(rpy)


def rollout(predictor, tree, seed_traj, schedule, gains, steps,
            contact_height=CONTACT_HEIGHT, contact_speed=CONTACT_SPEED):
    """Generate ``steps`` frames continuing a seed trajectory.

    The seed must cover the 2 s feature window. Joint entries of the next
    input always come straight from the prediction; the correction touches
    only the base velocity triple that is fed forward.
    """
    if len(seed_traj) < MIN_HISTORY:
        raise ValueError(
            f"seed trajectory has {len(seed_traj)} frames; "
            f"the feature window needs at least {MIN_HISTORY}")
    if predictor.n != seed_traj.n:
        raise ValueError(
            f"predictor expects {predictor.n} joints, seed has {seed_traj.n}")
    gains = gains if isinstance(gains, CorrectionGains) else CorrectionGains(*gains)
    lay = OutputLayout(predictor.n)
    total = len(seed_traj) + steps

    vel = np.zeros((total, 6))
    s = np.zeros((total, predictor.n))
    ds = np.zeros_like(s)
    pos = np.zeros((total, 3))
    rpy = np.zeros((total, 3))
    m0 = len(seed_traj)
    vel[:m0] = seed_traj.base_velocity
    s[:m0] = seed_traj.joint_positions
    ds[:m0] = seed_traj.joint_velocities
    pos[:m0] = seed_traj.base_position
    rpy[:m0] = seed_traj.base_rpy

    R = seed_traj.base_rotation[-1].copy()
    p = seed_traj.base_position[-1].copy()
    t0 = float(seed_traj.time[-1])
    initial = int(seed_traj.contact[-1]) if seed_traj.contact is not None else 0
    tracker = ContactTracker(contact_height, contact_speed, initial=initial)

    out = {k: [] for k in ("t", "y", "vc", "p", "rpy", "R", "s", "ds",
                           "alpha", "sv", "pd", "rpyd")}
    last_valid_rpy = rpy[m0 - 1].copy()
    for k in range(steps):
        m = m0 + k
        x = assemble_rollout_input(vel[:m], s[:m], ds[:m], pos[:m], rpy[:m])
        y = predictor.predict_vector(x)
        if not np.all(np.isfinite(y)):
            raise RuntimeError(f"non-finite prediction at rollout step {k}")
        t = t0 + (k + 1) * DT
        p_d, R_d = schedule.target(t)
        v_c = correct_linear(y[lay.lin0], R, p, p_d, gains.k0)
        w_c = correct_angular(y[lay.ang0], R, R_d, gains.k1)
        v6 = np.concatenate([v_c, w_c])
        p, R, ang = integrate_base(p, R, v6, DT)
        if (k + 1) % REORTHONORMALIZE_EVERY == 0:
            R = reorthonormalize(R)
        if np.any(np.isnan(ang)):
            ang_hist = last_valid_rpy
        else:
            ang_hist = last_valid_rpy = ang
        s_new = y[lay.joints]
        ds_new = y[lay.joint_rates]

        world = forward_kinematics(tree, p, R, s_new)
        nu = np.concatenate([v6, ds_new])
        J = {f: frame_jacobian(tree, p, R, s_new, f)
             for f in (tree.left_foot, tree.right_foot)}
        speeds = {f: float(np.linalg.norm((J[f] @ nu)[:3])) for f in J}
        heights = {f: float(world[f][2, 3]) for f in J}
        alpha = tracker.update(heights[tree.left_foot], speeds[tree.left_foot],
                               heights[tree.right_foot], speeds[tree.right_foot])
        support = tree.left_foot if alpha == 1 else tree.right_foot

        vel[m] = v6
        s[m] = s_new
        ds[m] = ds_new
        pos[m] = p
        rpy[m] = ang_hist

        out["t"].append(t)
        out["y"].append(y)
        out["vc"].append(v6)
        out["p"].append(p.copy())
        out["rpy"].append(ang.copy())
        out["R"].append(R.copy())
        out["s"].append(s_new.copy())
        out["ds"].append(ds_new.copy())
        out["alpha"].append(alpha)
        out["sv"].append(J[support] @ nu)
        out["pd"].append(np.asarray(p_d, dtype=float).copy())
        try:
            out["rpyd"].append(matrix_to_rpy(R_d))
        except GimbalLockError:
            out["rpyd"].append(np.full(3, np.nan))

    return TrajectoryLog(
        time=np.array(out["t"]), y_hat=np.stack(out["y"]),
        corrected_velocity=np.stack(out["vc"]),
        base_position=np.stack(out["p"]), base_rpy=np.stack(out["rpy"]),
        base_rotation=np.stack(out["R"]),
        joint_positions=np.stack(out["s"]), joint_velocities=np.stack(out["ds"]),
        alpha=np.array(out["alpha"], dtype=int),
        support_velocity=np.stack(out["sv"]),
        desired_position=np.stack(out["pd"]), desired_rpy=np.stack(out["rpyd"]),
        meta={"k0": gains.k0, "k1": gains.k1, "steps": steps})


@dataclass
class FootSlideMetric:
    """Support-foot velocity accumulated over a rollout.

    linear_sum / angular_sum follow the summed convention (per-step norms
    added over the trajectory); the per-second values divide by duration.
    """

    linear_sum: float
    angular_sum: float
    linear_per_second: float
    angular_per_second: float
    steps: int

    def as_dict(self):
        return dict(self.__dict__)


def metric_foot_slide(log, tree):
    """Support-foot velocity norms from J nu, summed over the trajectory."""
    if len(log) == 0:
        raise ValueError("empty rollout log")
    lin = ang = 0.0
    for k in range(len(log)):
        foot = tree.left_foot if log.alpha[k] == 1 else tree.right_foot
        J = frame_jacobian(tree, log.base_position[k], log.base_rotation[k],
                           log.joint_positions[k], foot)
        nu = np.concatenate([log.corrected_velocity[k], log.joint_velocities[k]])
        v = J @ nu
        lin += float(np.linalg.norm(v[:3]))
        ang += float(np.linalg.norm(v[3:]))
    duration = len(log) / RATE_HZ
    return FootSlideMetric(lin, ang, lin / duration, ang / duration, len(log))


@dataclass
class DriftReport:
    terminal_lateral: float      # |y - y_desired| at the last step, m
    terminal_yaw: float          # |yaw - yaw_desired| at the last step, rad
    max_lateral: float
    lateral: np.ndarray          # per-step y offset from the desired path
    yaw: np.ndarray              # per-step yaw offset
    path_xy: np.ndarray          # ground-projected base path (T, 2)
    desired_xy: np.ndarray

    def as_dict(self):
        return {"terminal_lateral": self.terminal_lateral,
                "terminal_yaw": self.terminal_yaw,
                "max_lateral": self.max_lateral}


def metric_drift(log):
    """Displacement of the rollout from its desired path."""
    lateral = log.base_position[:, 1] - log.desired_position[:, 1]
    yaw = np.array([_angle_diff(a, b) for a, b in
                    zip(log.base_rpy[:, 2], log.desired_rpy[:, 2])])
    return DriftReport(
        terminal_lateral=float(abs(lateral[-1])),
        terminal_yaw=float(abs(yaw[-1])),
        max_lateral=float(np.max(np.abs(lateral))),
        lateral=lateral, yaw=yaw,
        path_xy=log.base_position[:, :2].copy(),
        desired_xy=log.desired_position[:, :2].copy())


def _angle_diff(a, b):
    if np.isnan(a) or np.isnan(b):
        return np.nan
    return (a - b + np.pi) % (2.0 * np.pi) - np.pi


@dataclass
class FootTraces:
    """World pitch and sole height of both feet over a log."""

    time: np.ndarray
    left_pitch: np.ndarray
    right_pitch: np.ndarray
    left_height: np.ndarray
    right_height: np.ndarray
    alpha: np.ndarray

    def save(self, path):
        with open(path, "w") as fh:
            fh.write("# schema: gaitgen-foot-traces v1\n")
            fh.write("time,left_pitch,right_pitch,left_height,right_height,alpha\n")
            for row in zip(self.time, self.left_pitch, self.right_pitch,
                           self.left_height, self.right_height, self.alpha):
                fh.write(",".join(repr(float(v)) for v in row[:5])
                         + f",{int(row[5])}\n")


def metric_foot_traces(log, tree):
    """Foot pitch (radians) and sole height (m) series from the joint log."""
    T = len(log)
    lp, rp, lh, rh = (np.zeros(T) for _ in range(4))
    for k in range(T):
        world = forward_kinematics(tree, log.base_position[k],
                                   log.base_rotation[k], log.joint_positions[k])
        for arr_p, arr_h, foot in ((lp, lh, tree.left_foot),
                                   (rp, rh, tree.right_foot)):
            Tf = world[foot]
            arr_h[k] = Tf[2, 3]
            arr_p[k] = np.arctan2(-Tf[2, 0], np.hypot(Tf[2, 1], Tf[2, 2]))
    return FootTraces(log.time.copy(), lp, rp, lh, rh, log.alpha.copy())


def stance_pitch_peak(traces):
    """Largest support-foot pitch magnitude across the trace."""
    pitch = np.where(traces.alpha == 1, traces.left_pitch, traces.right_pitch)
    return float(np.max(np.abs(pitch)))


def stance_height_std(traces):
    """Standard deviation of the support-foot sole height."""
    height = np.where(traces.alpha == 1, traces.left_height, traces.right_height)
    return float(np.std(height))
