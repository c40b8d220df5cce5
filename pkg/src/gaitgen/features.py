"""Network feature extraction from 50 Hz trajectories.

Input vector (length 2n+78), in order:
    36  body-fixed base linear velocities, 12 samples at 6 Hz spanning a 2 s
        window centered on the current step (offsets k/6 s for k = -6..+5)
    36  the matching angular velocities
    n   joint positions at the previous step
    n   joint velocities at the previous step
    3   inertial base position at the previous step
    3   inertial base roll-pitch-yaw at the previous step

Target vector (length 2n+48), in order:
    21  body-fixed base linear velocities, 7 samples at 6 Hz spanning a 1 s
        future window starting at the current step (k = 0..6)
    21  the matching angular velocities
    n   joint positions at the current step
    n   joint velocities at the current step
    3   inertial base position at the current step
    3   inertial base roll-pitch-yaw at the current step

6 Hz offsets map to 50 Hz frame indices by nearest-integer rounding. The
gating subnetwork reads the 72 velocity-window entries of the input.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .kinematics import forward_kinematics, frame_jacobian
from .trajectory import mirror_trajectory

log = logging.getLogger(__name__)

RATE_HZ = 50.0
WINDOW_HZ = 6.0

INPUT_KS = tuple(range(-6, 6))
OUTPUT_KS = tuple(range(0, 7))

GATING_SLICE = (0, 72)  # velocity-window entries drive the expert blending


def window_offsets(ks, rate_hz=RATE_HZ, window_hz=WINDOW_HZ):
    """Frame-index offsets of the 6 Hz sampling grid at the base rate."""
    return np.array([int(round(k * rate_hz / window_hz)) for k in ks], dtype=int)


INPUT_OFFSETS = window_offsets(INPUT_KS)
OUTPUT_OFFSETS = window_offsets(OUTPUT_KS)


def input_size(n):
    return 2 * n + 78


def output_size(n):
    return 2 * n + 48


@dataclass
class OutputLayout:
    """Index map into the target vector."""

    n: int

    @property
    def lin0(self):
        return slice(0, 3)          # current-step linear velocity

    @property
    def ang0(self):
        return slice(21, 24)        # current-step angular velocity

    @property
    def joints(self):
        return slice(42, 42 + self.n)

    @property
    def joint_rates(self):
        return slice(42 + self.n, 42 + 2 * self.n)

    @property
    def position(self):
        return slice(42 + 2 * self.n, 45 + 2 * self.n)

    @property
    def rpy(self):
        return slice(45 + 2 * self.n, 48 + 2 * self.n)


def extract_input(traj, i):
    """Input vector at step i, or None when the window leaves the trajectory."""
    idx = i + INPUT_OFFSETS
    if i < 1 or idx[0] < 0 or idx[-1] >= len(traj):
        return None
    vel = traj.base_velocity[idx]
    return np.concatenate([
        vel[:, :3].ravel(), vel[:, 3:].ravel(),
        traj.joint_positions[i - 1], traj.joint_velocities[i - 1],
        traj.base_position[i - 1], traj.base_rpy[i - 1]])


def extract_output(traj, i):
    """Target vector at step i, or None when the future window is out of range."""
    idx = i + OUTPUT_OFFSETS
    if idx[0] < 0 or idx[-1] >= len(traj):
        return None
    vel = traj.base_velocity[idx]
    return np.concatenate([
        vel[:, :3].ravel(), vel[:, 3:].ravel(),
        traj.joint_positions[i], traj.joint_velocities[i],
        traj.base_position[i], traj.base_rpy[i]])


def valid_sample_range(traj):
    """Index range [lo, hi) for which both feature windows stay in bounds."""
    lo = max(1, -int(INPUT_OFFSETS[0]))
    hi = len(traj) - int(max(INPUT_OFFSETS[-1], OUTPUT_OFFSETS[-1]))
    return lo, max(lo, hi)


MIN_HISTORY = 1 - int(INPUT_OFFSETS[0])  # frames needed before predicting


def assemble_rollout_input(vel_hist, s_hist, ds_hist, p_hist, rpy_hist):
    """Input vector for predicting the step after the newest history frame.

    History rows are time ordered, newest last. Window slots at or beyond
    the newest frame clamp to it (zero-order hold): at inference the future
    half of the velocity window does not exist yet, and only data with
    timestamps up to the current step may be used.
    """
    m = len(vel_hist) - 1
    idx = np.minimum(m + 1 + INPUT_OFFSETS, m)
    if idx[0] < 0:
        raise ValueError(
            f"need at least {MIN_HISTORY} history frames, have {m + 1}")
    vel = np.asarray(vel_hist)[idx]
    return np.concatenate([
        vel[:, :3].ravel(), vel[:, 3:].ravel(),
        s_hist[m], ds_hist[m], p_hist[m], rpy_hist[m]])


@dataclass
class FeatureSample:
    """One training pair with its support annotation and constraint data."""

    x: np.ndarray
    y: np.ndarray
    alpha: int
    J_LF: np.ndarray
    J_RF: np.ndarray

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ValueError(f"support flag must be 0 or 1, got {self.alpha}")

    @property
    def support_matrix(self):
        """M with residual v_hat + M sdot_hat; constant during training."""
        J = self.J_LF if self.alpha == 1 else self.J_RF
        return np.linalg.solve(J[:, :6], J[:, 6:])


def feature_sample(tree, traj, i):
    """Build the FeatureSample at step i (None if windows out of range)."""
    x = extract_input(traj, i)
    y = extract_output(traj, i)
    if x is None or y is None:
        return None
    if traj.contact is None:
        raise ValueError("trajectory lacks contact labels; annotate first")
    q = traj.joint_positions[i]
    p, R = traj.base_position[i], traj.base_rotation[i]
    return FeatureSample(
        x=x, y=y, alpha=int(traj.contact[i]),
        J_LF=frame_jacobian(tree, p, R, q, tree.left_foot),
        J_RF=frame_jacobian(tree, p, R, q, tree.right_foot))


@dataclass
class Dataset:
    """Flat sample arrays ready for batched training.

    support_matrices holds the per-sample constant M = inv(J_B) J_s of the
    annotated support foot, so the constraint residual is y[vel0] + M @
    y[joint_rates].
    """

    X: np.ndarray                  # (S, 2n+78)
    Y: np.ndarray                  # (S, 2n+48)
    alpha: np.ndarray              # (S,)
    support_matrices: np.ndarray   # (S, 6, n)
    segments: list                 # (start, stop) per source trajectory

    @property
    def n(self):
        return self.support_matrices.shape[2]

    def __len__(self):
        return self.X.shape[0]

    def take(self, idx):
        return self.X[idx], self.Y[idx], self.support_matrices[idx]


def build_dataset(tree, trajectories, mirror_map=None, augment=False,
                  contact_height=0.01, contact_speed=0.05):
    """Extract samples from trajectories, optionally doubled by mirroring."""
    source = list(trajectories)
    if augment:
        if mirror_map is None:
            raise ValueError("augmentation requires a joint mirror map")
        source += [mirror_trajectory(t, mirror_map) for t in trajectories]
    xs, ys, als, mats, segments = [], [], [], [], []
    at = 0
    for traj in source:
        contact = traj.contact
        if contact is None:
            contact = annotate_contacts(tree, traj, contact_height, contact_speed)
        lo, hi = valid_sample_range(traj)
        count = 0
        for i in range(lo, hi):
            x = extract_input(traj, i)
            y = extract_output(traj, i)
            if x is None or y is None:
                continue
            q = traj.joint_positions[i]
            p, R = traj.base_position[i], traj.base_rotation[i]
            foot = tree.left_foot if contact[i] == 1 else tree.right_foot
            J = frame_jacobian(tree, p, R, q, foot)
            xs.append(x)
            ys.append(y)
            als.append(int(contact[i]))
            mats.append(np.linalg.solve(J[:, :6], J[:, 6:]))
            count += 1
        segments.append((at, at + count))
        at += count
    if not xs:
        raise ValueError("no valid samples: trajectories shorter than the feature window")
    return Dataset(np.array(xs), np.array(ys), np.array(als, dtype=int),
                   np.array(mats), segments)


class ContactTracker:
    """Support-foot annotation with double-support hysteresis.

    A foot qualifies as supporting while its sole is below the height
    threshold and moving slower than the speed threshold. While both (or
    neither) qualify, the previous assignment is kept.
    """

    def __init__(self, height_threshold, speed_threshold, initial=0, dt=1.0 / RATE_HZ):
        if height_threshold <= 0 or speed_threshold <= 0:
            raise ValueError("contact thresholds must be positive")
        self.h = height_threshold
        self.v = speed_threshold
        self.alpha = initial
        self.dt = dt
        self._dead_time = 0.0
        self.warned = False

    def update(self, lf_height, lf_speed, rf_height, rf_speed):
        left = lf_height < self.h and lf_speed < self.v
        right = rf_height < self.h and rf_speed < self.v
        if left and not right:
            self.alpha = 1
        elif right and not left:
            self.alpha = 0
        if not left and not right:
            self._dead_time += self.dt
            if self._dead_time > 0.5 and not self.warned:
                log.warning("no support foot qualified for %.2f s; "
                            "keeping alpha=%d", self._dead_time, self.alpha)
                self.warned = True
        else:
            self._dead_time = 0.0
        return self.alpha


def annotate_contacts(tree, traj, height_threshold, speed_threshold, initial=0):
    """Per-step support-foot flags from foot heights and speeds."""
    tracker = ContactTracker(height_threshold, speed_threshold, initial, traj.dt)
    out = np.zeros(len(traj), dtype=int)
    for i in range(len(traj)):
        p, R, q = traj.base_position[i], traj.base_rotation[i], traj.joint_positions[i]
        nu = np.concatenate([traj.base_velocity[i], traj.joint_velocities[i]])
        world = forward_kinematics(tree, p, R, q)
        heights, speeds = {}, {}
        for foot in (tree.left_foot, tree.right_foot):
            heights[foot] = world[foot][2, 3]
            J = frame_jacobian(tree, p, R, q, foot)
            speeds[foot] = float(np.linalg.norm((J @ nu)[:3]))
        out[i] = tracker.update(heights[tree.left_foot], speeds[tree.left_foot],
                                heights[tree.right_foot], speeds[tree.right_foot])
    return out
