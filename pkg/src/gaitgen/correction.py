"""Proportional feedback on predicted base velocities.

The corrected velocities replace the network's current-step predictions
before pose integration and the next autoregressive input:

    v_c = v_hat - k0 * R^T (p - p_d)           (position error, body frame)
    w_c = w_hat - k1 * skewvee(R_d^T R)         (rotation error, body frame)

Both terms are proportional only; gains of zero disable the correction
exactly (the corrected velocity is bit-identical to the prediction).
"""

from dataclasses import dataclass

import numpy as np

from .rotations import rpy_to_matrix, skew_vee


@dataclass
class CorrectionGains:
    k0: float = 1.0   # positional gain, 1/s
    k1: float = 1.0   # rotational gain, 1/s

    def __post_init__(self):
        if self.k0 < 0 or self.k1 < 0:
            raise ValueError("correction gains must be nonnegative")

    @property
    def disabled(self):
        return self.k0 == 0.0 and self.k1 == 0.0


def correct_linear(v_hat, R, p, p_desired, k0):
    """Subtract the body-frame position error from a linear velocity."""
    v_hat = np.asarray(v_hat, dtype=float).reshape(3)
    err = np.asarray(R, dtype=float).T @ (np.asarray(p, dtype=float)
                                          - np.asarray(p_desired, dtype=float))
    return v_hat - k0 * err


def correct_angular(w_hat, R, R_desired, k1):
    """Subtract the rotation error (vee of the antisymmetric part of
    R_d^T R) from an angular velocity."""
    w_hat = np.asarray(w_hat, dtype=float).reshape(3)
    err = skew_vee(np.asarray(R_desired, dtype=float).T @ np.asarray(R, dtype=float))
    return w_hat - k1 * err


WAYPOINT_SCHEMA = "gaitgen-waypoints v1"


@dataclass
class WaypointSchedule:
    """Piecewise-constant desired base poses: (time, position, rpy) rows."""

    times: np.ndarray
    positions: np.ndarray
    rpys: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.rpys = np.atleast_2d(np.asarray(self.rpys, dtype=float))
        if not (len(self.times) == len(self.positions) == len(self.rpys)):
            raise ValueError("waypoint columns have unequal lengths")
        if len(self.times) == 0:
            raise ValueError("waypoint schedule is empty")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("waypoint times must be nondecreasing")

    def target(self, t):
        """Active desired pose at time t (the last waypoint not in the future)."""
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(i, 0)
        return self.positions[i], rpy_to_matrix(self.rpys[i])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"# schema: {WAYPOINT_SCHEMA}\n")
            fh.write("time,x,y,z,roll,pitch,yaw\n")
            for t, p, a in zip(self.times, self.positions, self.rpys):
                fh.write(",".join(repr(float(v)) for v in (t, *p, *a)) + "\n")

    @classmethod
    def load(cls, path):
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line.startswith("time"):
                    continue
                rows.append([float(v) for v in line.split(",")])
        if not rows:
            raise ValueError(f"{path}: no waypoints")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1:4], arr[:, 4:7])


def forward_schedule(duration, speed, height, interval=1.0, start=(0.0, 0.0),
                     yaw=0.0):
    """Waypoints advancing along the heading at a constant pace.

    Keeps the position error of a walker moving at ``speed`` roughly one
    interval's worth of distance, so proportional correction stays in the
    same range as the gait velocities.
    """
    times = np.arange(0.0, duration + interval, interval)
    c, s = np.cos(yaw), np.sin(yaw)
    xs = start[0] + times * speed * c
    ys = start[1] + times * speed * s
    pos = np.stack([xs, ys, np.full_like(times, height)], axis=1)
    rpy = np.zeros((len(times), 3))
    rpy[:, 2] = yaw
    return WaypointSchedule(times, pos, rpy)
