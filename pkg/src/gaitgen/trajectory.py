"""Time-indexed kinematic trajectories and their on-disk CSV format.

A trajectory is a uniformly sampled (default 50 Hz) record of the full
kinematic state: base pose, body-fixed base 6D velocity, joint positions and
rates, plus an optional support-foot contact column (1 = left foot supports,
0 = right). CSV files carry a versioned schema comment, a header row, and
full-precision decimal values so that regeneration with the same seed is
byte-identical.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .rotations import rpy_to_matrix

SCHEMA = "gaitgen-trajectory v1"
RATE_HZ = 50.0
DT = 1.0 / RATE_HZ

MIRROR_POS = np.array([1.0, -1.0, 1.0])     # x, -y, z
MIRROR_RPY = np.array([-1.0, 1.0, -1.0])    # -roll, pitch, -yaw
MIRROR_LIN = np.array([1.0, -1.0, 1.0])
MIRROR_ANG = np.array([-1.0, 1.0, -1.0])


@dataclass
class Trajectory:
    time: np.ndarray                 # (N,)
    base_position: np.ndarray        # (N, 3) inertial frame
    base_rpy: np.ndarray             # (N, 3) extrinsic roll-pitch-yaw
    base_velocity: np.ndarray        # (N, 6) body-fixed (linear, angular)
    joint_positions: np.ndarray      # (N, n)
    joint_velocities: np.ndarray     # (N, n)
    contact: np.ndarray | None = None  # (N,) int, 1 left support / 0 right
    base_rotation: np.ndarray = field(default=None, repr=False)  # (N, 3, 3)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.base_rotation is None:
            self.base_rotation = np.stack([rpy_to_matrix(a) for a in self.base_rpy])

    def __len__(self):
        return self.time.shape[0]

    @property
    def n(self):
        return self.joint_positions.shape[1]

    @property
    def dt(self):
        return float(self.time[1] - self.time[0]) if len(self) > 1 else DT

    def window(self, start, stop):
        return Trajectory(
            self.time[start:stop], self.base_position[start:stop],
            self.base_rpy[start:stop], self.base_velocity[start:stop],
            self.joint_positions[start:stop], self.joint_velocities[start:stop],
            None if self.contact is None else self.contact[start:stop],
            self.base_rotation[start:stop], dict(self.meta))

    def save(self, path):
        n = self.n
        cols = (["time", "px", "py", "pz", "roll", "pitch", "yaw",
                 "vx", "vy", "vz", "wx", "wy", "wz"]
                + [f"s{i}" for i in range(n)] + [f"ds{i}" for i in range(n)])
        if self.contact is not None:
            cols.append("contact")
        with open(path, "w") as fh:
            fh.write(f"# schema: {SCHEMA}\n")
            if self.meta:
                fh.write(f"# meta: {json.dumps(self.meta, sort_keys=True)}\n")
            fh.write(",".join(cols) + "\n")
            for k in range(len(self)):
                row = [self.time[k], *self.base_position[k], *self.base_rpy[k],
                       *self.base_velocity[k], *self.joint_positions[k],
                       *self.joint_velocities[k]]
                text = ",".join(repr(float(v)) for v in row)
                if self.contact is not None:
                    text += f",{int(self.contact[k])}"
                fh.write(text + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        with open(path) as fh:
            lines = fh.readlines()
        body_at = 0
        for line in lines:
            if not line.startswith("#"):
                break
            body_at += 1
            if line.startswith("# meta:"):
                meta = json.loads(line[len("# meta:"):])
        if body_at >= len(lines):
            raise ValueError(f"{path}: no header row")
        header = lines[body_at].strip().split(",")
        data = np.array([[float(v) for v in line.strip().split(",")]
                         for line in lines[body_at + 1:] if line.strip()])
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ValueError(f"{path}: malformed rows")
        col = {name: i for i, name in enumerate(header)}
        has_contact = "contact" in col
        n = sum(1 for name in header if name.startswith("s") and name[1:].isdigit())
        return cls(
            time=data[:, col["time"]],
            base_position=data[:, col["px"]:col["px"] + 3],
            base_rpy=data[:, col["roll"]:col["roll"] + 3],
            base_velocity=data[:, col["vx"]:col["vx"] + 6],
            joint_positions=data[:, col["s0"]:col["s0"] + n],
            joint_velocities=data[:, col["ds0"]:col["ds0"] + n],
            contact=data[:, col["contact"]].astype(int) if has_contact else None,
            meta=meta)


@dataclass
class MirrorMap:
    """Left/right joint exchange table: (index_a, index_b, sign) triples.

    Mirroring swaps the paired joint values and multiplies by the sign (-1
    for yaw/roll-type axes, +1 for pitch-type). Every joint must be covered
    exactly once; signs must be +-1 so the map is an exact involution.
    """

    pairs: list
    n: int

    def __post_init__(self):
        seen = []
        for a, b, s in self.pairs:
            seen += [a, b] if a != b else [a]
            if s not in (-1.0, 1.0, -1, 1):
                raise ValueError(f"mirror sign must be +-1, got {s}")
        if sorted(seen) != list(range(self.n)):
            raise ValueError(
                f"mirror map must cover each of {self.n} joints exactly once, "
                f"covers {sorted(seen)}")

    def apply(self, joints):
        """Mirror an (N, n) or (n,) joint array by swap and sign flip."""
        out = np.array(joints, dtype=float, copy=True)
        src = np.asarray(joints, dtype=float)
        for a, b, s in self.pairs:
            out[..., a] = s * src[..., b]
            out[..., b] = s * src[..., a]
        return out

    def save(self, path, joint_names):
        with open(path, "w") as fh:
            fh.write("# gaitgen mirror map v1\n")
            for a, b, s in self.pairs:
                fh.write(f"{joint_names[a]} {joint_names[b]} {int(s)}\n")

    @classmethod
    def load(cls, path, joint_names):
        index = {name: i for i, name in enumerate(joint_names)}
        pairs = []
        with open(path) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                a, b, s = line.split()
                if a not in index or b not in index:
                    raise ValueError(f"mirror map names unknown joint in {line!r}")
                pairs.append((index[a], index[b], int(s)))
        return cls(pairs, len(joint_names))


def default_mirror_map(tree):
    """Pair l_*/r_* joints of a symmetric tree; sign from the joint axis
    (pitch axes keep sign under the xz-plane mirror, yaw/roll axes flip)."""
    names = tree.joint_names
    index = {name: i for i, name in enumerate(names)}
    pairs = []
    for i, name in enumerate(names):
        if not name.startswith("l_"):
            continue
        partner = "r_" + name[2:]
        if partner not in index:
            raise ValueError(f"no mirror partner for joint {name!r}")
        axis = tree.links[tree.joint_order[i]].axis
        sign = 1 if abs(axis[1]) > max(abs(axis[0]), abs(axis[2])) else -1
        pairs.append((i, index[partner], sign))
    covered = {i for a, b, _ in pairs for i in (a, b)}
    missing = [names[i] for i in range(len(names)) if i not in covered]
    if missing:
        raise ValueError(f"joints without a mirror rule: {missing}")
    return MirrorMap(pairs, len(names))


def mirror_trajectory(traj, mirror_map):
    """Reflect a trajectory across the world xz plane.

    Base y position, roll and yaw are negated, as are the y linear and the
    x/z angular body velocities; joints are exchanged through the mirror
    map and the support-foot flag flips. Pure sign/permutation arithmetic,
    so applying it twice restores the input bit for bit.
    """
    sign_outer = np.array([1.0, -1.0, 1.0])
    rot = traj.base_rotation * (sign_outer[None, :, None] * sign_outer[None, None, :])
    return Trajectory(
        time=traj.time.copy(),
        base_position=traj.base_position * MIRROR_POS,
        base_rpy=traj.base_rpy * MIRROR_RPY,
        base_velocity=np.concatenate([traj.base_velocity[:, :3] * MIRROR_LIN,
                                      traj.base_velocity[:, 3:] * MIRROR_ANG], axis=1),
        joint_positions=mirror_map.apply(traj.joint_positions),
        joint_velocities=mirror_map.apply(traj.joint_velocities),
        contact=None if traj.contact is None else 1 - traj.contact,
        base_rotation=rot,
        meta={**traj.meta, "mirrored": not traj.meta.get("mirrored", False)})
