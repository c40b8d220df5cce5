"""Deterministic generator of kinematically consistent biped gait data.

Construction, not post-hoc filtering, provides the physical consistency.
The gait lives in the sagittal plane of a hip/knee/ankle-pitch biped:

  * base pose is planned explicitly (cycloidal forward progress, bounded
    height bob and pitch nod, all with zero rates at phase boundaries);
  * the planted sole is pinned flat at its foothold; stance joints come from
    exact closed-form planar IK of the planned base pose, so the support
    foot has exactly zero pose drift at every sample;
  * the swing sole tracks a cycloid-plus-clearance-bump world path, landing
    flat with zero velocity;
  * joint rates solve the frame-Jacobian systems of the planned twists, so
    J_SF nu vanishes to machine precision sample by sample.

Support exchange is instantaneous (all rates vanish at boundaries, keeping
the gait C1); a stance period longer than the swing period inserts a frozen
double-support pause after each landing. Contact truth labels switch one
frame after the geometric exchange, matching the hysteresis convention of
the contact annotator.

Because the legs are sagittal, lateral and yaw motion are structurally zero;
plans are forward/backward/in-place/stand sequences. Left/right asymmetry
for drift-correction experiments is injected as a documented bias added to
the lateral/yaw velocity labels of walking frames -- a deliberate,
bias-shaped inconsistency standing in for imperfect demonstration data.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .kinematics import forward_kinematics, frame_jacobian, make_transform
from .rotations import geodesic_distance, matrix_to_rpy, rotation_y, rotation_z
from .trajectory import RATE_HZ, Trajectory

DT = 1.0 / RATE_HZ


@dataclass
class GaitSegment:
    kind: str                   # "walk" or "stand"
    duration: float             # seconds
    step_length: float = 0.0    # per-step base advance, m (negative = backward)

    def __post_init__(self):
        if self.kind not in ("walk", "stand"):
            raise ValueError(
                f"unknown segment kind {self.kind!r}; the planar biped "
                "supports walk (forward/backward/in-place) and stand")
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")


@dataclass
class GaitParams:
    """Timing, geometry, plan and label-bias knobs for generate_gait."""

    stance_duration: float = 0.40   # per-foot ground time, s (>= swing)
    swing_duration: float = 0.32    # flight time of one step, s
    step_clearance: float = 0.05    # swing apex height, m
    base_height: float = 0.74       # base height at support exchange, m
    bob_amplitude: float = 0.012    # mid-step base dip, m
    pitch_amplitude: float = 0.03   # mid-step base nod, rad
    lead_in: float = 2.2            # standing head, s (covers feature window)
    lead_out: float = 1.2           # standing tail, s
    start_xy: tuple = (0.0, 0.0)    # world placement of the plan
    start_yaw: float = 0.0
    lateral_bias: float = 0.0       # added to vy labels on walk frames, m/s
    yaw_bias: float = 0.0           # added to wz labels on walk frames, rad/s
    decorative_amplitude: float = 0.0  # sinusoid amplitude of non-leg joints
    decorative_frequency: float = 0.4  # Hz
    seed: int = 0
    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.swing_duration <= 0 or self.stance_duration <= 0:
            raise ValueError("phase durations must be positive")
        if self.stance_duration < self.swing_duration:
            raise ValueError("stance duration must cover the opposite swing")
        if self.step_clearance <= 0:
            raise ValueError("step clearance must be positive")
        if self.base_height <= 0:
            raise ValueError("base height must be positive")
        self.segments = tuple(self.segments)
        self.start_xy = tuple(self.start_xy)

    def swing_frames(self):
        k = max(2, round(self.swing_duration * RATE_HZ))
        return k + (k % 2)  # even, so the apex lands on a sample

    def pause_frames(self):
        return max(0, round((self.stance_duration - self.swing_duration) * RATE_HZ))

    def meta(self):
        d = asdict(self)
        d["segments"] = [asdict(s) for s in self.segments]
        return d


def forward_walk_segments(duration, step_length=0.20):
    return (GaitSegment("walk", duration, step_length=step_length),)


def mixed_segments(duration, step_length=0.20, seed=0):
    """Randomized plan mixing forward/backward paces, stepping in place and
    standing; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    segs, t = [], 0.0
    kinds = ["forward", "forward", "forward", "backward", "in_place", "stand"]
    while t < duration:
        kind = kinds[rng.integers(len(kinds))]
        d = float(rng.uniform(2.0, 5.0))
        if kind == "stand":
            segs.append(GaitSegment("stand", min(d, 2.5)))
        elif kind == "in_place":
            segs.append(GaitSegment("walk", min(d, 3.0), step_length=0.0))
        elif kind == "backward":
            segs.append(GaitSegment("walk", d,
                                    step_length=-float(rng.uniform(0.5, 0.8)) * step_length))
        else:
            segs.append(GaitSegment("walk", d,
                                    step_length=float(rng.uniform(0.7, 1.1)) * step_length))
        t += segs[-1].duration
    return tuple(segs)


@dataclass
class BipedGeometry:
    """Sagittal leg layout extracted from a planar_biped-style tree."""

    hip_half_width: float
    thigh: float
    shank: float
    left_slots: tuple
    right_slots: tuple
    n: int

    @classmethod
    def from_tree(cls, tree):
        def leg(side):
            try:
                hip = tree.links[tree.link_index(f"{side}_hip")]
                shank = tree.links[tree.link_index(f"{side}_shank")]
                foot = tree.links[tree.link_index(f"{side}_foot")]
            except KeyError as e:
                raise ValueError(f"tree lacks the expected biped leg links: {e}")
            for link in (hip, shank, foot):
                if link.axis is None or abs(abs(link.axis[1]) - 1.0) > 1e-9:
                    raise ValueError("leg joints must all be pitch (y-axis) joints")
            slots = tuple(tree.joint_slot[tree.link_index(f"{side}_{part}")]
                          for part in ("hip", "shank", "foot"))
            return hip.offset_xyz[1], -shank.offset_xyz[2], -foot.offset_xyz[2], slots

        wl, l1, l2, ls = leg("l")
        wr, r1, r2, rs = leg("r")
        if not (np.isclose(wl, -wr) and np.isclose(l1, r1) and np.isclose(l2, r2)):
            raise ValueError("legs are not mirror symmetric")
        return cls(float(wl), float(l1), float(l2), ls, rs, tree.n)

    def slots(self, side):
        return self.left_slots if side == "l" else self.right_slots

    def hip_y(self, side):
        return self.hip_half_width if side == "l" else -self.hip_half_width


def leg_ik(geo, side, target, pitch):
    """Closed-form planar IK: joint angles (hip, knee, ankle) that place the
    sole at a base-frame position with a base-relative foot pitch.

    The target must lie in the leg's sagittal plane (y equal to the hip
    offset). Raises ValueError outside the reach annulus -- the caller's
    step/height plan is infeasible.
    """
    target = np.asarray(target, dtype=float)
    if abs(target[1] - geo.hip_y(side)) > 1e-9:
        raise ValueError(
            f"lateral foot target {target[1]:.4f} infeasible for the planar "
            f"{side} leg (hip line y={geo.hip_y(side):.4f})")
    vx = float(target[0])
    vz = float(target[2])
    l1, l2 = geo.thigh, geo.shank
    r2 = vx * vx + vz * vz
    cos_knee = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if cos_knee > 1.0 - 1e-9:
        raise ValueError(
            f"foot target ({vx:.3f}, {vz:.3f}) beyond leg reach "
            f"(need {np.sqrt(r2):.3f} m of {l1 + l2:.3f} m)")
    if cos_knee < -1.0 + 1e-9:
        raise ValueError(f"foot target ({vx:.3f}, {vz:.3f}) requires a folded leg")
    c = float(np.arccos(cos_knee))
    k1, k2 = l1 + l2 * np.cos(c), l2 * np.sin(c)
    b = float(np.arctan2(-vx, -vz) - np.arctan2(k2, k1))
    return np.array([b, c, pitch - b - c])


def leg_relative_transform(geo, side, angles):
    """Base->sole transform of one leg for joint angles (hip, knee, ankle)."""
    b, c, d = angles
    p = np.array([-geo.thigh * np.sin(b) - geo.shank * np.sin(b + c),
                  geo.hip_y(side),
                  -geo.thigh * np.cos(b) - geo.shank * np.cos(b + c)])
    return make_transform(rotation_y(b + c + d), p)


def _cycloid(u):
    return u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)


def _cycloid_rate(u):
    return 1.0 - np.cos(2.0 * np.pi * u)


def _bump(u):
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * u))


def _bump_rate(u):
    return np.pi * np.sin(2.0 * np.pi * u)


class _Builder:
    """Frame accumulator with decorative-joint overlay and walk marking."""

    def __init__(self, tree, geo, params):
        self.params = params
        self.rows = {k: [] for k in ("p", "R", "v", "s", "ds", "alpha", "walk")}
        self.k = 0
        self.decor = [i for i in range(tree.n)
                      if i not in geo.left_slots + geo.right_slots]
        rng = np.random.default_rng(params.seed)
        self.decor_phase = rng.uniform(0.0, 2.0 * np.pi, len(self.decor))

    def decorative(self, t):
        A, f = self.params.decorative_amplitude, self.params.decorative_frequency
        if not self.decor or A == 0.0:
            return np.zeros(0), np.zeros(0), []
        arg = 2.0 * np.pi * f * t + self.decor_phase
        return A * np.sin(arg), A * 2.0 * np.pi * f * np.cos(arg), self.decor

    def emit(self, p, R, v6, s, ds, alpha, walking):
        t = self.k * DT
        pos, rate, idx = self.decorative(t)
        s, ds = s.copy(), ds.copy()
        if len(idx):
            s[idx], ds[idx] = pos, rate
        self.rows["p"].append(np.asarray(p, dtype=float).copy())
        self.rows["R"].append(np.asarray(R, dtype=float).copy())
        self.rows["v"].append(np.asarray(v6, dtype=float).copy())
        self.rows["s"].append(s)
        self.rows["ds"].append(ds)
        self.rows["alpha"].append(alpha)
        self.rows["walk"].append(walking)
        self.k += 1


def generate_gait(tree, params):
    """Generate one labeled trajectory from a plan.

    At every sample the labeled support foot's 6D velocity J_SF nu is zero to
    machine precision and its pose is pinned flat for the whole stance (any
    configured lateral/yaw label bias is added on top of the consistent
    velocities afterwards).
    """
    geo = BipedGeometry.from_tree(tree)
    p = params
    if p.base_height >= geo.thigh + geo.shank:
        raise ValueError(
            f"base height {p.base_height} not below leg length "
            f"{geo.thigh + geo.shank}")
    segments = p.segments or forward_walk_segments(4.0)
    b = _Builder(tree, geo, p)
    h = p.base_height

    # plan-frame state: base on the x axis, feet on their hip lines
    cx = 0.0
    foothold = {"l": 0.0, "r": 0.0}   # sole x while planted (z = 0, flat)
    s = np.zeros(tree.n)

    def stance_solve(side, base_p, base_R, base_pitch):
        rel = base_R.T @ (np.array([foothold[side], geo.hip_y(side), 0.0]) - base_p)
        return leg_ik(geo, side, rel, -base_pitch)

    for side in ("l", "r"):
        s[list(geo.slots(side))] = stance_solve(
            side, np.array([0.0, 0.0, h]), np.eye(3), 0.0)
    support = "r"          # first swing is the left foot
    swing_next = "l"

    def hold(frames, walking=False):
        ds = np.zeros(tree.n)
        v6 = np.zeros(6)
        base_p = np.array([cx, 0.0, h])
        for _ in range(frames):
            b.emit(base_p, np.eye(3), v6, s, ds, 1 if support == "l" else 0, walking)

    def do_swing(swing, step):
        nonlocal cx, support
        stance = "l" if swing == "r" else "r"
        support = stance
        st = list(geo.slots(stance))
        sw = list(geo.slots(swing))
        D = p.swing_frames()
        T = D * DT
        start = foothold[swing]
        land = cx + step + 0.5 * step if step != 0.0 else start
        travel = land - start
        alpha = 1 if stance == "l" else 0
        # bob/nod scale with the stride so stepping in place keeps the base
        # exactly fixed
        sway = min(1.0, abs(step) / 0.2)
        bob = p.bob_amplitude * sway
        nod = p.pitch_amplitude * sway
        for k in range(1, D + 1):
            u = k / D
            cyc, dcyc = _cycloid(u), _cycloid_rate(u) / T
            bmp, dbmp = _bump(u), _bump_rate(u) / T
            # base plan: forward cycloid, height dip, pitch nod
            bx = cx + step * cyc
            bz = h - bob * bmp
            pitch = nod * bmp
            base_p = np.array([bx, 0.0, bz])
            base_R = rotation_y(pitch)
            v_world = np.array([step * dcyc, 0.0, -bob * dbmp])
            v6 = np.concatenate([base_R.T @ v_world,
                                 [0.0, nod * dbmp, 0.0]])
            s[st] = stance_solve(stance, base_p, base_R, pitch)
            ds = np.zeros(tree.n)
            J_st = frame_jacobian(tree, base_p, base_R, s, f"{stance}_foot")
            ds[st] = np.linalg.lstsq(J_st[:, [6 + i for i in st]],
                                     -J_st[:, :6] @ v6, rcond=None)[0]
            # swing sole: world cycloid with clearance bump, landing flat
            wx = start + travel * cyc
            wz = p.step_clearance * bmp
            rel = base_R.T @ (np.array([wx, geo.hip_y(swing), wz]) - base_p)
            s[sw] = leg_ik(geo, swing, rel, -pitch)
            J_sw = frame_jacobian(tree, base_p, base_R, s, f"{swing}_foot")
            demand = np.array([travel * dcyc, 0.0, p.step_clearance * dbmp,
                               0.0, 0.0, 0.0])
            R_foot = np.eye(3)  # swing sole is kept flat, so body = world
            demand[:3] = R_foot.T @ demand[:3]
            ds[sw] = np.linalg.lstsq(J_sw[:, [6 + i for i in sw]],
                                     demand - J_sw[:, :6] @ v6, rcond=None)[0]
            pos, rate, idx = b.decorative(b.k * DT)
            if len(idx):
                ds[idx] = rate
            b.emit(base_p, base_R, v6, s, ds, alpha, True)
        # the landed foot becomes support only once the old one lifts, i.e.
        # at the first frame of the next swing; double-support pause frames
        # keep the old label, matching the annotator's hysteresis
        foothold[swing] = land
        cx = cx + step

    hold(max(1, round(p.lead_in * RATE_HZ)))
    for seg in segments:
        if seg.kind == "stand":
            hold(round(seg.duration * RATE_HZ))
            continue
        period = (p.swing_frames() + p.pause_frames()) * DT
        steps = max(1, round(seg.duration / period))
        for _ in range(steps):
            swing = swing_next
            swing_next = "l" if swing == "r" else "r"
            do_swing(swing, seg.step_length)
            hold(p.pause_frames(), walking=False)
    hold(max(1, round(p.lead_out * RATE_HZ)))

    # place the plan in the world and apply any velocity label bias
    Rw = rotation_z(p.start_yaw)
    offset = np.array([p.start_xy[0], p.start_xy[1], 0.0])
    P = np.stack(b.rows["p"]) @ Rw.T + offset
    R = np.einsum("ij,kjl->kil", Rw, np.stack(b.rows["R"]))
    V = np.stack(b.rows["v"])
    walk = np.array(b.rows["walk"], dtype=bool)
    if p.lateral_bias or p.yaw_bias:
        V[walk, 1] += p.lateral_bias
        V[walk, 5] += p.yaw_bias
    rpy = np.stack([matrix_to_rpy(Ri) for Ri in R])
    return Trajectory(
        time=np.arange(len(P)) * DT,
        base_position=P,
        base_rpy=rpy,
        base_velocity=V,
        joint_positions=np.stack(b.rows["s"]),
        joint_velocities=np.stack(b.rows["ds"]),
        contact=np.array(b.rows["alpha"], dtype=int),
        base_rotation=R,
        meta={"generator": "gaitgen-synthetic v1", "params": p.meta()})


@dataclass
class ConsistencyReport:
    """Support-foot residuals of a labeled trajectory."""

    max_linear_residual: float      # max ||(J_SF nu)_lin|| over stance samples
    max_angular_residual: float
    max_position_deviation: float   # stance-foot drift from phase-initial pose
    max_rotation_deviation: float

    @property
    def max_residual(self):
        return max(self.max_linear_residual, self.max_angular_residual)


def verify_consistency(tree, traj):
    """Measure how well the labeled support foot stays fixed."""
    if traj.contact is None:
        raise ValueError("trajectory has no contact labels")
    lin = ang = posdev = rotdev = 0.0
    anchor = None
    prev_label = None
    for i in range(len(traj)):
        pb, Rb = traj.base_position[i], traj.base_rotation[i]
        q = traj.joint_positions[i]
        nu = np.concatenate([traj.base_velocity[i], traj.joint_velocities[i]])
        foot = tree.left_foot if traj.contact[i] == 1 else tree.right_foot
        J = frame_jacobian(tree, pb, Rb, q, foot)
        v = J @ nu
        lin = max(lin, float(np.linalg.norm(v[:3])))
        ang = max(ang, float(np.linalg.norm(v[3:])))
        T = forward_kinematics(tree, pb, Rb, q)[foot]
        if traj.contact[i] != prev_label:
            anchor, prev_label = T, traj.contact[i]
        else:
            posdev = max(posdev, float(np.linalg.norm(T[:3, 3] - anchor[:3, 3])))
            rotdev = max(rotdev, geodesic_distance(T[:3, :3], anchor[:3, :3]))
    return ConsistencyReport(lin, ang, posdev, rotdev)
