"""Floating-base forward kinematics and frame Jacobians for revolute chains.

Conventions:
  * The root link is the floating base; its world pose is part of the state.
  * Each non-root link carries a fixed offset transform from its parent and
    optionally one revolute joint (unit axis in the link frame) applied after
    the offset. Links without an axis are rigid attachments (e.g. feet).
  * All 6D velocities are left-trivialized: a frame's velocity (v, w) is
    expressed in that frame itself. With this convention the base block of a
    frame Jacobian is exactly the adjoint of the frame<-base relative
    transform: block upper-triangular with rotations on the diagonal, hence
    always invertible.
"""

from dataclasses import dataclass, field

import numpy as np

from .rotations import hat, matrix_to_rpy, rpy_to_matrix

AXIS_UNIT_TOL = 1e-12
ROTATION_TOL = 1e-9


def make_transform(R, p):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


def transform_inverse(T):
    R = T[:3, :3]
    Ti = np.eye(4)
    Ti[:3, :3] = R.T
    Ti[:3, 3] = -R.T @ T[:3, 3]
    return Ti


def adjoint(T):
    """6x6 velocity transform of T for twists ordered (linear, angular)."""
    R = T[:3, :3]
    A = np.zeros((6, 6))
    A[:3, :3] = R
    A[:3, 3:] = hat(T[:3, 3]) @ R
    A[3:, 3:] = R
    return A


@dataclass
class Link:
    name: str
    parent: int                    # index into the link list, -1 for the root
    offset_xyz: np.ndarray
    offset_rpy: np.ndarray
    axis: np.ndarray | None = None  # revolute axis in the link frame, or None

    def offset_transform(self):
        return make_transform(rpy_to_matrix(self.offset_rpy), self.offset_xyz)


@dataclass
class KinematicTree:
    """Rigid-body chain description with named base and foot frames."""

    links: list[Link]
    base_frame: str
    left_foot: str
    right_foot: str
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {link.name: i for i, link in enumerate(self.links)}
        if len(self._index) != len(self.links):
            raise ValueError("duplicate link names in kinematic tree")
        for i, link in enumerate(self.links):
            if i == 0:
                if link.parent != -1:
                    raise ValueError("first link must be the root (parent -1)")
                if link.axis is not None:
                    raise ValueError("the floating base link cannot carry a joint")
            elif not 0 <= link.parent < i:
                raise ValueError(
                    f"link {link.name!r}: parent index {link.parent} does not "
                    "precede it (links must be listed parent-first)")
            if link.axis is not None:
                err = abs(np.linalg.norm(link.axis) - 1.0)
                if err > AXIS_UNIT_TOL:
                    raise ValueError(
                        f"joint axis of {link.name!r} not unit norm (error {err:.2e})")
        for frame in (self.base_frame, self.left_foot, self.right_foot):
            if frame not in self._index:
                raise KeyError(f"named frame {frame!r} is not a link")
        if self._index[self.base_frame] != 0:
            raise ValueError("base frame must be the root link")
        self.joint_order = [i for i, l in enumerate(self.links) if l.axis is not None]
        self.joint_slot = {i: k for k, i in enumerate(self.joint_order)}

    @property
    def n(self):
        return len(self.joint_order)

    @property
    def joint_names(self):
        return [self.links[i].name for i in self.joint_order]

    def link_index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown frame {name!r}; links: {sorted(self._index)}")

    def path_to_root(self, name):
        """Link indices from the named frame up to (excluding) the root."""
        i = self.link_index(name)
        path = []
        while i > 0:
            path.append(i)
            i = self.links[i].parent
        return path

    def to_text(self):
        lines = ["# gaitgen kinematic model v1",
                 f"frames {self.base_frame} {self.left_foot} {self.right_foot}"]
        for link in self.links:
            parent = "-" if link.parent < 0 else self.links[link.parent].name
            nums = [*link.offset_xyz, *link.offset_rpy]
            if link.axis is not None:
                nums += list(link.axis)
            lines.append(f"link {link.name} {parent} " + " ".join(repr(float(v)) for v in nums))
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text, origin="<string>"):
        """Parse the plain-text model format written by to_text()."""
        links, frames = [], None
        names = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "frames":
                if len(tok) != 4:
                    raise ValueError(f"{origin}:{ln}: frames needs 3 names")
                frames = tok[1:]
            elif tok[0] == "link":
                if len(tok) not in (9, 12):
                    raise ValueError(
                        f"{origin}:{ln}: link needs 6 offset values and an "
                        "optional 3-value axis")
                name, parent = tok[1], tok[2]
                vals = [float(v) for v in tok[3:]]
                if parent == "-":
                    pidx = -1
                elif parent in names:
                    pidx = names[parent]
                else:
                    raise ValueError(f"{origin}:{ln}: unknown parent {parent!r}")
                axis = np.array(vals[6:9]) if len(vals) == 9 else None
                names[name] = len(links)
                links.append(Link(name, pidx, np.array(vals[0:3]),
                                  np.array(vals[3:6]), axis))
            else:
                raise ValueError(f"{origin}:{ln}: unknown directive {tok[0]!r}")
        if frames is None:
            raise ValueError(f"{origin}: missing frames line")
        return cls(links, *frames)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read(), origin=str(path))


@dataclass
class KinematicState:
    """Full kinematic state: base pose, joint positions, 6D base velocity
    (linear, angular, body-fixed) and joint velocities."""

    base_position: np.ndarray
    base_rotation: np.ndarray
    joint_positions: np.ndarray
    base_velocity: np.ndarray
    joint_velocities: np.ndarray

    def __post_init__(self):
        self.base_position = np.asarray(self.base_position, dtype=float).reshape(3)
        self.base_rotation = np.asarray(self.base_rotation, dtype=float).reshape(3, 3)
        self.joint_positions = np.asarray(self.joint_positions, dtype=float).ravel()
        self.base_velocity = np.asarray(self.base_velocity, dtype=float).reshape(6)
        self.joint_velocities = np.asarray(self.joint_velocities, dtype=float).ravel()
        R = self.base_rotation
        if np.max(np.abs(R.T @ R - np.eye(3))) > ROTATION_TOL or np.linalg.det(R) < 0:
            raise ValueError("base rotation is not orthonormal with det +1")
        if self.joint_velocities.shape != self.joint_positions.shape:
            raise ValueError("joint position/velocity lengths disagree")

    @property
    def rpy(self):
        return matrix_to_rpy(self.base_rotation)

    @property
    def nu(self):
        """Combined velocity (base 6D followed by joint rates)."""
        return np.concatenate([self.base_velocity, self.joint_velocities])


def joint_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    K = hat(axis)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def forward_kinematics(tree, base_position, base_rotation, joint_positions):
    """World transform of every link, as a dict name -> 4x4 matrix."""
    joint_positions = np.asarray(joint_positions, dtype=float).ravel()
    if joint_positions.shape[0] != tree.n:
        raise ValueError(
            f"expected {tree.n} joint positions, got {joint_positions.shape[0]}")
    world = [None] * len(tree.links)
    world[0] = make_transform(np.asarray(base_rotation, dtype=float),
                              np.asarray(base_position, dtype=float))
    for i, link in enumerate(tree.links[1:], start=1):
        T = world[link.parent] @ link.offset_transform()
        if link.axis is not None:
            q = joint_positions[tree.joint_slot[i]]
            T = T @ make_transform(joint_rotation(link.axis, q), np.zeros(3))
        world[i] = T
    return {link.name: world[i] for i, link in enumerate(tree.links)}


def frame_transform(tree, base_position, base_rotation, joint_positions, frame):
    tree.link_index(frame)  # raise on unknown names before doing the work
    return forward_kinematics(tree, base_position, base_rotation, joint_positions)[frame]


def frame_jacobian(tree, base_position, base_rotation, joint_positions, frame):
    """6x(6+n) left-trivialized frame Jacobian [J_base | J_joints].

    The frame's body-fixed velocity is J @ nu for nu = (base 6D velocity,
    joint rates). J_base is the adjoint of the frame<-base transform; columns
    of J_joints are zero for joints off the base->frame path.
    """
    idx = tree.link_index(frame)
    world = forward_kinematics(tree, base_position, base_rotation, joint_positions)
    names = [l.name for l in tree.links]
    T_frame_inv = transform_inverse(world[frame])
    J = np.zeros((6, 6 + tree.n))
    J[:, :6] = adjoint(T_frame_inv @ world[names[0]])
    for i in tree.path_to_root(frame):
        link = tree.links[i]
        if link.axis is None:
            continue
        X = T_frame_inv @ world[link.name]
        Ra = X[:3, :3] @ link.axis
        col = tree.joint_slot[i]
        J[:3, 6 + col] = hat(X[:3, 3]) @ Ra
        J[3:, 6 + col] = Ra
    _assert_base_block(J[:, :6], frame)
    return J


def _assert_base_block(JB, frame):
    # structural guarantee of the left-trivialized convention; violations
    # would mean a broken transform chain upstream
    if np.max(np.abs(JB[3:, :3])) > ROTATION_TOL:
        raise AssertionError(f"base Jacobian block of {frame!r} lost triangularity")
    for blk in (JB[:3, :3], JB[3:, 3:]):
        if np.max(np.abs(blk.T @ blk - np.eye(3))) > ROTATION_TOL:
            raise AssertionError(
                f"base Jacobian diagonal block of {frame!r} not orthonormal")


def base_velocity_from_constraint(J_sf, joint_velocities):
    """Base 6D velocity that pins the support foot: -inv(J_base) J_joints sdot.

    J_base is structurally invertible (block triangular, rotation diagonal).
    """
    J_sf = np.asarray(J_sf, dtype=float)
    sdot = np.asarray(joint_velocities, dtype=float).ravel()
    if J_sf.shape != (6, 6 + sdot.shape[0]):
        raise ValueError(
            f"Jacobian shape {J_sf.shape} does not match {sdot.shape[0]} joint rates")
    return -np.linalg.solve(J_sf[:, :6], J_sf[:, 6:] @ sdot)


def planar_biped(n=6, hip_half_width=0.1, thigh=0.4, shank=0.4):
    """Desk-scale sagittal biped: per leg a hip pitch, knee pitch and ankle
    pitch, with the ankle joint at the point sole so the foot frame origin is
    the ground contact. Joint counts above 6 add a decorative torso/arm chain
    off the base that never touches the leg paths.
    """
    if n < 6 or n % 2:
        raise ValueError(f"planar biped needs an even joint count >= 6, got {n}")
    z = np.array([0.0, 0.0, 1.0])
    y = np.array([0.0, 1.0, 0.0])
    x = np.array([1.0, 0.0, 0.0])
    links = [Link("base", -1, np.zeros(3), np.zeros(3))]

    def leg(side, sign):
        links.append(Link(f"{side}_hip", 0, np.array([0.0, sign * hip_half_width, 0.0]),
                          np.zeros(3), y.copy()))
        links.append(Link(f"{side}_shank", len(links) - 1, np.array([0.0, 0.0, -thigh]),
                          np.zeros(3), y.copy()))
        links.append(Link(f"{side}_foot", len(links) - 1, np.array([0.0, 0.0, -shank]),
                          np.zeros(3), y.copy()))

    leg("l", +1)
    leg("r", -1)
    axes = [y, z, x]
    extra = (n - 6) // 2
    for side in ("l", "r"):
        parent = 0
        for k in range(extra):
            links.append(Link(f"{side}_aux{k}", parent,
                              np.array([0.0, (0.05 if side == "l" else -0.05), 0.15 + 0.05 * k]),
                              np.zeros(3), axes[k % 3].copy()))
            parent = len(links) - 1
    return KinematicTree(links, "base", "l_foot", "r_foot")
