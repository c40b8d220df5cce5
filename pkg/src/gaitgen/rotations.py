"""SO(3) helpers: hat/vee maps, Rodrigues exponential, Tait-Bryan conversions.

Angle convention throughout the package: extrinsic roll-pitch-yaw about the
fixed x, y, z axes, i.e. R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
"""

import numpy as np

GIMBAL_LOCK_MARGIN = 1e-6


class GimbalLockError(ValueError):
    """Pitch too close to +-pi/2 for a well-defined angle extraction."""


def hat(w):
    w = np.asarray(w, dtype=float).reshape(3)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vee(S):
    S = np.asarray(S, dtype=float)
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def skew_vee(M):
    """Vee of the antisymmetric part of a 3x3 matrix: vee((M - M^T)/2)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"skew_vee expects a 3x3 matrix, got shape {M.shape}")
    return 0.5 * np.array([
        M[2, 1] - M[1, 2],
        M[0, 2] - M[2, 0],
        M[1, 0] - M[0, 1],
    ])


def rotation_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_matrix(rpy):
    """Extrinsic roll-pitch-yaw (x-y-z) to rotation matrix."""
    roll, pitch, yaw = np.asarray(rpy, dtype=float).reshape(3)
    return rotation_z(yaw) @ rotation_y(pitch) @ rotation_x(roll)


def matrix_to_rpy(R):
    """Rotation matrix to extrinsic roll-pitch-yaw.

    Raises GimbalLockError when |pitch| is within GIMBAL_LOCK_MARGIN of pi/2,
    where roll and yaw are no longer separable.
    """
    R = np.asarray(R, dtype=float)
    cos_pitch = np.hypot(R[2, 1], R[2, 2])
    pitch = np.arctan2(-R[2, 0], cos_pitch)
    if abs(abs(pitch) - np.pi / 2) < GIMBAL_LOCK_MARGIN:
        raise GimbalLockError(f"pitch {pitch:.9f} within {GIMBAL_LOCK_MARGIN} of +-pi/2")
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def rodrigues(w):
    """Closed-form matrix exponential of hat(w) for a rotation vector w."""
    w = np.asarray(w, dtype=float).reshape(3)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < 1e-10:
        # second-order series; exact to machine precision at this magnitude
        return np.eye(3) + W + 0.5 * (W @ W)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def reorthonormalize(R):
    """Nearest rotation matrix via polar decomposition (SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] = -U[:, -1]
        Q = U @ Vt
    return Q


def orthonormality_error(R):
    R = np.asarray(R, dtype=float)
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


def geodesic_distance(Ra, Rb):
    """Rotation angle between two rotation matrices, in radians.

    atan2 form: full precision near zero, where the arccos form loses half
    the significant digits.
    """
    S = np.asarray(Ra).T @ np.asarray(Rb)
    sin_t = np.linalg.norm(skew_vee(S))
    cos_t = (np.trace(S) - 1.0) / 2.0
    return float(np.arctan2(sin_t, cos_t))


def mirror_matrix_xz(R):
    """Conjugate a rotation by the xz-plane reflection diag(1,-1,1).

    Implemented by sign masking so the operation is an exact involution
    (negating roll and yaw while preserving pitch).
    """
    sign = np.array([1.0, -1.0, 1.0])
    return np.asarray(R, dtype=float) * np.outer(sign, sign)
