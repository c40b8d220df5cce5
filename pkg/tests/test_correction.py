import numpy as np
import pytest

from gaitgen.correction import (CorrectionGains, WaypointSchedule,
                                correct_angular, correct_linear,
                                forward_schedule)
from gaitgen.rotations import geodesic_distance, hat, rodrigues, rotation_z, skew_vee


def test_gains_validation():
    with pytest.raises(ValueError):
        CorrectionGains(-0.1, 1.0)
    assert CorrectionGains(0.0, 0.0).disabled
    assert not CorrectionGains(1.0, 0.0).disabled


def test_skew_vee_inverts_hat():
    assert np.array_equal(skew_vee(hat([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_skew_vee_of_small_z_rotation():
    for theta in (0.01, 0.2, -0.3):
        v = skew_vee(rotation_z(theta))
        assert np.max(np.abs(v - [0.0, 0.0, np.sin(theta)])) <= 1e-12


def test_skew_vee_shape_error():
    with pytest.raises(ValueError):
        skew_vee(np.zeros((2, 2)))


def test_correct_linear_zero_error_is_exact():
    rng = np.random.default_rng(0)
    v = rng.normal(size=3)
    R = rodrigues(rng.normal(size=3))
    p = rng.normal(size=3)
    out = correct_linear(v, R, p, p, 0.7)
    assert np.array_equal(out, v)


def test_correct_linear_direct_substitution():
    out = correct_linear(np.zeros(3), np.eye(3), [1.0, 0.0, 0.0],
                         [0.0, 0.0, 0.0], 0.5)
    assert np.array_equal(out, [-0.5, 0.0, 0.0])


def test_correct_linear_rotates_error_into_body_frame():
    R = rotation_z(np.pi / 2)
    out = correct_linear(np.zeros(3), R, [1.0, 0.0, 0.0], np.zeros(3), 1.0)
    # world x error appears along the body's -y axis
    assert np.max(np.abs(out - [0.0, 1.0, 0.0])) <= 1e-12


def test_closed_loop_position_decay_matches_exponential():
    # Euler integration of pdot = R v_c with zero prediction and k0 = 1:
    # the error should track exp(-t) within 5% over five time constants
    dt, k0 = 0.02, 1.0
    p = np.array([1.0, -2.0, 0.5])
    p_d = np.zeros(3)
    R = np.eye(3)
    e0 = np.linalg.norm(p - p_d)
    t = 0.0
    worst = 0.0
    while t < 5.0:
        v_c = correct_linear(np.zeros(3), R, p, p_d, k0)
        p = p + R @ v_c * dt
        t += dt
        expected = e0 * np.exp(-k0 * t)
        worst = max(worst, abs(np.linalg.norm(p - p_d) - expected) / expected)
    assert worst <= 0.05


def test_correct_angular_zero_error_is_exact():
    rng = np.random.default_rng(1)
    w = rng.normal(size=3)
    R = rodrigues(rng.normal(size=3))
    out = correct_angular(w, R, R, 1.3)
    assert np.array_equal(out, w)


def test_correct_angular_yaw_error():
    for theta in (0.05, 0.4):
        out = correct_angular(np.zeros(3), rotation_z(theta), np.eye(3), 2.0)
        assert np.max(np.abs(out - [0.0, 0.0, -2.0 * np.sin(theta)])) <= 1e-12


def test_closed_loop_yaw_converges_monotonically():
    dt, k1 = 0.02, 1.0
    R = rotation_z(0.3)
    R_d = np.eye(3)
    last = geodesic_distance(R_d, R)
    for _ in range(500):
        w_c = correct_angular(np.zeros(3), R, R_d, k1)
        R = R @ rodrigues(w_c * dt)
        err = geodesic_distance(R_d, R)
        assert err <= last + 1e-12
        last = err
    assert last < 1e-3


def test_waypoint_schedule_piecewise_selection():
    sched = WaypointSchedule([0.0, 1.0, 2.0],
                             [[0, 0, 0.7], [1, 0, 0.7], [2, 0, 0.7]],
                             [[0, 0, 0.0], [0, 0, 0.1], [0, 0, 0.2]])
    p, R = sched.target(-0.5)
    assert np.array_equal(p, [0, 0, 0.7])
    p, R = sched.target(1.5)
    assert np.array_equal(p, [1, 0, 0.7])
    p, R = sched.target(99.0)
    assert np.array_equal(p, [2, 0, 0.7])
    assert abs(np.arctan2(R[1, 0], R[0, 0]) - 0.2) <= 1e-12


def test_waypoint_schedule_roundtrip(tmp_path):
    sched = forward_schedule(5.0, 0.4, 0.74, interval=0.5, start=(1.0, 2.0), yaw=0.3)
    path = tmp_path / "wp.csv"
    sched.save(path)
    again = WaypointSchedule.load(path)
    assert np.array_equal(again.times, sched.times)
    assert np.array_equal(again.positions, sched.positions)
    assert np.array_equal(again.rpys, sched.rpys)


def test_waypoint_schedule_validation():
    with pytest.raises(ValueError):
        WaypointSchedule([1.0, 0.5], [[0, 0, 0]] * 2, [[0, 0, 0]] * 2)
    with pytest.raises(ValueError):
        WaypointSchedule([], np.zeros((0, 3)), np.zeros((0, 3)))


def test_forward_schedule_advances_along_heading():
    sched = forward_schedule(4.0, 0.5, 0.7, interval=1.0, yaw=np.pi / 2)
    assert np.allclose(sched.positions[2, :2], [0.0, 1.0], atol=1e-12)
