import numpy as np
import pytest

from gaitgen.kinematics import forward_kinematics, planar_biped
from gaitgen.synthdata import (GaitParams, GaitSegment, forward_walk_segments,
                               generate_gait, leg_ik, leg_relative_transform,
                               mixed_segments, verify_consistency, BipedGeometry)
from gaitgen.trajectory import Trajectory, default_mirror_map, mirror_trajectory


def test_leg_ik_matches_leg_transform(biped):
    geo = BipedGeometry.from_tree(biped)
    rng = np.random.default_rng(0)
    for _ in range(100):
        target = np.array([rng.uniform(-0.3, 0.3), geo.hip_y("l"),
                           rng.uniform(-0.78, -0.4)])
        pitch = rng.uniform(-0.5, 0.5)
        angles = leg_ik(geo, "l", target, pitch)
        T = leg_relative_transform(geo, "l", angles)
        assert np.max(np.abs(T[:3, 3] - target)) <= 1e-12
        # foot pitch equals the requested base-relative pitch
        assert abs(np.arctan2(-T[2, 0], T[2, 2]) - pitch) <= 1e-12


def test_leg_ik_agrees_with_full_tree_fk(biped):
    geo = BipedGeometry.from_tree(biped)
    angles = leg_ik(geo, "r", np.array([0.15, geo.hip_y("r"), -0.7]), 0.1)
    s = np.zeros(6)
    s[list(geo.right_slots)] = angles
    world = forward_kinematics(biped, np.zeros(3), np.eye(3), s)
    T = leg_relative_transform(geo, "r", angles)
    assert np.max(np.abs(world["r_foot"] - T)) <= 1e-12


def test_leg_ik_reach_errors(biped):
    geo = BipedGeometry.from_tree(biped)
    with pytest.raises(ValueError):
        leg_ik(geo, "l", np.array([1.0, geo.hip_y("l"), -0.7]), 0.0)
    with pytest.raises(ValueError):
        leg_ik(geo, "l", np.array([0.0, 0.3, -0.7]), 0.0)
    # inner reach boundary requires unequal link lengths
    uneven = BipedGeometry(0.1, 0.5, 0.3, (0, 1, 2), (3, 4, 5), 6)
    with pytest.raises(ValueError):
        leg_ik(uneven, "l", np.array([0.0, 0.1, -0.1]), 0.0)


def test_forward_gait_is_consistent(biped, forward_gait):
    report = verify_consistency(biped, forward_gait)
    assert report.max_linear_residual <= 1e-8
    assert report.max_angular_residual <= 1e-8
    assert report.max_position_deviation <= 1e-8
    assert report.max_rotation_deviation <= 1e-8


def test_mixed_plan_consistency_and_coverage(biped):
    params = GaitParams(segments=mixed_segments(30.0, seed=5),
                        start_xy=(2.0, -1.0), start_yaw=0.7, seed=5)
    traj = generate_gait(biped, params)
    report = verify_consistency(biped, traj)
    assert report.max_residual <= 1e-8
    # plan should contain both support sides and both motion and rest
    assert set(np.unique(traj.contact)) == {0, 1}
    speeds = np.linalg.norm(traj.base_velocity[:, :3], axis=1)
    assert speeds.max() > 0.1 and speeds.min() == 0.0


def test_zero_step_length_keeps_base_fixed(biped):
    params = GaitParams(segments=(GaitSegment("walk", 3.0, step_length=0.0),))
    traj = generate_gait(biped, params)
    assert verify_consistency(biped, traj).max_residual <= 1e-8
    drift = np.max(np.linalg.norm(
        traj.base_position - traj.base_position[0], axis=1))
    assert drift <= 1e-8
    # the swing feet still lift to the commanded clearance
    heights = []
    for i in range(len(traj)):
        world = forward_kinematics(biped, traj.base_position[i],
                                   traj.base_rotation[i], traj.joint_positions[i])
        heights.append(max(world["l_foot"][2, 3], world["r_foot"][2, 3]))
    assert abs(max(heights) - params.step_clearance) <= 1e-6


def test_standing_trajectory_has_zero_residual(biped):
    params = GaitParams(segments=(GaitSegment("stand", 2.0),))
    traj = generate_gait(biped, params)
    assert np.array_equal(traj.base_velocity, np.zeros_like(traj.base_velocity))
    assert verify_consistency(biped, traj).max_residual == 0.0


def test_mirrored_gait_is_consistent(biped, forward_gait):
    mirrored = mirror_trajectory(forward_gait, default_mirror_map(biped))
    report = verify_consistency(biped, mirrored)
    assert report.max_residual <= 1e-8
    assert report.max_position_deviation <= 1e-8


def test_injected_slide_is_detected(biped, forward_gait):
    traj = forward_gait.window(0, len(forward_gait))
    traj.base_velocity = traj.base_velocity.copy()
    traj.base_velocity[:, 0] += 0.05  # constant forward slide of the base
    report = verify_consistency(biped, traj)
    assert report.max_linear_residual >= 0.05


def test_generator_deterministic_per_seed(biped, tmp_path):
    params = GaitParams(segments=mixed_segments(10.0, seed=9), seed=9)
    a = generate_gait(biped, params)
    b = generate_gait(biped, params)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.save(pa)
    b.save(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_infeasible_step_length_raises(biped):
    params = GaitParams(segments=forward_walk_segments(3.0, step_length=0.9))
    with pytest.raises(ValueError):
        generate_gait(biped, params)


def test_param_validation():
    with pytest.raises(ValueError):
        GaitParams(stance_duration=0.2, swing_duration=0.3)
    with pytest.raises(ValueError):
        GaitParams(step_clearance=0.0)
    with pytest.raises(ValueError):
        GaitSegment("sideways", 1.0)
    with pytest.raises(ValueError):
        GaitSegment("walk", -1.0)


def test_swing_frames_even():
    for swing in (0.30, 0.31, 0.32, 0.33):
        assert GaitParams(swing_duration=swing, stance_duration=0.5).swing_frames() % 2 == 0


def test_support_foot_height_constant_and_apex_exact(biped, forward_gait):
    traj = forward_gait
    clearance = GaitParams().step_clearance
    sup_heights, swing_max = [], 0.0
    for i in range(len(traj)):
        world = forward_kinematics(biped, traj.base_position[i],
                                   traj.base_rotation[i], traj.joint_positions[i])
        sup = "l_foot" if traj.contact[i] == 1 else "r_foot"
        swing = "r_foot" if traj.contact[i] == 1 else "l_foot"
        sup_heights.append(world[sup][2, 3])
        swing_max = max(swing_max, world[swing][2, 3])
    assert np.max(np.abs(np.asarray(sup_heights))) <= 1e-6
    assert abs(swing_max - clearance) <= 1e-6


def test_contact_labels_switch_one_frame_after_exchange(biped, forward_gait):
    # at an exchange frame both feet are grounded and every rate vanishes
    switches = np.nonzero(np.diff(forward_gait.contact))[0]
    assert len(switches) >= 4
    for i in switches:
        nu = np.concatenate([forward_gait.base_velocity[i],
                             forward_gait.joint_velocities[i]])
        assert np.linalg.norm(nu) <= 1e-9


def test_velocity_bias_injection(biped):
    params = GaitParams(segments=forward_walk_segments(3.0),
                        lateral_bias=0.02, yaw_bias=0.01)
    traj = generate_gait(biped, params)
    walk = np.abs(traj.base_velocity[:, 0]) > 1e-9
    assert np.allclose(traj.base_velocity[walk, 1], 0.02)
    assert np.allclose(traj.base_velocity[walk, 5], 0.01)
    # the bias is a deliberate inconsistency of matching size
    report = verify_consistency(biped, traj)
    assert 0.015 <= report.max_linear_residual <= 0.06


def test_world_placement_is_rigid(biped):
    base = GaitParams(segments=forward_walk_segments(3.0))
    moved = GaitParams(segments=forward_walk_segments(3.0),
                       start_xy=(1.5, -2.0), start_yaw=0.6)
    a = generate_gait(biped, base)
    b = generate_gait(biped, moved)
    assert verify_consistency(biped, b).max_residual <= 1e-8
    assert np.array_equal(a.joint_positions, b.joint_positions)
    assert np.allclose(a.base_velocity, b.base_velocity, atol=1e-15)
    Rz = np.array([[np.cos(0.6), -np.sin(0.6), 0], [np.sin(0.6), np.cos(0.6), 0],
                   [0, 0, 1.0]])
    expected = a.base_position @ Rz.T + np.array([1.5, -2.0, 0.0])
    assert np.max(np.abs(b.base_position - expected)) <= 1e-12
