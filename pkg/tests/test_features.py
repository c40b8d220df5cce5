import numpy as np
import pytest

from gaitgen.features import (GATING_SLICE, INPUT_OFFSETS, OUTPUT_OFFSETS,
                              ContactTracker, OutputLayout,
                              annotate_contacts, assemble_rollout_input,
                              build_dataset, extract_input, extract_output,
                              feature_sample, input_size, output_size,
                              valid_sample_range, window_offsets)
from gaitgen.kinematics import planar_biped
from gaitgen.synthdata import GaitParams, GaitSegment, generate_gait
from gaitgen.trajectory import (MirrorMap, Trajectory, default_mirror_map,
                                mirror_trajectory)

# hand-enumerated 6 Hz grid at 50 Hz (k * 50/6, rounded to nearest frame)
INPUT_TABLE = [-50, -42, -33, -25, -17, -8, 0, 8, 17, 25, 33, 42]
OUTPUT_TABLE = [0, 8, 17, 25, 33, 42, 50]


def synthetic_trajectory(n, N=160, seed=0):
    rng = np.random.default_rng(seed)
    return Trajectory(
        time=np.arange(N) / 50.0,
        base_position=rng.normal(size=(N, 3)),
        base_rpy=rng.uniform(-0.5, 0.5, size=(N, 3)),
        base_velocity=rng.normal(size=(N, 6)),
        joint_positions=rng.normal(size=(N, n)),
        joint_velocities=rng.normal(size=(N, n)),
        contact=rng.integers(0, 2, size=N))


def test_window_offsets_match_hand_table():
    assert list(INPUT_OFFSETS) == INPUT_TABLE
    assert list(OUTPUT_OFFSETS) == OUTPUT_TABLE
    assert list(window_offsets(range(-6, 6))) == INPUT_TABLE


@pytest.mark.parametrize("n", [1, 6, 26])
def test_feature_lengths(n):
    traj = synthetic_trajectory(n)
    x = extract_input(traj, 70)
    y = extract_output(traj, 70)
    assert x.shape == (2 * n + 78,)
    assert y.shape == (2 * n + 48,)
    assert input_size(n) == 2 * n + 78
    assert output_size(n) == 2 * n + 48


def test_paper_scale_lengths():
    # 26-joint model: input 130, output 100
    assert input_size(26) == 130
    assert output_size(26) == 100


def test_out_of_range_window_returns_none():
    traj = synthetic_trajectory(4, N=120)
    assert extract_input(traj, 10) is None
    assert extract_output(traj, 115) is None
    lo, hi = valid_sample_range(traj)
    assert extract_input(traj, lo) is not None
    assert extract_output(traj, hi - 1) is not None
    assert extract_input(traj, lo - 1) is None


def test_constant_velocity_fills_identical_slots():
    traj = synthetic_trajectory(3)
    traj.base_velocity[:] = np.array([0.3, 0.1, -0.2, 0.05, 0.0, 0.4])
    x = extract_input(traj, 70)
    lin = x[:36].reshape(12, 3)
    ang = x[36:72].reshape(12, 3)
    assert np.all(lin == lin[0])
    assert np.all(ang == ang[0])
    assert np.array_equal(lin[0], [0.3, 0.1, -0.2])
    assert np.array_equal(ang[0], [0.05, 0.0, 0.4])


def test_stationary_trajectory_zero_velocities_constant_pose():
    traj = synthetic_trajectory(3)
    traj.base_velocity[:] = 0.0
    traj.base_position[:] = traj.base_position[0]
    traj.base_rpy[:] = traj.base_rpy[0]
    y = extract_output(traj, 70)
    assert np.array_equal(y[:42], np.zeros(42))
    lay = OutputLayout(3)
    assert np.array_equal(y[lay.position], traj.base_position[0])


def test_output_first_triple_is_current_velocity():
    traj = synthetic_trajectory(5)
    y = extract_output(traj, 66)
    assert np.array_equal(y[0:3], traj.base_velocity[66, :3])
    assert np.array_equal(y[21:24], traj.base_velocity[66, 3:])


def test_window_samples_use_exact_table_indices():
    traj = synthetic_trajectory(2)
    i = 75
    x = extract_input(traj, i)
    lin = x[:36].reshape(12, 3)
    for row, off in enumerate(INPUT_TABLE):
        assert np.array_equal(lin[row], traj.base_velocity[i + off, :3])
    y = extract_output(traj, i)
    ang = y[21:42].reshape(7, 3)
    for row, off in enumerate(OUTPUT_TABLE):
        assert np.array_equal(ang[row], traj.base_velocity[i + off, 3:])


def test_input_pose_slots_match_previous_output_pose_slots():
    n = 4
    traj = synthetic_trajectory(n)
    i = 80
    x = extract_input(traj, i)
    y_prev = extract_output(traj, i - 1)
    assert np.array_equal(x[72:], y_prev[42:])


def test_gating_slice_covers_velocity_window():
    assert GATING_SLICE == (0, 72)


def test_mirror_is_bitwise_involution(biped, forward_gait):
    mm = default_mirror_map(biped)
    twice = mirror_trajectory(mirror_trajectory(forward_gait, mm), mm)
    for field in ("base_position", "base_rpy", "base_velocity",
                  "joint_positions", "joint_velocities", "base_rotation"):
        assert np.array_equal(getattr(twice, field), getattr(forward_gait, field))
    assert np.array_equal(twice.contact, forward_gait.contact)


def test_mirror_flips_support_flag(biped, forward_gait):
    mm = default_mirror_map(biped)
    mirrored = mirror_trajectory(forward_gait, mm)
    assert np.array_equal(mirrored.contact, 1 - forward_gait.contact)
    # a left-support step mirrors to right support
    i = int(np.argmax(forward_gait.contact == 1))
    assert mirrored.contact[i] == 0


def test_straight_walk_mirrors_onto_itself(biped, forward_gait):
    mm = default_mirror_map(biped)
    mirrored = mirror_trajectory(forward_gait, mm)
    # base path lies in the xz plane, so it is unchanged
    assert np.allclose(mirrored.base_position, forward_gait.base_position)
    assert np.allclose(mirrored.base_velocity, forward_gait.base_velocity)
    # joints appear side-swapped
    l = [biped.joint_slot[biped.link_index(f"l_{p}")] for p in ("hip", "shank", "foot")]
    r = [biped.joint_slot[biped.link_index(f"r_{p}")] for p in ("hip", "shank", "foot")]
    assert np.array_equal(mirrored.joint_positions[:, l],
                          forward_gait.joint_positions[:, r])


def test_mirror_map_validation():
    with pytest.raises(ValueError):
        MirrorMap([(0, 1, 1)], 4)           # joints 2,3 uncovered
    with pytest.raises(ValueError):
        MirrorMap([(0, 1, 2), (2, 3, 1)], 4)  # bad sign
    mm = MirrorMap([(0, 1, -1), (2, 3, 1)], 4)
    out = mm.apply(np.array([1.0, 2.0, 3.0, 4.0]))
    assert np.array_equal(out, [-2.0, -1.0, 4.0, 3.0])


def test_default_mirror_map_signs(biped):
    mm = default_mirror_map(biped)
    # all biped leg joints are pitch joints: sign +1 everywhere
    assert all(s == 1 for _, _, s in mm.pairs)
    tree26 = planar_biped(26)
    mm26 = default_mirror_map(tree26)
    signs = {tree26.joint_names[a]: s for a, b, s in mm26.pairs}
    assert signs["l_aux1"] == -1  # z-axis decorative joint flips


def test_annotation_matches_truth_labels(biped, forward_gait):
    labels = annotate_contacts(biped, forward_gait, 0.01, 0.05)
    agreement = np.mean(labels == forward_gait.contact)
    assert agreement >= 0.99


def test_annotation_hysteresis_standing(biped):
    params = GaitParams(segments=(GaitSegment("stand", 2.0),))
    traj = generate_gait(biped, params)
    labels = annotate_contacts(biped, traj, 0.01, 0.05, initial=0)
    assert np.array_equal(labels, np.zeros(len(traj), dtype=int))
    labels = annotate_contacts(biped, traj, 0.01, 0.05, initial=1)
    assert np.array_equal(labels, np.ones(len(traj), dtype=int))


def test_annotation_alternates_with_stance_period(biped, forward_gait):
    labels = annotate_contacts(biped, forward_gait, 0.01, 0.05)
    switches = np.nonzero(np.diff(labels))[0]
    periods = np.diff(switches)
    expected = (GaitParams().swing_frames() + GaitParams().pause_frames())
    assert np.all(np.abs(periods - expected) <= 2)


def test_contact_tracker_validation_and_warning():
    with pytest.raises(ValueError):
        ContactTracker(0.0, 0.1)
    tracker = ContactTracker(0.01, 0.05, initial=1, dt=0.1)
    for _ in range(7):  # > 0.5 s without any qualifying foot
        alpha = tracker.update(1.0, 1.0, 1.0, 1.0)
    assert alpha == 1 and tracker.warned


def test_dataset_augmentation_doubles_samples(biped, forward_gait):
    mm = default_mirror_map(biped)
    plain = build_dataset(biped, [forward_gait])
    doubled = build_dataset(biped, [forward_gait], mm, augment=True)
    assert len(doubled) == 2 * len(plain)
    assert len(doubled.segments) == 2 * len(plain.segments)
    with pytest.raises(ValueError):
        build_dataset(biped, [forward_gait], None, augment=True)


def test_dataset_support_matrices_pin_truth_velocities(biped, forward_gait):
    ds = build_dataset(biped, [forward_gait])
    lay = OutputLayout(ds.n)
    vw = np.concatenate([ds.Y[:, lay.lin0], ds.Y[:, lay.ang0]], axis=1)
    resid = vw + np.einsum("brc,bc->br", ds.support_matrices,
                           ds.Y[:, lay.joint_rates])
    assert np.max(np.abs(resid)) <= 1e-9


def test_feature_sample_contract(biped, forward_gait):
    lo, hi = valid_sample_range(forward_gait)
    fs = feature_sample(biped, forward_gait, (lo + hi) // 2)
    assert fs.x.shape == (2 * 6 + 78,)
    assert fs.J_LF.shape == (6, 12)
    assert fs.support_matrix.shape == (6, 6)
    assert feature_sample(biped, forward_gait, 0) is None
    with pytest.raises(ValueError):
        type(fs)(fs.x, fs.y, 2, fs.J_LF, fs.J_RF)


def test_rollout_input_matches_training_layout_when_future_constant():
    # constant velocity makes the zero-order-hold clamp invisible
    traj = synthetic_trajectory(4, N=140)
    traj.base_velocity[:] = np.array([0.2, 0.0, -0.1, 0.0, 0.3, 0.0])
    i = 90
    expected = extract_input(traj, i)
    got = assemble_rollout_input(
        traj.base_velocity[:i], traj.joint_positions[:i],
        traj.joint_velocities[:i], traj.base_position[:i], traj.base_rpy[:i])
    assert np.array_equal(got, expected)


def test_rollout_input_clamps_future_to_newest_frame():
    traj = synthetic_trajectory(4, N=120)
    m = 100  # history = rows 0..99, predicting step 100
    got = assemble_rollout_input(
        traj.base_velocity[:m], traj.joint_positions[:m],
        traj.joint_velocities[:m], traj.base_position[:m], traj.base_rpy[:m])
    lin = got[:36].reshape(12, 3)
    for row, off in enumerate(INPUT_TABLE):
        idx = min(m + off, m - 1)
        assert np.array_equal(lin[row], traj.base_velocity[idx, :3])
    assert np.array_equal(got[72 + 8:], np.concatenate(
        [traj.base_position[m - 1], traj.base_rpy[m - 1]]))


def test_rollout_input_requires_full_window():
    traj = synthetic_trajectory(4, N=30)
    with pytest.raises(ValueError):
        assemble_rollout_input(
            traj.base_velocity, traj.joint_positions, traj.joint_velocities,
            traj.base_position, traj.base_rpy)
