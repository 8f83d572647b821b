import numpy as np
import pytest

from engagekit.features import (
    ANGLE_COLS,
    BODY_ANGLE_COL,
    FRAME_FEATURE_DIM,
    GAZE_ANGLE_COL,
    SEGMENT_FEATURE_DIM,
    body_heading,
    circular_mean_std,
    extract_segment_features,
    frame_features,
    gaze_heading,
    hand_shoulder_distances,
    relative_angle,
    relative_keypoints,
    segment_stats,
)
from engagekit.fusion import Joint, KeypointFrame, N_JOINTS, PoseTrack, RobotTrack


def frame_with(points: dict, base=None, camera="fused"):
    pos = np.zeros((N_JOINTS, 3)) if base is None else base.copy()
    valid = np.ones(N_JOINTS, dtype=bool)
    for j, p in points.items():
        pos[j] = p
    return KeypointFrame(camera, 0, 0.0, pos, valid)


def plausible_frame(rng):
    return KeypointFrame(
        "fused", 0, 0.0, rng.uniform(-1, 1, size=(N_JOINTS, 3)), np.ones(N_JOINTS, bool)
    )


class TestRelativeKeypoints:
    def test_robot_at_origin_unchanged(self):
        rng = np.random.default_rng(0)
        f = plausible_frame(rng)
        np.testing.assert_array_equal(relative_keypoints(f, np.zeros(3)), f.positions.reshape(-1))

    def test_joint_at_robot_is_zero(self):
        f = frame_with({Joint.NOSE: [1.0, 2.0, 3.0]})
        rel = relative_keypoints(f, [1.0, 2.0, 3.0]).reshape(N_JOINTS, 3)
        np.testing.assert_allclose(rel[Joint.NOSE], 0.0)

    def test_points_from_robot_to_joint(self):
        f = frame_with({Joint.NECK: [1.0, 0.0, 1.0]})
        rel = relative_keypoints(f, [1.0, 0.0, 0.0]).reshape(N_JOINTS, 3)
        np.testing.assert_allclose(rel[Joint.NECK], [0.0, 0.0, 1.0])


class TestHeadings:
    def test_forced_construction(self):
        f = frame_with(
            {
                Joint.LEFT_EAR: [-0.1, 0.0, 1.5],
                Joint.RIGHT_EAR: [0.1, 0.0, 1.5],
                Joint.NOSE: [0.0, 0.1, 1.5],
            }
        )
        assert gaze_heading(f) == pytest.approx(np.pi / 2)

    def test_swapped_ears_nose_disambiguates(self):
        f = frame_with(
            {
                Joint.LEFT_EAR: [0.1, 0.0, 1.5],
                Joint.RIGHT_EAR: [-0.1, 0.0, 1.5],
                Joint.NOSE: [0.0, 0.1, 1.5],
            }
        )
        assert gaze_heading(f) == pytest.approx(np.pi / 2)

    def test_hand_geometry_check(self):
        # ears on the y axis, nose toward +x: heading must be 0
        f = frame_with(
            {
                Joint.LEFT_EAR: [0.0, 0.1, 1.5],
                Joint.RIGHT_EAR: [0.0, -0.1, 1.5],
                Joint.NOSE: [0.1, 0.0, 1.5],
            }
        )
        assert gaze_heading(f) == pytest.approx(0.0, abs=1e-12)

    def test_missing_nose_uses_plus_90(self):
        pos = np.zeros((N_JOINTS, 3))
        pos[Joint.LEFT_EAR] = [-0.1, 0.0, 1.5]
        pos[Joint.RIGHT_EAR] = [0.1, 0.0, 1.5]
        valid = np.ones(N_JOINTS, bool)
        valid[Joint.NOSE] = False
        f = KeypointFrame("fused", 0, 0.0, pos, valid)
        assert gaze_heading(f) == pytest.approx(np.pi / 2)

    def test_missing_ear_raises(self):
        valid = np.ones(N_JOINTS, bool)
        valid[Joint.LEFT_EAR] = False
        f = KeypointFrame("fused", 0, 0.0, np.zeros((N_JOINTS, 3)), valid)
        with pytest.raises(ValueError):
            gaze_heading(f)

    def test_body_heading_mirrors_gaze(self):
        f = frame_with(
            {
                Joint.LEFT_SHOULDER: [-0.15, 0.0, 1.2],
                Joint.RIGHT_SHOULDER: [0.15, 0.0, 1.2],
                Joint.NOSE: [0.0, 0.1, 1.5],
            }
        )
        assert body_heading(f) == pytest.approx(np.pi / 2)
        g = frame_with(
            {
                Joint.LEFT_SHOULDER: [0.15, 0.0, 1.2],
                Joint.RIGHT_SHOULDER: [-0.15, 0.0, 1.2],
                Joint.NOSE: [0.0, 0.1, 1.5],
            }
        )
        assert body_heading(g) == pytest.approx(np.pi / 2)
        h = frame_with(
            {
                Joint.LEFT_SHOULDER: [0.0, 0.15, 1.2],
                Joint.RIGHT_SHOULDER: [0.0, -0.15, 1.2],
                Joint.NOSE: [0.1, 0.0, 1.5],
            }
        )
        assert body_heading(h) == pytest.approx(0.0, abs=1e-12)


class TestRelativeAngle:
    def test_aligned(self):
        r = relative_angle(np.pi / 2, np.zeros(3), [0.0, 1.0, 0.0])
        assert r.angle == pytest.approx(0.0)
        assert not r.degenerate

    def test_opposite_wraps_to_pi(self):
        r = relative_angle(np.pi / 2, np.zeros(3), [0.0, -1.0, 0.0])
        assert r.angle == pytest.approx(np.pi)

    def test_forty_five(self):
        r = relative_angle(0.0, np.zeros(3), [1.0, 1.0, 0.0])
        assert r.angle == pytest.approx(-np.pi / 4)

    def test_degenerate_flag(self):
        r = relative_angle(1.0, [0.0, 0.0, 0.0], [0.0, 0.0, 2.0])
        assert r.angle == 0.0 and r.degenerate

    def test_invariant_to_2pi(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            h = rng.uniform(-np.pi, np.pi)
            robot = rng.normal(size=3)
            a = relative_angle(h, np.zeros(3), robot).angle
            b = relative_angle(h + 2 * np.pi, np.zeros(3), robot).angle
            assert a == pytest.approx(b, abs=1e-9)


class TestHandDistances:
    def test_wrist_at_shoulder(self):
        f = frame_with({Joint.LEFT_WRIST: [0.5, 0, 1.4], Joint.LEFT_SHOULDER: [0.5, 0, 1.4]})
        left, _ = hand_shoulder_distances(f)
        assert left == 0.0

    def test_forced_distance(self):
        f = frame_with({Joint.LEFT_WRIST: [0.5, 0, 1.0], Joint.LEFT_SHOULDER: [0.5, 0, 1.4]})
        left, _ = hand_shoulder_distances(f)
        assert left == pytest.approx(0.4)

    def test_mirror_swaps_outputs(self):
        rng = np.random.default_rng(2)
        pos = rng.uniform(-1, 1, size=(N_JOINTS, 3))
        f = KeypointFrame("fused", 0, 0.0, pos, np.ones(N_JOINTS, bool))
        mirrored = pos.copy()
        mirrored[:, 0] *= -1
        # mirroring about x=0 swaps the left/right joints
        swap = np.arange(N_JOINTS)
        for l, r in [
            (Joint.LEFT_WRIST, Joint.RIGHT_WRIST),
            (Joint.LEFT_ELBOW, Joint.RIGHT_ELBOW),
            (Joint.LEFT_SHOULDER, Joint.RIGHT_SHOULDER),
            (Joint.LEFT_HIP, Joint.RIGHT_HIP),
            (Joint.LEFT_KNEE, Joint.RIGHT_KNEE),
            (Joint.LEFT_ANKLE, Joint.RIGHT_ANKLE),
            (Joint.LEFT_EYE, Joint.RIGHT_EYE),
            (Joint.LEFT_EAR, Joint.RIGHT_EAR),
        ]:
            swap[l], swap[r] = r, l
        g = KeypointFrame("fused", 0, 0.0, mirrored[swap], np.ones(N_JOINTS, bool))
        fl, fr = hand_shoulder_distances(f)
        gl, gr = hand_shoulder_distances(g)
        assert fl == pytest.approx(gr) and fr == pytest.approx(gl)


class TestSegmentStats:
    def test_constant_segment_zero_std(self):
        rng = np.random.default_rng(3)
        row = rng.normal(size=FRAME_FEATURE_DIM)
        seg = segment_stats(np.tile(row, (5, 1)))
        np.testing.assert_allclose(seg.values[FRAME_FEATURE_DIM:], 0.0, atol=1e-12)
        np.testing.assert_allclose(seg.values[:FRAME_FEATURE_DIM], row, atol=1e-12)

    def test_forced_mean_std(self):
        frames = np.zeros((5, FRAME_FEATURE_DIM))
        frames[:, 0] = [1, 2, 3, 4, 5]
        seg = segment_stats(frames)
        assert seg.values[0] == pytest.approx(3.0)
        assert seg.values[FRAME_FEATURE_DIM] == pytest.approx(np.sqrt(2.0))

    def test_length_is_116(self):
        seg = segment_stats(np.zeros((5, FRAME_FEATURE_DIM)))
        assert seg.values.shape == (SEGMENT_FEATURE_DIM,)
        assert SEGMENT_FEATURE_DIM == 2 * (3 * 18 + 4)

    def test_circular_mean_across_wrap(self):
        frames = np.zeros((5, FRAME_FEATURE_DIM))
        angles = np.array([np.pi - 0.1, -np.pi + 0.1, np.pi, np.pi - 0.05, -np.pi + 0.05])
        frames[:, GAZE_ANGLE_COL] = angles
        seg = segment_stats(frames)
        assert abs(seg.values[GAZE_ANGLE_COL]) == pytest.approx(np.pi, abs=0.05)
        # a linear std would be ~pi; circular stays small
        assert seg.values[FRAME_FEATURE_DIM + GAZE_ANGLE_COL] < 0.2

    def test_std_block_nonnegative(self):
        rng = np.random.default_rng(4)
        seg = segment_stats(rng.normal(size=(5, FRAME_FEATURE_DIM)))
        assert np.all(seg.values[FRAME_FEATURE_DIM:] >= 0.0)

    def test_circular_mean_std_basics(self):
        m, s = circular_mean_std(np.full(5, 0.3))
        assert m == pytest.approx(0.3) and s == pytest.approx(0.0, abs=1e-9)


class TestTranslationInvariance:
    def test_all_116_features_invariant(self):
        pos = np.random.default_rng(6).normal(size=(10, N_JOINTS, 3))
        robot = np.random.default_rng(7).normal(size=(10, 3)) + np.array([2.0, 0, 0])
        shift = np.array([1.7, -2.3, 0.4])
        base = extract_segment_features(
            PoseTrack(pos, np.ones((10, N_JOINTS), bool)),
            RobotTrack(robot, np.ones(10, bool)),
        )
        moved = extract_segment_features(
            PoseTrack(pos + shift, np.ones((10, N_JOINTS), bool)),
            RobotTrack(robot + shift, np.ones(10, bool)),
        )
        np.testing.assert_allclose(base, moved, atol=1e-9)


def test_extract_drops_partial_segment():
    rng = np.random.default_rng(8)
    pos = rng.normal(size=(13, N_JOINTS, 3))
    robot = rng.normal(size=(13, 3)) + np.array([3.0, 0, 0])
    feats = extract_segment_features(
        PoseTrack(pos, np.ones((13, N_JOINTS), bool)), RobotTrack(robot, np.ones(13, bool))
    )
    assert feats.shape == (2, SEGMENT_FEATURE_DIM)


def test_angle_columns_are_last_high_level_block():
    assert ANGLE_COLS == (54, 55)
    assert BODY_ANGLE_COL == 55
