import hashlib
from pathlib import Path

import numpy as np
import pytest

from engagekit import dataio
from engagekit.features import (
    BODY_ANGLE_COL,
    GAZE_ANGLE_COL,
    LEFT_HAND_COL,
    RIGHT_HAND_COL,
)
from engagekit.forest import DecisionTree
from engagekit.fusion import KeypointFrame, N_JOINTS
from engagekit.pipeline import FusionSettings, labeled_session, process_session
from engagekit.synthgen import (
    BONES,
    SynthSettings,
    corrupt,
    generate_dataset,
    make_camera_rig,
    project_to_pixels,
    random_schedule,
    simulate_session,
)

ROOM = ((0.0, 0.0, 0.0), (4.0, 3.0, 2.2))


def dir_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("synth")
    settings = SynthSettings(sessions=2, seconds=30.0, cameras=3)
    manifest = generate_dataset(tmp, settings, seed=42)
    return tmp, settings, manifest


class TestSimulate:
    def test_bone_lengths_constant(self):
        rng = np.random.default_rng(0)
        truth = simulate_session([(1, 5.0), (3, 5.0)], ROOM, 30.0, rng)
        for a, b in BONES:
            lengths = np.linalg.norm(truth.pose[:, a] - truth.pose[:, b], axis=1)
            assert (lengths.max() - lengths.min()) / lengths.mean() < 0.01

    def test_annotations_match_schedule(self):
        rng = np.random.default_rng(1)
        truth = simulate_session([(2, 4.0), (1, 3.0), (3, 2.0)], ROOM, 30.0, rng)
        assert list(truth.annotations) == [2] * 4 + [1] * 3 + [3] * 2
        assert truth.pose.shape[0] == 9 * 30

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            simulate_session([], ROOM, 30.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            simulate_session([(1, -2.0)], ROOM, 30.0, np.random.default_rng(0))

    def test_random_schedule_covers_all_classes(self):
        settings = SynthSettings(seconds=40.0)
        for seed in range(5):
            sched = random_schedule(np.random.default_rng(seed), settings)
            assert {c for c, _ in sched} == {1, 2, 3}
            assert sum(d for _, d in sched) == pytest.approx(40.0)


class TestCorrupt:
    def frames(self, n=20, seed=0):
        rng = np.random.default_rng(seed)
        return [
            KeypointFrame("c", i, i / 30.0, rng.uniform(size=(N_JOINTS, 3)), np.ones(N_JOINTS, bool))
            for i in range(n)
        ]

    def test_identity_when_disabled(self):
        frames = self.frames()
        out = corrupt(frames, 0.0, 0.0, 1.0, seed=0)
        for a, b in zip(frames, out):
            np.testing.assert_array_equal(a.positions, b.positions)
            assert b.valid.all()

    def test_full_dropout(self):
        out = corrupt(self.frames(), 1.0, 0.0, 1.0, seed=0)
        assert not any(f.valid.any() for f in out)

    def test_outliers_displace(self):
        frames = self.frames()
        out = corrupt(frames, 0.0, 1.0, 1.0, seed=1)
        shifts = np.concatenate(
            [np.linalg.norm(a.positions - b.positions, axis=1) for a, b in zip(frames, out)]
        )
        assert shifts.min() > 0.4  # scale 1.0 with 0.5-1.5 magnitude

    def test_seeded_determinism(self):
        frames = self.frames()
        a = corrupt(frames, 0.3, 0.1, 1.0, seed=5)
        b = corrupt(frames, 0.3, 0.1, 1.0, seed=5)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.positions, fb.positions)
            np.testing.assert_array_equal(fa.valid, fb.valid)

    def test_probability_validation(self):
        with pytest.raises(ValueError):
            corrupt(self.frames(), -0.1, 0.0, 1.0, seed=0)


class TestCameraRig:
    def test_transforms_are_rigid(self):
        rig = make_camera_rig(4, ROOM)
        assert len(rig) == 4
        for intr, t in rig.values():
            assert t.is_orthonormal(1e-9)

    def test_projection_round_trip(self):
        from engagekit.fusion import backproject_bbox

        rig = make_camera_rig(2, ROOM)
        intr, cam_to_room = rig["cam1"]
        p_room = np.array([2.0, 1.5, 0.8])
        p_cam = cam_to_room.inverse().apply(p_room)
        u, v, depth = project_to_pixels(p_cam, intr)
        back = cam_to_room.apply(backproject_bbox((u, v), depth, intr))
        np.testing.assert_allclose(back, p_room, atol=1e-9)


class TestDataset:
    def test_same_seed_byte_identical(self, tmp_path):
        settings = SynthSettings(sessions=1, seconds=10.0, cameras=2)
        generate_dataset(tmp_path / "a", settings, seed=9)
        generate_dataset(tmp_path / "b", settings, seed=9)
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")

    def test_emits_fusion_input_schemas(self, small_dataset):
        tmp, settings, manifest = small_dataset
        entry = manifest["sessions"][0]
        frames = dataio.read_keypoint_stream(tmp / entry["cameras"]["cam0"])
        assert len(frames) == int(30.0 * settings.fps)
        assert frames[0].positions.shape == (N_JOINTS, 3)
        rows = dataio.read_robot_detections(tmp / entry["robot"])
        assert {"frame_idx", "u", "v", "depth_m"} <= set(rows[0])
        session_id, annot = dataio.read_annotations_csv(tmp / entry["annotations"])
        assert session_id == entry["id"]
        assert len(annot) == 30
        calibration, reference, robot_cam = dataio.read_calibration(tmp / manifest["calibration"])
        assert reference in calibration and robot_cam in calibration

    def test_class_statistics_measured_by_real_extractor(self, small_dataset):
        tmp, settings, manifest = small_dataset
        calibration, reference, robot_cam = dataio.read_calibration(tmp / manifest["calibration"])
        fset = FusionSettings()
        xs, ys = [], []
        for entry in manifest["sessions"]:
            proc = process_session(tmp, entry, manifest, calibration, reference, robot_cam, fset)
            _, annotations = dataio.read_annotations_csv(tmp / entry["annotations"])
            sess = labeled_session(proc, annotations)
            xs.append(sess.features)
            ys.append(sess.labels)
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        assert set(np.unique(y)) == {1, 2, 3}

        gaze = x[:, GAZE_ANGLE_COL]
        # cooperative bouts: gaze locked to the robot
        assert np.degrees(np.abs(gaze[y == 3]).mean()) < 20.0

        def circ_std(a):
            r = np.hypot(np.cos(a).mean(), np.sin(a).mean())
            return np.sqrt(-2 * np.log(max(r, 1e-12)))

        # disengaged gaze wanders far more than attentive gaze
        assert circ_std(gaze[y == 1]) > circ_std(gaze[y == 2])

        # a depth-2 tree on the 4 high-level features separates classes
        hl = x[:, [GAZE_ANGLE_COL, BODY_ANGLE_COL, LEFT_HAND_COL, RIGHT_HAND_COL]]
        tree = DecisionTree(max_depth=2).fit(hl, y, np.random.default_rng(0))
        assert np.mean(tree.predict(hl) == y) > 0.8

    def test_fused_track_error_small(self, small_dataset):
        tmp, settings, manifest = small_dataset
        calibration, reference, robot_cam = dataio.read_calibration(tmp / manifest["calibration"])
        entry = manifest["sessions"][0]
        proc = process_session(
            tmp, entry, manifest, calibration, reference, robot_cam, FusionSettings()
        )
        truth = np.load(tmp / entry["truth"])
        err = np.linalg.norm(proc.pose.positions - truth["pose"], axis=2)
        rms = np.sqrt((err**2).mean(axis=0))
        assert rms.max() < 0.05  # oracle: the clean simulated track
        robot_err = np.linalg.norm(proc.robot.positions - truth["robot"], axis=1)
        assert np.sqrt((robot_err**2).mean()) < 0.05
