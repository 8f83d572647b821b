"""Session-level orchestration: camera registration, fusion, robot track
cleaning and feature extraction, driven by a dataset manifest."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import dataio
from .dataset import SessionData, align_labels
from .features import extract_segment_features
from .fusion import (
    KeypointFrame,
    N_JOINTS,
    PoseTrack,
    RobotTrack,
    align_to_room,
    backproject_bbox,
    fuse_views,
    icp_register,
    interpolate_gaps,
    lowpass_smooth,
    reject_out_of_range,
    transform_frame,
)
from .geometry import RigidTransform, rigid_fit


@dataclass
class FusionSettings:
    gate_radius: float = 0.3
    smooth_alpha: float = 0.3
    max_gap_frames: int = 30
    icp_max_iters: int = 100
    icp_tol: float = 1e-5
    icp_trim: float = 0.15  # NN residual cut between the two ICP passes
    icp_max_points: int = 4000


def _valid_cloud(frames, max_points: int) -> np.ndarray:
    pts = np.concatenate([f.positions[f.valid] for f in frames]) if frames else np.empty((0, 3))
    if len(pts) > max_points:
        stride = int(np.ceil(len(pts) / max_points))
        pts = pts[::stride]
    return pts


def _matched_points(frames_a, frames_b):
    """Same-frame same-joint points valid in both streams."""
    by_idx = {f.frame_idx: f for f in frames_b}
    src, dst = [], []
    for fa in frames_a:
        fb = by_idx.get(fa.frame_idx)
        if fb is None:
            continue
        both = fa.valid & fb.valid
        if both.any():
            src.append(fa.positions[both])
            dst.append(fb.positions[both])
    if not src:
        return np.empty((0, 3)), np.empty((0, 3))
    return np.concatenate(src), np.concatenate(dst)


def _prealign(source, target_common, init: RigidTransform, trim: float) -> RigidTransform:
    """Closed-form fit on matched pairs, trimming pairs whose residual
    under the initial guess is an outlier spike."""
    residual = np.linalg.norm(init.apply(source) - target_common, axis=1)
    cut = max(trim, 3.0 * float(np.median(residual)))
    keep = residual <= cut
    if keep.sum() < 3:
        return init
    return rigid_fit(source[keep], target_common[keep])


def register_cameras(
    streams: dict[str, list[KeypointFrame]],
    calibration: dict[str, tuple],
    reference: str,
    settings: FusionSettings,
) -> dict[str, RigidTransform]:
    """Refine each camera's manual initial transform against the reference
    camera.

    The reference camera's calibration transform is trusted as-is and
    defines the common frame. Where the two streams share frames, a
    closed-form fit on matched joints (outlier pairs trimmed) pre-aligns
    the clouds so ICP starts near the right basin; ICP then refines on
    the raw clouds, and a second pass re-runs it with nearest-neighbour
    outliers (spikes) dropped.
    """
    ref_transform = calibration[reference][1]
    target = ref_transform.apply(_valid_cloud(streams[reference], settings.icp_max_points))
    transforms = {reference: ref_transform}
    tree = cKDTree(target)
    for cam, frames in streams.items():
        if cam == reference:
            continue
        init = calibration[cam][1]
        src_matched, dst_matched = _matched_points(frames, streams[reference])
        if len(src_matched) >= 100:
            stride = max(1, len(src_matched) // settings.icp_max_points)
            init = _prealign(
                src_matched[::stride],
                ref_transform.apply(dst_matched[::stride]),
                init,
                settings.icp_trim,
            )
        source = _valid_cloud(frames, settings.icp_max_points)
        first = icp_register(source, target, init, settings.icp_max_iters, settings.icp_tol)
        dists, _ = tree.query(first.transform.apply(source))
        keep = dists <= settings.icp_trim
        if keep.sum() >= 3:
            second = icp_register(
                source[keep], target, first.transform, settings.icp_max_iters, settings.icp_tol
            )
            transforms[cam] = second.transform
        else:
            warnings.warn(f"{cam}: trimming left too few points, keeping first ICP pass")
            transforms[cam] = first.transform
    return transforms


def fuse_session(
    streams: dict[str, list[KeypointFrame]],
    transforms: dict[str, RigidTransform],
    fps: float,
    room_yaw: float,
    settings: FusionSettings,
) -> PoseTrack:
    """Transform every camera stream to the common frame, fuse views frame
    by frame with gating, fill gaps, smooth and rotate to room axes."""
    by_frame: dict[int, list[KeypointFrame]] = {}
    n_frames = 0
    for cam, frames in streams.items():
        t = transforms[cam]
        for f in frames:
            by_frame.setdefault(f.frame_idx, []).append(transform_frame(f, t))
            n_frames = max(n_frames, f.frame_idx + 1)
    fused = []
    prev: Optional[KeypointFrame] = None
    for idx in range(n_frames):
        views = by_frame.get(idx)
        if views:
            frame = fuse_views(views, prev, settings.gate_radius)
        else:
            frame = KeypointFrame(
                "fused", idx, idx / fps, np.zeros((N_JOINTS, 3)), np.zeros(N_JOINTS, bool)
            )
        fused.append(frame)
        prev = frame if frame.valid.any() else prev
    track = PoseTrack.from_frames(fused, fps)
    track = interpolate_gaps(track, settings.max_gap_frames)
    track = lowpass_smooth(track, settings.smooth_alpha)
    return align_to_room(track, room_yaw)


def clean_robot_track(
    detections: list[dict],
    intrinsics,
    camera_transform: RigidTransform,
    n_frames: int,
    fps: float,
    room_yaw: float,
    region,
    settings: FusionSettings,
) -> RobotTrack:
    """Backproject 2D robot detections (or take 3D ones as-is), rotate to
    room axes, reject positions outside the expected region, fill and
    smooth."""
    positions = np.zeros((n_frames, 3))
    valid = np.zeros(n_frames, dtype=bool)
    for row in detections:
        idx = int(row["frame_idx"])
        if not 0 <= idx < n_frames:
            continue
        if "u" in row:
            if row["depth_m"] <= 0:
                continue  # unusable detection, treated as missing
            point = camera_transform.apply(
                backproject_bbox((row["u"], row["v"]), row["depth_m"], intrinsics)
            )
        else:
            point = np.array([row["x"], row["y"], row["z"]])
        positions[idx] = point
        valid[idx] = True
    track = RobotTrack(positions, valid, fps)
    track = align_to_room(track, room_yaw)
    track = reject_out_of_range(track, region)
    track = interpolate_gaps(track, settings.max_gap_frames)
    return lowpass_smooth(track, settings.smooth_alpha)


@dataclass
class ProcessedSession:
    session_id: str
    pose: PoseTrack
    robot: RobotTrack
    transforms: dict[str, RigidTransform]


def process_session(
    dataset_dir: Path,
    entry: dict,
    manifest: dict,
    calibration: dict,
    reference: str,
    robot_camera: str,
    settings: FusionSettings,
) -> ProcessedSession:
    """Run fusion end-to-end for one manifest session entry."""
    dataset_dir = Path(dataset_dir)
    fps = float(manifest["fps"])
    room_yaw = float(manifest.get("room_yaw", 0.0))
    streams = {
        cam: dataio.read_keypoint_stream(dataio.resolve(path, dataset_dir))
        for cam, path in entry["cameras"].items()
    }
    transforms = register_cameras(streams, calibration, reference, settings)
    pose = fuse_session(streams, transforms, fps, room_yaw, settings)

    region_doc = manifest.get("robot_region") or manifest["room"]
    region = (np.asarray(region_doc["min"], float), np.asarray(region_doc["max"], float))
    detections = dataio.read_robot_detections(dataio.resolve(entry["robot"], dataset_dir))
    robot = clean_robot_track(
        detections,
        calibration[robot_camera][0],
        transforms[robot_camera],
        pose.n_frames,
        fps,
        room_yaw,
        region,
        settings,
    )
    return ProcessedSession(entry["id"], pose, robot, transforms)


def session_features(
    processed: ProcessedSession, absolute_angles: bool = False
) -> np.ndarray:
    return extract_segment_features(processed.pose, processed.robot, absolute_angles)


def labeled_session(
    processed: ProcessedSession, annotations: np.ndarray, absolute_angles: bool = False
) -> SessionData:
    feats = session_features(processed, absolute_angles)
    feats, labels = align_labels(annotations, feats)
    return SessionData(processed.session_id, feats, labels)


def load_feature_sessions(features_dir) -> list[SessionData]:
    """Load every *.features.jsonl in a directory as labeled sessions."""
    features_dir = Path(features_dir)
    paths = sorted(features_dir.glob("*.features.jsonl"))
    sessions = []
    for path in paths:
        session_id, values, labels = dataio.read_features_jsonl(path)
        if labels is None:
            raise ValueError(f"{path}: has no labels; cannot train or evaluate")
        sessions.append(SessionData(session_id, values, labels))
    if not sessions:
        raise FileNotFoundError(f"no *.features.jsonl files in {features_dir}")
    return sessions
