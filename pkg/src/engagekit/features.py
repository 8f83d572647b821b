"""Robot-relative feature extraction from fused pose and robot tracks.

Per frame: the 18 keypoints relative to the robot (54 values) plus four
high-level features (gaze-to-robot angle, body-facing-to-robot angle and
the two hand-shoulder distances), 58 values total. Frames are grouped
into 5-frame segments whose mean and standard deviation form the
116-dimensional classifier input.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .fusion import Joint, KeypointFrame, N_JOINTS, PoseTrack, RobotTrack
from .geometry import wrap_angle

FRAME_FEATURE_DIM = 58
SEGMENT_FEATURE_DIM = 116
FRAMES_PER_SEGMENT = 5

# layout of the per-frame vector: 54 relative coordinates, then the four
# high-level features in this order
GAZE_ANGLE_COL = 54
BODY_ANGLE_COL = 55
LEFT_HAND_COL = 56
RIGHT_HAND_COL = 57
ANGLE_COLS = (GAZE_ANGLE_COL, BODY_ANGLE_COL)


class RelativeAngle(NamedTuple):
    angle: float
    degenerate: bool


@dataclass
class SegmentFeatures:
    """Mean/std feature vector of one 5-frame segment."""

    values: np.ndarray  # (116,)
    segment_idx: int
    n_frames: int = FRAMES_PER_SEGMENT

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (SEGMENT_FEATURE_DIM,):
            raise ValueError(f"expected {SEGMENT_FEATURE_DIM} values, got {self.values.shape}")


def relative_keypoints(pose: KeypointFrame, robot) -> np.ndarray:
    """Keypoints minus robot position (vectors point robot -> joint),
    flattened per joint in canonical order; 54 values."""
    robot = np.asarray(robot, dtype=float).reshape(3)
    return (pose.positions - robot).reshape(-1)


def _plane_heading(left: np.ndarray, right: np.ndarray, toward: Optional[np.ndarray]) -> float:
    """Heading of the left->right axis rotated 90 deg CCW in the horizontal
    plane, flipped to -90 deg when it points away from ``toward``."""
    v = (right - left)[:2]
    facing = np.array([-v[1], v[0]])
    if toward is not None:
        hint = (toward - 0.5 * (left + right))[:2]
        if facing @ hint < 0:
            facing = -facing
    return float(np.arctan2(facing[1], facing[0]))


def gaze_heading(pose: KeypointFrame) -> float:
    """Gaze direction from the ear-to-ear axis, nose-disambiguated.

    Both ears must be valid; the nose (when valid) picks between the
    +90 and -90 degree rotation, otherwise +90 is used.
    """
    if not (pose.valid[Joint.LEFT_EAR] and pose.valid[Joint.RIGHT_EAR]):
        raise ValueError("gaze heading requires both ear keypoints")
    nose = pose.positions[Joint.NOSE] if pose.valid[Joint.NOSE] else None
    return _plane_heading(pose.positions[Joint.LEFT_EAR], pose.positions[Joint.RIGHT_EAR], nose)


def body_heading(pose: KeypointFrame) -> float:
    """Body facing from the shoulder axis, same convention as gaze."""
    if not (pose.valid[Joint.LEFT_SHOULDER] and pose.valid[Joint.RIGHT_SHOULDER]):
        raise ValueError("body heading requires both shoulder keypoints")
    nose = pose.positions[Joint.NOSE] if pose.valid[Joint.NOSE] else None
    return _plane_heading(
        pose.positions[Joint.LEFT_SHOULDER], pose.positions[Joint.RIGHT_SHOULDER], nose
    )


def relative_angle(heading: float, child_com, robot) -> RelativeAngle:
    """Heading minus the child-to-robot bearing, wrapped to (-pi, pi].

    Zero means facing the robot. When child and robot coincide in the
    horizontal plane the bearing is undefined; returns 0 with the
    ``degenerate`` flag set.
    """
    d = (np.asarray(robot, float) - np.asarray(child_com, float))[:2]
    if np.hypot(d[0], d[1]) < 1e-12:
        return RelativeAngle(0.0, True)
    bearing = np.arctan2(d[1], d[0])
    return RelativeAngle(float(wrap_angle(heading - bearing)), False)


def keypoint_center_of_mass(pose: KeypointFrame) -> np.ndarray:
    """Unweighted mean of all 18 keypoints (requires a fully valid frame)."""
    return pose.positions.mean(axis=0)


def hand_shoulder_distances(pose: KeypointFrame) -> tuple[float, float]:
    """Euclidean wrist-to-shoulder distance for the left and right arm."""
    need = (Joint.LEFT_WRIST, Joint.RIGHT_WRIST, Joint.LEFT_SHOULDER, Joint.RIGHT_SHOULDER)
    if not all(pose.valid[j] for j in need):
        raise ValueError("hand distances require valid wrists and shoulders")
    left = np.linalg.norm(pose.positions[Joint.LEFT_WRIST] - pose.positions[Joint.LEFT_SHOULDER])
    right = np.linalg.norm(
        pose.positions[Joint.RIGHT_WRIST] - pose.positions[Joint.RIGHT_SHOULDER]
    )
    return float(left), float(right)


def frame_features(pose: KeypointFrame, robot, absolute_angles: bool = False) -> np.ndarray:
    """The 58-value per-frame feature vector (pose must be fully valid)."""
    robot = np.asarray(robot, dtype=float).reshape(3)
    com = keypoint_center_of_mass(pose)
    gaze = relative_angle(gaze_heading(pose), com, robot).angle
    body = relative_angle(body_heading(pose), com, robot).angle
    if absolute_angles:
        gaze, body = abs(gaze), abs(body)
    left, right = hand_shoulder_distances(pose)
    out = np.empty(FRAME_FEATURE_DIM)
    out[:GAZE_ANGLE_COL] = relative_keypoints(pose, robot)
    out[GAZE_ANGLE_COL:] = (gaze, body, left, right)
    return out


def circular_mean_std(angles: np.ndarray) -> tuple[float, float]:
    """Circular mean and circular standard deviation (sqrt(-2 ln R))."""
    c = np.cos(angles).mean()
    s = np.sin(angles).mean()
    r = min(1.0, float(np.hypot(c, s)))
    r = max(r, 1e-12)
    return float(np.arctan2(s, c)), float(np.sqrt(-2.0 * np.log(r)))


def segment_stats(frames: np.ndarray, segment_idx: int = 0) -> SegmentFeatures:
    """Mean then population std of 5 consecutive per-frame vectors.

    The two angle columns use circular statistics to avoid wrap
    artifacts near +/-pi.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.shape != (FRAMES_PER_SEGMENT, FRAME_FEATURE_DIM):
        raise ValueError(f"expected ({FRAMES_PER_SEGMENT}, {FRAME_FEATURE_DIM}) frames")
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    for col in ANGLE_COLS:
        mean[col], std[col] = circular_mean_std(frames[:, col])
    return SegmentFeatures(np.concatenate([mean, std]), segment_idx)


def extract_segment_features(
    track: PoseTrack, robot: RobotTrack, absolute_angles: bool = False
) -> np.ndarray:
    """Per-segment feature matrix (S, 116) for a cleaned session.

    Both tracks must be fully valid and frame-aligned; trailing frames
    that do not fill a whole segment are dropped.
    """
    if not track.valid.all() or not robot.valid.all():
        raise ValueError("tracks must be fully valid (interpolate first)")
    n = min(track.n_frames, robot.n_frames)
    per_frame = np.empty((n, FRAME_FEATURE_DIM))
    for t in range(n):
        per_frame[t] = frame_features(track.frame(t), robot.positions[t], absolute_angles)
    n_segments = n // FRAMES_PER_SEGMENT
    out = np.empty((n_segments, SEGMENT_FEATURE_DIM))
    for s in range(n_segments):
        chunk = per_frame[s * FRAMES_PER_SEGMENT : (s + 1) * FRAMES_PER_SEGMENT]
        out[s] = segment_stats(chunk, s).values
    return out
