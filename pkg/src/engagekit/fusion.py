"""Multi-camera keypoint registration, view fusion and track cleaning.

Registers per-camera keypoint streams into a common frame (ICP with a
manual initial guess), averages gated detections across views, fills
missing samples, low-pass smooths and rotates onto the room axes. Also
turns robot image detections into a clean 3D track via inverse camera
projection and an expected-region filter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import RigidTransform, rigid_fit, yaw_matrix


class Joint(IntEnum):
    LEFT_WRIST = 0
    RIGHT_WRIST = 1
    LEFT_ELBOW = 2
    RIGHT_ELBOW = 3
    LEFT_SHOULDER = 4
    RIGHT_SHOULDER = 5
    LEFT_HIP = 6
    RIGHT_HIP = 7
    LEFT_KNEE = 8
    RIGHT_KNEE = 9
    LEFT_ANKLE = 10
    RIGHT_ANKLE = 11
    NECK = 12
    NOSE = 13
    LEFT_EYE = 14
    RIGHT_EYE = 15
    LEFT_EAR = 16
    RIGHT_EAR = 17


N_JOINTS = 18

JOINT_NAMES = tuple(j.name.lower() for j in Joint)


class DegeneratePointSet(ValueError):
    """Point set has rank < 2 spread; no rigid fit is identifiable."""


class NeverObserved(ValueError):
    """A joint (or the robot) has zero valid samples over a whole track."""


@dataclass(frozen=True)
class Keypoint:
    """A single named 3D body landmark."""

    joint_id: Joint
    position: np.ndarray
    valid: bool

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if self.valid and not np.all(np.isfinite(pos)):
            raise ValueError("valid keypoint has non-finite position")
        object.__setattr__(self, "position", pos)


@dataclass
class KeypointFrame:
    """One camera's 18 keypoints at one frame; invalid slots are flagged."""

    camera_id: str
    frame_idx: int
    timestamp: float
    positions: np.ndarray  # (18, 3)
    valid: np.ndarray  # (18,) bool

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.positions.shape != (N_JOINTS, 3):
            raise ValueError(f"positions must be (18, 3), got {self.positions.shape}")
        if self.valid.shape != (N_JOINTS,):
            raise ValueError(f"valid must be (18,), got {self.valid.shape}")
        if self.frame_idx < 0:
            raise ValueError("frame_idx must be non-negative")
        if not np.all(np.isfinite(self.positions[self.valid])):
            raise ValueError("valid keypoints must have finite positions")

    def keypoint(self, joint: Joint) -> Keypoint:
        return Keypoint(Joint(joint), self.positions[joint], bool(self.valid[joint]))


@dataclass
class PoseTrack:
    """Time-ordered fused keypoints in the common frame."""

    positions: np.ndarray  # (T, 18, 3)
    valid: np.ndarray  # (T, 18) bool
    fps: float = 30.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.positions.ndim != 3 or self.positions.shape[1:] != (N_JOINTS, 3):
            raise ValueError("positions must be (T, 18, 3)")
        if self.valid.shape != self.positions.shape[:2]:
            raise ValueError("valid must be (T, 18)")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @classmethod
    def from_frames(cls, frames: Sequence[KeypointFrame], fps: float = 30.0) -> "PoseTrack":
        return cls(
            np.stack([f.positions for f in frames]),
            np.stack([f.valid for f in frames]),
            fps,
        )

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def frame(self, i: int) -> KeypointFrame:
        return KeypointFrame("fused", i, i / self.fps, self.positions[i], self.valid[i])


@dataclass
class RobotTrack:
    """Time-ordered robot positions in the common frame."""

    positions: np.ndarray  # (T, 3)
    valid: np.ndarray  # (T,) bool
    fps: float = 30.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (T, 3)")
        if self.valid.shape != (self.positions.shape[0],):
            raise ValueError("valid must be (T,)")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass
class IcpResult:
    transform: RigidTransform
    rms: float
    iterations: int
    converged: bool


def _check_spread(points: np.ndarray) -> None:
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if s[1] <= 1e-9 * max(1.0, s[0]):
        raise DegeneratePointSet("degenerate point set")


def icp_register(
    source,
    target,
    init: RigidTransform,
    max_iters: int = 100,
    tol: float = 1e-5,
) -> IcpResult:
    """Point-to-point ICP registering ``source`` onto ``target``.

    Alternates nearest-neighbour correspondence (KD-tree over the target)
    with a closed-form rigid fit until the RMS nearest-point distance
    improves by less than ``tol`` metres or ``max_iters`` is reached.
    The best-so-far transform is returned either way; ``converged`` tells
    the two cases apart.
    """
    src = np.asarray(source, dtype=float)
    dst = np.asarray(target, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or dst.ndim != 2 or dst.shape[1] != 3:
        raise ValueError("point sets must be (n, 3) arrays")
    if len(src) < 3 or len(dst) < 3:
        raise DegeneratePointSet("degenerate point set")
    _check_spread(src)
    _check_spread(dst)

    tree = cKDTree(dst)
    current = init
    best: Optional[RigidTransform] = None
    best_rms = np.inf
    prev_rms = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        moved = current.apply(src)
        dists, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(dists**2)))
        if rms < best_rms:
            best, best_rms = current, rms
        if prev_rms - rms < tol:
            converged = True
            break
        prev_rms = rms
        current = rigid_fit(src, dst[idx])
    assert best is not None
    return IcpResult(best, best_rms, iterations, converged)


def transform_frame(frame: KeypointFrame, t: RigidTransform) -> KeypointFrame:
    """Apply a rigid transform to all valid keypoints of a frame."""
    positions = frame.positions.copy()
    positions[frame.valid] = t.apply(positions[frame.valid])
    return KeypointFrame(
        frame.camera_id, frame.frame_idx, frame.timestamp, positions, frame.valid.copy()
    )


def fuse_views(
    frames: Sequence[KeypointFrame],
    prev: Optional[KeypointFrame],
    gate_radius: float = 0.3,
) -> KeypointFrame:
    """Average per-joint detections across views, gated against the previous
    fused frame.

    Candidates are the valid detections of each view; when the previous
    fused frame has the joint, only candidates within ``gate_radius`` of
    it survive. No survivors means the joint is missing in this frame.
    On the first frame (no ``prev``) all valid candidates are averaged.
    """
    if not frames:
        raise ValueError("no views to fuse")
    pos = np.stack([f.positions for f in frames])  # (V, 18, 3)
    ok = np.stack([f.valid for f in frames])  # (V, 18)
    if prev is not None:
        gated = np.linalg.norm(pos - prev.positions[None], axis=2) <= gate_radius
        ok = ok & (gated | ~prev.valid[None])
    counts = ok.sum(axis=0)  # (18,)
    fused = np.zeros((N_JOINTS, 3))
    nonzero = counts > 0
    sums = np.where(ok[:, :, None], pos, 0.0).sum(axis=0)
    fused[nonzero] = sums[nonzero] / counts[nonzero, None]
    ref = frames[0]
    return KeypointFrame("fused", ref.frame_idx, ref.timestamp, fused, nonzero)


def _fill_series(values: np.ndarray, valid: np.ndarray, max_gap: int) -> np.ndarray:
    """Fill invalid samples of a (T, k) series.

    Interior gaps up to ``max_gap`` samples are linearly interpolated;
    longer gaps and the ends hold the nearest valid value (ties at a gap
    midpoint go to the earlier sample).
    """
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        raise NeverObserved("joint never observed")
    out = values.copy()
    out[: idx[0]] = values[idx[0]]
    out[idx[-1] + 1 :] = values[idx[-1]]
    for a, b in zip(idx[:-1], idx[1:]):
        gap = b - a - 1
        if gap == 0:
            continue
        if gap <= max_gap:
            w = (np.arange(1, gap + 1) / (b - a))[:, None]
            out[a + 1 : b] = (1.0 - w) * values[a] + w * values[b]
        else:
            mid = (a + b) // 2
            out[a + 1 : mid + 1] = values[a]
            out[mid + 1 : b] = values[b]
    return out


def interpolate_gaps(track, max_gap: int = 30):
    """Fill missing samples of a pose or robot track; all samples valid after.

    Raises :class:`NeverObserved` if a joint (or the robot) has no valid
    sample anywhere in the track.
    """
    if isinstance(track, PoseTrack):
        filled = track.positions.copy()
        for j in range(N_JOINTS):
            filled[:, j, :] = _fill_series(track.positions[:, j, :], track.valid[:, j], max_gap)
        return PoseTrack(filled, np.ones_like(track.valid), track.fps)
    if isinstance(track, RobotTrack):
        filled = _fill_series(track.positions, track.valid, max_gap)
        return RobotTrack(filled, np.ones_like(track.valid), track.fps)
    raise TypeError(f"unsupported track type {type(track).__name__}")


def lowpass_smooth(track, alpha: float = 0.3):
    """First-order exponential moving average per coordinate.

    ``s0 = x0; s_t = alpha * x_t + (1 - alpha) * s_{t-1}``. Requires a
    fully valid track (run after :func:`interpolate_gaps`).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if not track.valid.all():
        raise ValueError("track must be fully valid before smoothing")
    x = track.positions
    s = x.copy()
    for t in range(1, s.shape[0]):
        s[t] = alpha * x[t] + (1.0 - alpha) * s[t - 1]
    if isinstance(track, PoseTrack):
        return PoseTrack(s, track.valid.copy(), track.fps)
    return RobotTrack(s, track.valid.copy(), track.fps)


def align_to_room(track, yaw: float):
    """Rotate all positions about the vertical axis so the frame's
    horizontal axes co-align with the room edges."""
    rot = yaw_matrix(yaw)
    positions = track.positions @ rot.T
    if isinstance(track, PoseTrack):
        return PoseTrack(positions, track.valid.copy(), track.fps)
    return RobotTrack(positions, track.valid.copy(), track.fps)


def backproject_bbox(bbox_center, depth: float, k: CameraIntrinsics) -> np.ndarray:
    """Inverse camera projection of a detection centre at a known depth.

    Returns the 3D point in the camera frame; the caller applies the
    camera's rigid transform to reach the common frame.
    """
    if depth <= 0:
        raise ValueError("invalid depth")
    u, v = float(bbox_center[0]), float(bbox_center[1])
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])


def reject_out_of_range(track: RobotTrack, region) -> RobotTrack:
    """Invalidate robot positions outside an axis-aligned expected region.

    ``region`` is a ``(lo, hi)`` pair of 3-vectors in metres. Rejected
    samples are re-filled later by :func:`interpolate_gaps`.
    """
    lo = np.asarray(region[0], dtype=float).reshape(3)
    hi = np.asarray(region[1], dtype=float).reshape(3)
    if np.any(hi <= lo):
        raise ValueError("expected region must have positive extent")
    inside = np.all((track.positions >= lo) & (track.positions <= hi), axis=1)
    return RobotTrack(track.positions.copy(), track.valid & inside, track.fps)
