"""Synthetic child-robot sessions for desk-scale end-to-end testing.

Simulates an 18-joint skeleton moving around a room with per-class
behaviour statistics (gaze wander for disengagement, steady focus for
attention, focus plus hand reaches for cooperation), renders it into
each camera frame with noise, dropouts and outlier spikes, projects the
robot into one camera as 2D detections, and writes the exact file
formats the fusion stage ingests, plus per-second annotations and a
clean ground-truth sidecar.

All profile numbers are free parameters with documented defaults; they
model qualitative class behaviour, not measured children.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataio
from .fusion import CameraIntrinsics, Joint, KeypointFrame, N_JOINTS
from .geometry import RigidTransform, rotation_about_axis, wrap_angle, yaw_matrix


@dataclass
class BehaviorProfile:
    """Per-class motion statistics driving the simulator.

    Gaze follows a fixation model: the child holds a gaze target for a
    short dwell, then saccades to a new one. The within-fixation dynamics
    (an Ornstein-Uhlenbeck pull toward the target with random-walk scale
    ``gaze_jitter``) are identical for every class; classes differ in how
    the targets themselves are drawn. A disengaged child's targets are
    scattered (constant shifting), an attentive child's stay pinned on
    the robot with occasional glances away, so a single 5-frame segment
    is often ambiguous while a few seconds of context are not. The body
    facing tracks a fraction of the gaze target.
    """

    class_id: int
    gaze_bias: float  # centre of the fixation-target distribution
    gaze_spread: float  # half-width of the target distribution
    gaze_flip_p: float  # chance a target lands on the other side
    gaze_far_p: float  # chance of a far glance (|target| in 0.9-1.9)
    fix_dwell: tuple  # seconds a fixation target is held
    gaze_jitter: float  # within-fixation random walk, rad per sqrt second
    gaze_pull: float  # pull toward the current target, 1/s
    body_gain: float  # fraction of the gaze target the body follows
    body_jitter: float
    body_pull: float
    locomotion_speed: float  # m/s toward the current target point
    hand_reach_rate: float  # reaches per minute
    dwell: float  # typical seconds per behaviour bout
    stand_distance: float  # preferred distance from the robot, metres
    wander: bool  # re-draw random waypoints instead of standing
    hold_phase: float = 0.0  # baseline arm extension (brick handling)
    # positional overlap knobs: standing distance is re-drawn per bout and
    # wandering children pause in place, so position alone cannot separate
    # the classes
    stand_range: tuple = (1.2, 2.2)
    pause_range: tuple = (0.0, 0.0)  # wander pause duration, seconds


DEFAULT_PROFILES: dict[int, BehaviorProfile] = {
    1: BehaviorProfile(
        class_id=1,
        gaze_bias=1.2, gaze_spread=1.1, gaze_flip_p=0.15, gaze_far_p=0.0,
        fix_dwell=(0.8, 1.8), gaze_jitter=0.3, gaze_pull=3.0,
        body_gain=0.45, body_jitter=0.15, body_pull=2.0,
        locomotion_speed=0.35, hand_reach_rate=0.0, dwell=9.0,
        stand_distance=2.0, wander=True,
        pause_range=(2.0, 6.0),
    ),
    2: BehaviorProfile(
        class_id=2,
        gaze_bias=0.0, gaze_spread=0.3, gaze_flip_p=0.0, gaze_far_p=0.12,
        fix_dwell=(1.5, 3.5), gaze_jitter=0.3, gaze_pull=3.0,
        body_gain=0.45, body_jitter=0.15, body_pull=2.0,
        locomotion_speed=0.25, hand_reach_rate=0.0, dwell=9.0,
        stand_distance=1.6, wander=False,
        stand_range=(1.2, 2.2),
    ),
    3: BehaviorProfile(
        class_id=3,
        gaze_bias=0.0, gaze_spread=0.08, gaze_flip_p=0.0, gaze_far_p=0.0,
        fix_dwell=(2.0, 4.0), gaze_jitter=0.3, gaze_pull=3.0,
        body_gain=0.45, body_jitter=0.15, body_pull=2.0,
        locomotion_speed=0.3, hand_reach_rate=10.0, dwell=9.0,
        stand_distance=0.9, wander=False, hold_phase=0.45,
        stand_range=(0.8, 1.1),
    ),
}


FAR_GLANCE_DWELL = (0.6, 1.2)  # an attentive child's look-away is brief


def _draw_fixation(rng: np.random.Generator, prof: BehaviorProfile) -> tuple[float, float]:
    """New gaze target and how long it is held."""
    if prof.gaze_far_p > 0 and rng.random() < prof.gaze_far_p:
        target = rng.uniform(0.9, 1.9) * rng.choice([-1.0, 1.0])
        return float(target), float(rng.uniform(*FAR_GLANCE_DWELL))
    target = prof.gaze_bias + rng.uniform(-prof.gaze_spread, prof.gaze_spread)
    if prof.gaze_flip_p > 0 and rng.random() < prof.gaze_flip_p:
        target = -target
    return float(target), float(rng.uniform(*prof.fix_dwell))

REACH_SECONDS = 1.5

# skeleton proportions (metres), roughly a 6-10 year old
HIP_HEIGHT = 0.58
HIP_HALF_WIDTH = 0.09
SPINE_LEN = 0.37  # hip centre to neck
SHOULDER_HALF_WIDTH = 0.14
SHOULDER_DROP = 0.03
HEAD_RAISE = 0.11  # neck to head centre
NOSE_FWD, NOSE_DROP = 0.09, 0.015
EYE_FWD, EYE_HALF_WIDTH, EYE_RAISE = 0.075, 0.032, 0.02
EAR_HALF_WIDTH = 0.07
THIGH_LEN, SHIN_LEN = 0.26, 0.24
UPPER_ARM_LEN, FOREARM_LEN = 0.24, 0.23

BONES = (
    (Joint.LEFT_HIP, Joint.LEFT_KNEE),
    (Joint.LEFT_KNEE, Joint.LEFT_ANKLE),
    (Joint.RIGHT_HIP, Joint.RIGHT_KNEE),
    (Joint.RIGHT_KNEE, Joint.RIGHT_ANKLE),
    (Joint.LEFT_SHOULDER, Joint.LEFT_ELBOW),
    (Joint.LEFT_ELBOW, Joint.LEFT_WRIST),
    (Joint.RIGHT_SHOULDER, Joint.RIGHT_ELBOW),
    (Joint.RIGHT_ELBOW, Joint.RIGHT_WRIST),
    (Joint.LEFT_HIP, Joint.RIGHT_HIP),
    (Joint.LEFT_SHOULDER, Joint.RIGHT_SHOULDER),
    (Joint.LEFT_EAR, Joint.RIGHT_EAR),
    (Joint.NECK, Joint.NOSE),
)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def build_skeleton(
    root_xy: np.ndarray,
    body_yaw: float,
    head_yaw: float,
    reach: tuple[float, float],
    reach_target: np.ndarray,
    gait_phase: float,
) -> np.ndarray:
    """Joint positions for one frame; bone lengths are exact by
    construction (all limbs are fixed-length unit-vector chains)."""
    fwd_b = np.array([np.cos(body_yaw), np.sin(body_yaw), 0.0])
    left_b = np.array([-np.sin(body_yaw), np.cos(body_yaw), 0.0])
    fwd_h = np.array([np.cos(head_yaw), np.sin(head_yaw), 0.0])
    left_h = np.array([-np.sin(head_yaw), np.cos(head_yaw), 0.0])
    up = np.array([0.0, 0.0, 1.0])

    p = np.zeros((N_JOINTS, 3))
    hip_c = np.array([root_xy[0], root_xy[1], HIP_HEIGHT])
    p[Joint.LEFT_HIP] = hip_c + HIP_HALF_WIDTH * left_b
    p[Joint.RIGHT_HIP] = hip_c - HIP_HALF_WIDTH * left_b
    neck = hip_c + SPINE_LEN * up
    p[Joint.NECK] = neck
    p[Joint.LEFT_SHOULDER] = neck + SHOULDER_HALF_WIDTH * left_b - SHOULDER_DROP * up
    p[Joint.RIGHT_SHOULDER] = neck - SHOULDER_HALF_WIDTH * left_b - SHOULDER_DROP * up

    head_c = neck + HEAD_RAISE * up
    p[Joint.NOSE] = head_c + NOSE_FWD * fwd_h - NOSE_DROP * up
    p[Joint.LEFT_EYE] = head_c + EYE_FWD * fwd_h + EYE_HALF_WIDTH * left_h + EYE_RAISE * up
    p[Joint.RIGHT_EYE] = head_c + EYE_FWD * fwd_h - EYE_HALF_WIDTH * left_h + EYE_RAISE * up
    p[Joint.LEFT_EAR] = head_c + EAR_HALF_WIDTH * left_h
    p[Joint.RIGHT_EAR] = head_c - EAR_HALF_WIDTH * left_h

    # legs: slight alternating swing while walking, straight down otherwise
    for side, hip, knee, ankle in (
        (1.0, Joint.LEFT_HIP, Joint.LEFT_KNEE, Joint.LEFT_ANKLE),
        (-1.0, Joint.RIGHT_HIP, Joint.RIGHT_KNEE, Joint.RIGHT_ANKLE),
    ):
        swing = 0.25 * np.sin(gait_phase) * side
        d_thigh = _unit(swing * fwd_b - up)
        p[knee] = p[hip] + THIGH_LEN * d_thigh
        p[ankle] = p[knee] + SHIN_LEN * _unit(-0.5 * swing * fwd_b - up)

    # arms: rest pose hangs with the forearm folded up; a reach straightens
    # the chain toward the target (full extension at phase 1)
    for side, phase, shoulder, elbow, wrist in (
        (1.0, reach[0], Joint.LEFT_SHOULDER, Joint.LEFT_ELBOW, Joint.LEFT_WRIST),
        (-1.0, reach[1], Joint.RIGHT_SHOULDER, Joint.RIGHT_ELBOW, Joint.RIGHT_WRIST),
    ):
        rest_upper = _unit(0.2 * side * left_b + 0.1 * fwd_b - up)
        rest_fore = _unit(0.9 * fwd_b + 0.35 * up)
        if phase > 0:
            to_target = _unit(reach_target - p[shoulder])
            d_upper = _unit((1 - phase) * rest_upper + phase * to_target)
            d_fore = _unit((1 - phase) * rest_fore + phase * to_target)
        else:
            d_upper, d_fore = rest_upper, rest_fore
        p[elbow] = p[shoulder] + UPPER_ARM_LEN * d_upper
        p[wrist] = p[elbow] + FOREARM_LEN * d_fore
    return p


@dataclass
class SessionTruth:
    """Clean room-frame simulation output."""

    pose: np.ndarray  # (T, 18, 3)
    robot: np.ndarray  # (T, 3)
    annotations: np.ndarray  # (n_seconds,) class ids
    fps: float


def simulate_session(
    schedule: Sequence[tuple[int, float]],
    room: tuple,
    fps: float,
    rng: np.random.Generator,
    profiles: Optional[dict[int, BehaviorProfile]] = None,
    robot_home: Optional[np.ndarray] = None,
) -> SessionTruth:
    """Simulate one session following a (class, seconds) schedule."""
    if not schedule or any(d <= 0 for _, d in schedule):
        raise ValueError("schedule must list positive-duration bouts")
    profiles = profiles or DEFAULT_PROFILES
    lo = np.asarray(room[0], dtype=float)
    hi = np.asarray(room[1], dtype=float)
    center = 0.5 * (lo + hi)
    if robot_home is None:
        robot_home = np.array([lo[0] + 0.75 * (hi[0] - lo[0]), center[1], 0.35])

    dt = 1.0 / fps
    annotations = []
    for class_id, seconds in schedule:
        annotations.extend([class_id] * int(round(seconds)))
    n_seconds = len(annotations)
    n_frames = int(round(n_seconds * fps))

    margin = 0.35
    pos = np.array([center[0] - 0.8, center[1] + 0.4])
    gaze_off = 0.0
    body_off = 0.0
    waypoint = pos.copy()
    gait_phase = 0.0
    reach_phase = [0.0, 0.0]  # left, right
    reach_t = [np.inf, np.inf]
    fix_target = 0.0
    fix_left = 0.0  # seconds until the next fixation re-draw
    pose = np.empty((n_frames, N_JOINTS, 3))
    robot = np.empty((n_frames, 3))

    stand_distance = DEFAULT_PROFILES[2].stand_distance
    pause_t = 0.0
    last_class = None
    for t in range(n_frames):
        second = min(int(t / fps), n_seconds - 1)
        prof = profiles[annotations[second]]
        if annotations[second] != last_class:
            last_class = annotations[second]
            stand_distance = float(rng.uniform(*prof.stand_range))
            fix_left = 0.0  # fixations do not outlive their bout

        # robot: near-static with a gentle drift so rejection regions matter
        wobble = 0.03 * np.array(
            [np.sin(2 * np.pi * 0.05 * t * dt), np.cos(2 * np.pi * 0.04 * t * dt), 0.3 * np.sin(2 * np.pi * 0.07 * t * dt)]
        )
        robot[t] = robot_home + wobble

        # locomotion target
        if prof.wander:
            if pause_t > 0:
                pause_t -= dt
                waypoint = pos
            elif np.linalg.norm(waypoint - pos) < 0.15 or rng.random() < dt / 6.0:
                waypoint = rng.uniform(lo[:2] + margin, hi[:2] - margin)
                if prof.pause_range[1] > 0:
                    pause_t = float(rng.uniform(*prof.pause_range))
        else:
            to_robot = robot[t, :2] - pos
            d = np.linalg.norm(to_robot)
            if d > 1e-9:
                waypoint = robot[t, :2] - to_robot / d * stand_distance
        step = waypoint - pos
        dist = np.linalg.norm(step)
        speed = min(prof.locomotion_speed, dist / dt if dt > 0 else 0.0)
        moving = dist > 0.05
        if moving:
            pos = pos + step / max(dist, 1e-9) * speed * dt
        gait_phase += (2.0 * np.pi * 1.6 * dt) if moving else 0.0
        pos = np.clip(pos, lo[:2] + margin, hi[:2] - margin)

        # fixation targets shift at class-specific statistics; the child's
        # gaze and body offsets relax toward them with shared dynamics
        fix_left -= dt
        if fix_left <= 0:
            fix_target, fix_left = _draw_fixation(rng, prof)
        gaze_off += prof.gaze_pull * (fix_target - gaze_off) * dt
        gaze_off += prof.gaze_jitter * np.sqrt(dt) * rng.normal()
        body_target = prof.body_gain * fix_target
        body_off += prof.body_pull * (body_target - body_off) * dt
        body_off += prof.body_jitter * np.sqrt(dt) * rng.normal()

        bearing = np.arctan2(robot[t, 1] - pos[1], robot[t, 0] - pos[0])
        body_yaw = bearing + body_off
        head_yaw = bearing + gaze_off

        # hand reaches (cooperative behaviour); a nonzero hold keeps the
        # arms partly extended between reaches, as when handling the brick
        if prof.hand_reach_rate > 0:
            hazard = prof.hand_reach_rate / 60.0 * dt
            if all(rt > REACH_SECONDS for rt in reach_t) and rng.random() < hazard:
                arm = int(rng.integers(0, 2))
                reach_t[arm] = 0.0
        for arm in range(2):
            if reach_t[arm] <= REACH_SECONDS:
                reach_phase[arm] = float(np.sin(np.pi * reach_t[arm] / REACH_SECONDS) ** 2)
                reach_t[arm] += dt
            else:
                reach_phase[arm] = 0.0
            reach_phase[arm] = max(reach_phase[arm], prof.hold_phase)
        target = robot[t] + np.array([0.0, 0.0, 0.4])

        pose[t] = build_skeleton(pos, body_yaw, head_yaw, tuple(reach_phase), target, gait_phase)

    return SessionTruth(pose, robot, np.asarray(annotations, dtype=int), fps)


def corrupt(
    frames: Sequence[KeypointFrame],
    dropout_p: float,
    outlier_p: float,
    outlier_scale: float,
    seed,
) -> list[KeypointFrame]:
    """Stress a keypoint stream: joints go missing with ``dropout_p`` and
    valid joints are displaced by large offsets with ``outlier_p``."""
    if not 0 <= dropout_p <= 1 or not 0 <= outlier_p <= 1:
        raise ValueError("probabilities must be in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for f in frames:
        positions = f.positions.copy()
        valid = f.valid.copy()
        if dropout_p > 0:
            valid &= rng.random(N_JOINTS) >= dropout_p
        if outlier_p > 0:
            hit = valid & (rng.random(N_JOINTS) < outlier_p)
            if hit.any():
                direction = rng.normal(size=(int(hit.sum()), 3))
                direction /= np.linalg.norm(direction, axis=1, keepdims=True)
                magnitude = outlier_scale * rng.uniform(0.5, 1.5, size=(int(hit.sum()), 1))
                positions[hit] += direction * magnitude
        out.append(KeypointFrame(f.camera_id, f.frame_idx, f.timestamp, positions, valid))
    return out


def make_camera_rig(n_cameras: int, room: tuple) -> dict[str, tuple[CameraIntrinsics, RigidTransform]]:
    """Cameras on the room walls looking at the room centre.

    Returns camera_id -> (intrinsics, camera-to-room transform).
    """
    lo = np.asarray(room[0], dtype=float)
    hi = np.asarray(room[1], dtype=float)
    center = 0.5 * (lo + hi)
    look_at = np.array([center[0], center[1], 0.8])
    spots = [
        np.array([lo[0] + 0.2, lo[1] + 0.2, 1.9]),
        np.array([hi[0] - 0.2, hi[1] - 0.2, 1.9]),
        np.array([lo[0] + 0.2, hi[1] - 0.2, 2.1]),
        np.array([hi[0] - 0.2, lo[1] + 0.2, 1.7]),
    ]
    intr = CameraIntrinsics(fx=580.0, fy=580.0, cx=320.0, cy=240.0)
    rig = {}
    for i in range(n_cameras):
        eye = spots[i % len(spots)]
        z_axis = _unit(look_at - eye)  # optical axis
        x_axis = _unit(np.cross(z_axis, np.array([0.0, 0.0, 1.0])))
        y_axis = np.cross(z_axis, x_axis)  # points mostly down
        rot = np.column_stack([x_axis, y_axis, z_axis])
        rig[f"cam{i}"] = (intr, RigidTransform(rot, eye))
    return rig


def project_to_pixels(point_cam: np.ndarray, k: CameraIntrinsics) -> tuple[float, float, float]:
    """Pinhole projection of a camera-frame point: (u, v, depth)."""
    x, y, z = point_cam
    if z <= 0:
        raise ValueError("point behind the camera")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy, float(z))


def _perturbed(t: RigidTransform, rng, max_angle, max_shift) -> RigidTransform:
    axis = rng.normal(size=3)
    angle = rng.uniform(0.3, 1.0) * max_angle * rng.choice([-1.0, 1.0])
    rot = rotation_about_axis(axis, angle) @ t.rotation
    return RigidTransform(rot, t.translation + rng.uniform(-max_shift, max_shift, size=3))


@dataclass
class SynthSettings:
    sessions: int = 8
    seconds: float = 60.0
    cameras: int = 3
    fps: float = 30.0
    noise_sigma: float = 0.008  # per-camera keypoint noise, metres
    dropout_p: float = 0.10
    outlier_p: float = 0.05
    outlier_scale: float = 1.0
    room: tuple = ((0.0, 0.0, 0.0), (4.0, 3.0, 2.2))
    room_yaw: float = 0.12  # final common-frame-to-room rotation
    robot_px_noise: float = 2.0
    robot_depth_noise: float = 0.01
    robot_outlier_p: float = 0.03
    init_max_angle: float = np.deg2rad(8.0)
    init_max_shift: float = 0.15
    dwell_range: tuple = (6.0, 12.0)
    class_probs: tuple = (0.25, 0.45, 0.30)


def random_schedule(rng: np.random.Generator, settings: SynthSettings) -> list[tuple[int, float]]:
    """Whole-second bout schedule covering ``seconds``; the first three
    bouts cover all classes in shuffled order (at least 3 s each is
    reserved for the classes still owed, so every class occurs whenever
    the session is at least 9 s long)."""
    total = 0
    seconds = int(round(settings.seconds))
    bouts: list[tuple[int, float]] = []
    classes = [1, 2, 3]
    rng.shuffle(classes)
    pending = list(classes)
    while total < seconds:
        c = pending.pop(0) if pending else int(rng.choice([1, 2, 3], p=settings.class_probs))
        dur = int(round(rng.uniform(*settings.dwell_range)))
        reserve = 3 * len(pending)
        dur = min(max(dur, 1), max(seconds - total - reserve, 1), seconds - total)
        bouts.append((c, float(dur)))
        total += dur
    return bouts


def generate_session(
    out_dir: Path,
    session_id: str,
    schedule: Sequence[tuple[int, float]],
    rig: dict,
    robot_camera: str,
    settings: SynthSettings,
    seed,
    profiles: Optional[dict[int, BehaviorProfile]] = None,
) -> SessionTruth:
    """Simulate, render per camera (with corruption), detect the robot in
    one camera and write all session files under ``out_dir``.

    ``rig`` maps camera ids to (intrinsics, camera-to-room transform),
    i.e. the physical camera poses; the truth sidecar stays in the
    simulation (room) frame.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    truth = simulate_session(schedule, settings.room, settings.fps, rng, profiles)
    n_frames = truth.pose.shape[0]

    for cam_id, (intr, cam_to_room) in sorted(rig.items()):
        room_to_cam = cam_to_room.inverse()
        frames = []
        for t in range(n_frames):
            pts = room_to_cam.apply(truth.pose[t])
            pts = pts + rng.normal(0.0, settings.noise_sigma, size=pts.shape)
            frames.append(
                KeypointFrame(cam_id, t, t / settings.fps, pts, np.ones(N_JOINTS, bool))
            )
        frames = corrupt(
            frames,
            settings.dropout_p,
            settings.outlier_p,
            settings.outlier_scale,
            rng.integers(2**31),
        )
        dataio.write_keypoint_stream(out_dir / f"{cam_id}.jsonl", frames)

    intr, cam_to_room = rig[robot_camera]
    room_to_cam = cam_to_room.inverse()
    rows = []
    for t in range(n_frames):
        u, v, depth = project_to_pixels(room_to_cam.apply(truth.robot[t]), intr)
        u += rng.normal(0.0, settings.robot_px_noise)
        v += rng.normal(0.0, settings.robot_px_noise)
        depth += rng.normal(0.0, settings.robot_depth_noise)
        if rng.random() < settings.robot_outlier_p:
            depth *= rng.uniform(1.8, 3.0)
            u += rng.choice([-1.0, 1.0]) * rng.uniform(80.0, 250.0)
        rows.append({"frame_idx": t, "u": u, "v": v, "depth_m": depth})
    dataio.write_robot_detections(out_dir / "robot.jsonl", rows)

    dataio.write_annotations_csv(out_dir / "annotations.csv", session_id, truth.annotations)
    np.savez(
        out_dir / "truth.npz",
        pose=truth.pose,
        robot=truth.robot,
        annotations=truth.annotations,
        fps=truth.fps,
    )
    return truth


def generate_dataset(
    out_dir,
    settings: SynthSettings,
    seed: int,
    profiles: Optional[dict[int, BehaviorProfile]] = None,
) -> dict:
    """Generate a multi-session dataset plus calibration and manifest.

    Camera init transforms are written perturbed (the reference camera is
    exact: it defines the common frame up to the room yaw); registration
    is expected to refine the others via ICP. Returns the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rig = make_camera_rig(settings.cameras, settings.room)
    reference = "cam0"
    robot_camera = "cam0"

    # the common frame is the room frame rotated by -yaw; align_to_room(yaw)
    # in the fusion stage undoes it
    common_from_room = RigidTransform(yaw_matrix(-settings.room_yaw), np.zeros(3))
    rig_common = {
        cam: (intr, common_from_room.compose(t)) for cam, (intr, t) in rig.items()
    }
    calib = {}
    for cam, (intr, t) in sorted(rig_common.items()):
        if cam == reference:
            calib[cam] = (intr, t)
        else:
            calib[cam] = (intr, _perturbed(t, rng, settings.init_max_angle, settings.init_max_shift))
    dataio.write_calibration(out_dir / "calibration.json", calib, reference, robot_camera)

    robot_region_margin = np.array([0.45, 0.45, 0.45])
    sessions = []
    robot_min, robot_max = None, None
    for i in range(settings.sessions):
        session_id = f"session{i:02d}"
        schedule = random_schedule(rng, settings)
        # render with the physical (room-frame) rig; the calibration file
        # expresses the same cameras in the common frame
        truth = generate_session(
            out_dir / session_id,
            session_id,
            schedule,
            rig,
            robot_camera,
            settings,
            rng.integers(2**31),
            profiles,
        )
        lo = truth.robot.min(axis=0) - robot_region_margin
        hi = truth.robot.max(axis=0) + robot_region_margin
        robot_min = lo if robot_min is None else np.minimum(robot_min, lo)
        robot_max = hi if robot_max is None else np.maximum(robot_max, hi)
        sessions.append(
            {
                "id": session_id,
                "cameras": {cam: f"{session_id}/{cam}.jsonl" for cam in sorted(rig)},
                "robot": f"{session_id}/robot.jsonl",
                "annotations": f"{session_id}/annotations.csv",
                "truth": f"{session_id}/truth.npz",
            }
        )

    manifest = {
        "fps": settings.fps,
        "room": {"min": list(settings.room[0]), "max": list(settings.room[1])},
        "room_yaw": settings.room_yaw,
        "robot_region": {
            "min": [float(x) for x in robot_min],
            "max": [float(x) for x in robot_max],
        },
        "calibration": "calibration.json",
        "sessions": sessions,
    }
    dataio.write_manifest(out_dir / "manifest.json", manifest)
    return manifest
