"""Readers and writers for the pipeline's file formats.

Keypoint streams and robot detections are JSON-lines; annotations are
CSV (session_id, second_idx, class); calibration and dataset manifests
are JSON. All lengths are metres and angles radians. Writers are
byte-deterministic for identical inputs.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fusion import CameraIntrinsics, KeypointFrame, N_JOINTS
from .geometry import RigidTransform


def _jsonl_dump(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"))


def write_keypoint_stream(path, frames: Sequence[KeypointFrame]) -> None:
    with open(path, "w") as fh:
        for f in frames:
            keypoints = [
                [float(x) for x in f.positions[j]] if f.valid[j] else None
                for j in range(N_JOINTS)
            ]
            fh.write(
                _jsonl_dump(
                    {
                        "camera_id": f.camera_id,
                        "frame_idx": int(f.frame_idx),
                        "timestamp_s": float(f.timestamp),
                        "keypoints": keypoints,
                    }
                )
                + "\n"
            )


def read_keypoint_stream(path) -> list[KeypointFrame]:
    frames = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            kps = rec["keypoints"]
            if len(kps) != N_JOINTS:
                raise ValueError(f"{path}: expected {N_JOINTS} keypoints, got {len(kps)}")
            positions = np.zeros((N_JOINTS, 3))
            valid = np.zeros(N_JOINTS, dtype=bool)
            for j, kp in enumerate(kps):
                if kp is not None:
                    positions[j] = kp
                    valid[j] = True
            frames.append(
                KeypointFrame(
                    rec["camera_id"], rec["frame_idx"], rec["timestamp_s"], positions, valid
                )
            )
    return frames


def write_robot_detections(path, rows: Sequence[dict]) -> None:
    """Rows are {frame_idx, u, v, depth_m} or pre-computed {frame_idx, x, y, z}."""
    with open(path, "w") as fh:
        for row in rows:
            fh.write(_jsonl_dump({k: (int(v) if k == "frame_idx" else float(v)) for k, v in row.items()}) + "\n")


def read_robot_detections(path) -> list[dict]:
    with open(path) as fh:
        rows = [json.loads(line) for line in fh]
    for row in rows:
        keys = set(row)
        if not ({"frame_idx", "u", "v", "depth_m"} <= keys or {"frame_idx", "x", "y", "z"} <= keys):
            raise ValueError(f"{path}: unrecognised robot detection record {sorted(keys)}")
    return rows


def write_annotations_csv(path, session_id: str, classes: Sequence[int]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["session_id", "second_idx", "class"])
        for i, c in enumerate(classes):
            writer.writerow([session_id, i, int(c)])


def read_annotations_csv(path) -> tuple[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty annotation file")
    session_id = rows[0]["session_id"]
    classes = np.full(len(rows), -1, dtype=int)
    for row in rows:
        idx = int(row["second_idx"])
        if not 0 <= idx < len(rows):
            raise ValueError(f"{path}: second_idx {idx} out of range")
        classes[idx] = int(row["class"])
    if np.any(classes < 1) or np.any(classes > 3):
        raise ValueError(f"{path}: classes must be 1..3 and cover every second")
    return session_id, classes


def write_calibration(path, cameras: dict, reference_camera: str, robot_camera: str) -> None:
    """``cameras`` maps camera id to (CameraIntrinsics, RigidTransform)."""
    doc = {
        "reference_camera": reference_camera,
        "robot_camera": robot_camera,
        "cameras": {
            cam: {
                "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
                "init_transform": [float(x) for x in t.matrix().reshape(-1)],
            }
            for cam, (k, t) in sorted(cameras.items())
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_calibration(path) -> tuple[dict, str, str]:
    with open(path) as fh:
        doc = json.load(fh)
    cameras = {}
    for cam, entry in doc["cameras"].items():
        k = entry["intrinsics"]
        cameras[cam] = (
            CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"]),
            RigidTransform.from_matrix(entry["init_transform"]),
        )
    return cameras, doc["reference_camera"], doc["robot_camera"]


def write_features_jsonl(path, session_id: str, values: np.ndarray, labels=None) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        for i, row in enumerate(values):
            rec = {"session_id": session_id, "segment_idx": i, "values": [float(x) for x in row]}
            if labels is not None:
                rec["label"] = int(labels[i])
            fh.write(_jsonl_dump(rec) + "\n")


def read_features_jsonl(path) -> tuple[str, np.ndarray, Optional[np.ndarray]]:
    session_id = None
    values, labels = [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            session_id = rec["session_id"]
            values.append(rec["values"])
            labels.append(rec.get("label"))
    if session_id is None:
        raise ValueError(f"{path}: empty feature file")
    has_labels = all(l is not None for l in labels)
    return (
        session_id,
        np.asarray(values, dtype=float),
        np.asarray(labels, dtype=int) if has_labels else None,
    )


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_training_log_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "stage", "lr", "train_loss", "val_loss"])
        for r in rows:
            writer.writerow(
                [
                    int(r["epoch"]),
                    int(r["stage"]),
                    repr(float(r["lr"])),
                    repr(float(r["train_loss"])),
                    repr(float(r["val_loss"])),
                ]
            )


def resolve(path_or_str, base: Path) -> Path:
    p = Path(path_or_str)
    return p if p.is_absolute() else base / p
