"""Command-line entry point.

Subcommands cover the whole pipeline: ``synth`` generates a labelled
synthetic dataset, ``fuse`` registers and fuses the camera streams,
``features`` turns fused tracks into segment feature files, ``train``
fits the classifier on all sessions, ``eval`` runs leave-one-out
cross-validation against the baselines, and ``ablate`` sweeps the
architecture and hyper-parameter variants. Every run writes a resolved
config snapshot and is byte-reproducible given the same config and seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import shutil
import sys
from pathlib import Path

import numpy as np

from . import dataio, report
from .config import (
    ConfigError,
    PipelineConfig,
    apply_overrides,
    load_config,
    save_config_snapshot,
)
from .dataset import (
    PAPER_CLASS_WEIGHTS,
    SequenceSampler,
    class_weights,
    count_classes,
)
from .eval import EvalSettings, cross_validate
from .fusion import PoseTrack, RobotTrack
from .model import NetConfig, save_params, train
from .pipeline import (
    FusionSettings,
    labeled_session,
    load_feature_sessions,
    process_session,
)
from .synthgen import SynthSettings, generate_dataset

TABLE_II_VARIANTS = [(3, 1), (2, 1), (3, 2), (2, 2)]
TABLE_III_VARIANTS = [(8, 30), (16, 30), (32, 30), (16, 10), (16, 60)]


def net_label(n_fc: int, n_lstm: int) -> str:
    lstm = "LSTM" if n_lstm == 1 else f"{n_lstm}LSTM"
    return f"{n_fc}FC+{lstm}"


def build_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "jobs", None) is not None:
        overrides.append(f"jobs={args.jobs}")
    for flag, key in (
        ("sessions", "synth.sessions"),
        ("seconds", "synth.seconds"),
        ("cameras", "synth.cameras"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return apply_overrides(config, overrides)


def prepare_out(args, config: PipelineConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config_snapshot(out / "config.json", config)
    return out


def find_manifest(data: str) -> tuple[Path, dict]:
    path = Path(data)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return path.parent, dataio.read_manifest(path)


def synth_settings(config: PipelineConfig) -> SynthSettings:
    s = config.synth
    return SynthSettings(
        sessions=s.sessions,
        seconds=s.seconds,
        cameras=s.cameras,
        fps=s.fps,
        noise_sigma=s.noise_sigma,
        dropout_p=s.dropout_p,
        outlier_p=s.outlier_p,
        outlier_scale=s.outlier_scale,
        room_yaw=s.room_yaw,
    )


def resolved_class_weights(config: PipelineConfig, labels) -> tuple:
    setting = config.data.class_weights
    if setting == "auto":
        return tuple(float(x) for x in class_weights(count_classes(labels)))
    if setting == "paper":
        return PAPER_CLASS_WEIGHTS
    return tuple(float(x) for x in setting)


def cmd_synth(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    manifest = generate_dataset(out, synth_settings(config), config.seed)
    print(f"wrote {len(manifest['sessions'])} sessions to {out}")
    return 0


def cmd_fuse(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    base, manifest = find_manifest(args.data)
    if not manifest.get("sessions"):
        raise FileNotFoundError(f"{base}: manifest lists no sessions")
    calibration, reference, robot_camera = dataio.read_calibration(
        dataio.resolve(manifest["calibration"], base)
    )
    entries = []
    for entry in manifest["sessions"]:
        processed = process_session(
            base, entry, manifest, calibration, reference, robot_camera, config.fusion
        )
        sid = processed.session_id
        frames = [processed.pose.frame(i) for i in range(processed.pose.n_frames)]
        dataio.write_keypoint_stream(out / f"{sid}.fused.jsonl", frames)
        dataio.write_robot_detections(
            out / f"{sid}.robot.jsonl",
            [
                {"frame_idx": i, "x": p[0], "y": p[1], "z": p[2]}
                for i, p in enumerate(processed.robot.positions)
            ],
        )
        shutil.copyfile(dataio.resolve(entry["annotations"], base), out / f"{sid}.annotations.csv")
        entries.append(
            {
                "id": sid,
                "fused": f"{sid}.fused.jsonl",
                "robot": f"{sid}.robot.jsonl",
                "annotations": f"{sid}.annotations.csv",
            }
        )
        print(f"fused {sid}: {processed.pose.n_frames} frames")
    dataio.write_manifest(out / "manifest.json", {"fps": manifest["fps"], "sessions": entries})
    return 0


def cmd_features(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    base, manifest = find_manifest(args.data)
    if not manifest.get("sessions"):
        raise FileNotFoundError(f"{base}: manifest lists no sessions")
    fps = float(manifest["fps"])
    for entry in manifest["sessions"]:
        frames = dataio.read_keypoint_stream(dataio.resolve(entry["fused"], base))
        pose = PoseTrack.from_frames(frames, fps)
        rows = dataio.read_robot_detections(dataio.resolve(entry["robot"], base))
        positions = np.zeros((pose.n_frames, 3))
        for row in rows:
            positions[int(row["frame_idx"])] = (row["x"], row["y"], row["z"])
        robot = RobotTrack(positions, np.ones(pose.n_frames, bool), fps)
        session = labeled_session_from_tracks(entry["id"], pose, robot, base, entry, config)
        dataio.write_features_jsonl(
            out / f"{entry['id']}.features.jsonl", entry["id"], session.features, session.labels
        )
        print(f"features {entry['id']}: {session.n_segments} segments")
    return 0


def labeled_session_from_tracks(session_id, pose, robot, base, entry, config):
    from .dataset import SessionData, align_labels
    from .features import extract_segment_features

    feats = extract_segment_features(pose, robot, config.features.absolute_angles)
    _, annotations = dataio.read_annotations_csv(dataio.resolve(entry["annotations"], base))
    feats, labels = align_labels(annotations, feats)
    return SessionData(session_id, feats, labels)


def cmd_train(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    sessions = load_feature_sessions(args.features)
    from .dataset import apply_feature_stats, fit_feature_stats
    from .dataset import SessionData

    stats = fit_feature_stats(np.concatenate([s.features for s in sessions]))
    normed = [
        SessionData(s.session_id, apply_feature_stats(stats, s.features), s.labels)
        for s in sessions
    ]
    all_labels = np.concatenate([s.labels for s in sessions])
    tcfg = dataclasses.replace(
        config.train_config(), class_weights=resolved_class_weights(config, all_labels)
    )
    ncfg = config.net_config()
    rng = np.random.default_rng(config.seed)
    sampler = SequenceSampler(
        normed,
        ncfg.seq_len,
        rng,
        val_fraction=config.data.val_fraction,
        noise_sigma=config.data.noise_scale(),
        offset_range=config.data.offset_range,
    )
    result = train(sampler, ncfg, tcfg, rng)
    save_params(out / "weights.engg", result.params)
    dataio.write_training_log_csv(out / "training_log.csv", result.log)
    report.fig_training_curves(out / "training_curves.png", {"train": result.log})
    print(f"trained on {len(sessions)} sessions; best validation loss {result.best_val_loss:.4f}")
    return 0


def _eval_settings(config: PipelineConfig, method: str) -> EvalSettings:
    return EvalSettings(
        method=method,
        net_config=config.net_config(),
        train_config=config.train_config(),
        auto_class_weights=config.data.class_weights == "auto",
        noise_sigma=config.data.noise_scale(),
        offset_range=config.data.offset_range,
        val_fraction=config.data.val_fraction,
        rf_trees=config.forest.n_trees,
        rf_depth=config.forest.max_depth,
        seed=config.seed,
    )


def cmd_eval(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    sessions = load_feature_sessions(args.features)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    label_of = {
        "net": net_label(config.model.n_fc, config.model.n_lstm),
        "rf": "RF",
        "majority": "Majority class",
    }
    reports = {}
    for method in methods:
        if method not in label_of:
            raise ConfigError(f"unknown method {method!r} (choose from net, rf, majority)")
        rep = cross_validate(sessions, _eval_settings(config, method), jobs=config.jobs)
        reports[label_of[method]] = rep
        print(
            f"{label_of[method]}: balanced accuracy {rep.fold_mean.balanced_accuracy:.2f} "
            f"(fold mean), {rep.pooled.balanced_accuracy:.2f} (pooled)"
        )
        for session_id, error in rep.failed:
            print(f"  fold {session_id} failed: {error}", file=sys.stderr)
    report.write_fold_report_csv(out / "report.csv", reports)
    report.write_table_csv(
        out / "table1.csv",
        reports,
        order=["Majority class", label_of["net"], "RF"],
    )
    report.write_confusions_json(out / "confusions.json", reports)
    for label, rep in reports.items():
        safe = label.replace(" ", "_").replace("+", "_")
        report.fig_confusion(out / f"confusion_{safe}.png", rep.pooled, f"{label} (pooled)")
    report.fig_fold_metrics(out / "fold_metrics.png", reports)
    net_rep = reports.get(label_of["net"])
    if net_rep is not None and net_rep.logs:
        report.fig_training_curves(out / "training_curves.png", net_rep.logs)
    return 0


def cmd_ablate(args) -> int:
    config = build_config(args)
    out = prepare_out(args, config)
    sessions = load_feature_sessions(args.features)
    rows = []
    logs = {}

    def run_variant(group, n_fc, n_lstm, batch, seq_len):
        variant_config = apply_overrides(
            config,
            [
                f"model.n_fc={n_fc}",
                f"model.n_lstm={n_lstm}",
                f"model.batch={batch}",
                f"model.seq_len={seq_len}",
            ],
        )
        name = net_label(n_fc, n_lstm) if group == "architecture" else f"N={batch},L={seq_len}"
        rep = cross_validate(sessions, _eval_settings(variant_config, "net"), jobs=config.jobs)
        agg = rep.fold_mean
        rows.append(
            {
                "group": group,
                "variant": name,
                "n_fc": n_fc,
                "n_lstm": n_lstm,
                "batch": batch,
                "seq_len": seq_len,
                "mean_f_score": agg.mean_f_score,
                "accuracy": agg.accuracy,
                "balanced_accuracy": agg.balanced_accuracy,
            }
        )
        logs[f"{group}:{name}"] = next(iter(rep.logs.values()), [])
        print(f"{group} {name}: balanced accuracy {agg.balanced_accuracy:.2f}")

    for n_fc, n_lstm in TABLE_II_VARIANTS:
        run_variant("architecture", n_fc, n_lstm, config.model.batch, config.model.seq_len)
    for batch, seq_len in TABLE_III_VARIANTS:
        run_variant("hyperparameters", config.model.n_fc, config.model.n_lstm, batch, seq_len)

    report.write_ablation_csv(out / "ablation.csv", rows)
    report.fig_ablation(out / "ablation.png", rows)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engagekit",
        description="Multi-camera pose fusion and engagement classification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_jobs=False):
        p.add_argument("--config", help="pipeline config JSON (defaults apply otherwise)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override any config key, e.g. model.hidden=64 (repeatable)",
        )
        if needs_jobs:
            p.add_argument("--jobs", type=int, help="parallel folds (determinism preserved)")

    p = sub.add_parser("synth", help="generate a synthetic multi-camera dataset")
    common(p)
    p.add_argument("--sessions", type=int, help="number of sessions")
    p.add_argument("--seconds", type=float, help="seconds per session")
    p.add_argument("--cameras", type=int, help="number of cameras")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fuse", help="register cameras, fuse views, clean the robot track")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory or manifest path")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("features", help="extract per-segment feature vectors")
    common(p)
    p.add_argument("--data", required=True, help="fused directory or manifest path")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the classifier on all sessions")
    common(p)
    p.add_argument("--features", required=True, help="directory of *.features.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="leave-one-out evaluation with baselines")
    common(p, needs_jobs=True)
    p.add_argument("--features", required=True, help="directory of *.features.jsonl")
    p.add_argument(
        "--methods", default="net,rf,majority", help="comma list of net, rf, majority"
    )
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="architecture and hyper-parameter grid")
    common(p, needs_jobs=True)
    p.add_argument("--features", required=True, help="directory of *.features.jsonl")
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
