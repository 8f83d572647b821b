"""Report rendering: per-fold and aggregate CSVs in the result-table
layout (Method / Mean F-Score / Accuracy / Balanced Accuracy), confusion
matrices as JSON, and matplotlib figures saved alongside the delimited
output."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .eval import CrossValReport, MetricsReport

TABLE_COLUMNS = ["Method", "Mean F-Score", "Accuracy", "Balanced Accuracy"]
CLASS_NAMES = ["class 1", "class 2", "class 3"]

_PNG_META = {"Software": "engagekit"}


def write_fold_report_csv(path, reports: dict[str, CrossValReport]) -> None:
    """One row per (method, fold) with the full per-class breakdown."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["method", "fold", "mean_f_score", "accuracy", "balanced_accuracy"]
        for stem in ("precision", "recall", "f1"):
            header += [f"{stem}_{c}" for c in (1, 2, 3)]
        writer.writerow(header)
        for method in sorted(reports):
            for fold in reports[method].folds:
                row = [
                    method,
                    fold.fold,
                    f"{fold.mean_f_score:.4f}",
                    f"{fold.accuracy:.4f}",
                    f"{fold.balanced_accuracy:.4f}",
                ]
                for block in (fold.precision, fold.recall, fold.f1):
                    row += [f"{v:.4f}" for v in block]
                writer.writerow(row)


def write_table_csv(path, reports: dict[str, CrossValReport], order: Sequence[str] = ()) -> None:
    """Aggregate table in the result-table layout; both aggregation modes
    (equal fold weights and pooled confusion counts) are reported."""
    methods = list(order) + sorted(set(reports) - set(order))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for suffix, pick in (("", lambda r: r.fold_mean), (" (pooled)", lambda r: r.pooled)):
            for method in methods:
                if method not in reports:
                    continue
                agg = pick(reports[method])
                writer.writerow(
                    [
                        method + suffix,
                        f"{agg.mean_f_score:.2f}",
                        f"{agg.accuracy:.2f}",
                        f"{agg.balanced_accuracy:.2f}",
                    ]
                )


def write_confusions_json(path, reports: dict[str, CrossValReport]) -> None:
    doc = {
        method: {
            "folds": {f.fold: f.confusion.tolist() for f in rep.folds},
            "pooled": rep.pooled.confusion.tolist(),
            "failed": list(rep.failed),
        }
        for method, rep in sorted(reports.items())
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fig_confusion(path, report: MetricsReport, title: str) -> None:
    cm = report.confusion.astype(float)
    rows = cm.sum(axis=1, keepdims=True)
    shares = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(shares, cmap="Blues", vmin=0.0, vmax=1.0)
    for i in range(3):
        for j in range(3):
            ax.text(
                j, i, f"{int(cm[i, j])}",
                ha="center", va="center",
                color="white" if shares[i, j] > 0.5 else "black",
            )
    ax.set_xticks(range(3), CLASS_NAMES)
    ax.set_yticks(range(3), CLASS_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def fig_fold_metrics(path, reports: dict[str, CrossValReport]) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    methods = sorted(reports)
    width = 0.8 / max(len(methods), 1)
    folds = [f.fold for f in reports[methods[0]].folds]
    xs = np.arange(len(folds))
    for k, method in enumerate(methods):
        vals = [f.balanced_accuracy for f in reports[method].folds]
        ax.bar(xs + k * width, vals, width, label=method)
    ax.set_xticks(xs + 0.4 - width / 2, folds, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("balanced accuracy [%]")
    ax.set_ylim(0, 100)
    ax.axhline(100.0 / 3.0, color="grey", linestyle=":", linewidth=1)
    ax.legend(fontsize=8)
    ax.set_title("per-fold balanced accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def fig_training_curves(path, logs: dict[str, list[dict]], title: str = "training loss") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    for name, rows in sorted(logs.items()):
        if not rows:
            continue
        ax.plot([r["val_loss"] for r in rows], label=name, linewidth=1)
        boundaries = [i for i in range(1, len(rows)) if rows[i]["stage"] != rows[i - 1]["stage"]]
        for b in boundaries:
            ax.axvline(b, color="grey", linewidth=0.5, linestyle=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation loss")
    ax.set_yscale("log")
    ax.set_title(title)
    if len(logs) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def write_ablation_csv(path, rows: Sequence[dict]) -> None:
    """Grid rows: variant name, the varied settings and the three metrics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["group", "variant", "n_fc", "n_lstm", "batch", "seq_len"] + TABLE_COLUMNS[1:]
        )
        for r in rows:
            writer.writerow(
                [
                    r["group"],
                    r["variant"],
                    r["n_fc"],
                    r["n_lstm"],
                    r["batch"],
                    r["seq_len"],
                    f"{r['mean_f_score']:.2f}",
                    f"{r['accuracy']:.2f}",
                    f"{r['balanced_accuracy']:.2f}",
                ]
            )


def fig_ablation(path, rows: Sequence[dict]) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 3.6))
    names = [r["variant"] for r in rows]
    vals = [r["balanced_accuracy"] for r in rows]
    colors = ["tab:blue" if r["group"] == "architecture" else "tab:orange" for r in rows]
    ax.bar(range(len(rows)), vals, color=colors)
    ax.set_xticks(range(len(rows)), names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("balanced accuracy [%]")
    ax.set_title("architecture and hyper-parameter variants")
    ax.set_ylim(0, 100)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
