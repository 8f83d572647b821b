"""1-second majority voting, imbalance-aware metrics, leave-one-out
cross-validation orchestration and the baseline classifiers.

Balanced accuracy is implemented as macro-averaged recall (the standard
definition, and the only one consistent with an always-majority predictor
scoring 33.33 on three classes); macro-averaged precision is available
behind the ``as_printed`` flag for comparison.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dataset import (
    SEGMENTS_PER_SECOND,
    SequenceSampler,
    SessionData,
    apply_feature_stats,
    class_weights,
    count_classes,
    fit_feature_stats,
    loocv_folds,
)
from .forest import RandomForest
from .model import NetConfig, TrainConfig, TrainingDiverged, predict_segments, train

N_CLASSES = 3


def majority_vote_1s(
    preds: np.ndarray, probs: Optional[np.ndarray] = None, window: int = SEGMENTS_PER_SECOND
) -> np.ndarray:
    """Most frequent class per consecutive window of 6 segment predictions.

    Count ties break by the highest summed softmax probability among the
    tied classes, then by the lower class id. A partial trailing window
    is voted over the segments it has.
    """
    preds = np.asarray(preds, dtype=int)
    out = []
    for start in range(0, len(preds), window):
        chunk = preds[start : start + window]
        counts = np.bincount(chunk - 1, minlength=N_CLASSES)
        top = counts.max()
        tied = np.flatnonzero(counts == top)
        if len(tied) > 1 and probs is not None:
            sums = probs[start : start + window].sum(axis=0)[tied]
            tied = tied[sums == sums.max()]
        out.append(int(tied[0]) + 1)
    return np.asarray(out, dtype=int)


def confusion_matrix(true: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """3x3 counts; rows are true classes, columns predicted."""
    true = np.asarray(true, dtype=int)
    pred = np.asarray(pred, dtype=int)
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(cm, (true - 1, pred - 1), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return 100.0 * float(np.trace(cm)) / float(total)


def per_class_prf(cm: np.ndarray):
    """Per-class precision, recall and F1 in percent; 0/0 terms are 0."""
    cm = np.asarray(cm, dtype=float)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return 100.0 * precision, 100.0 * recall, 100.0 * f1


def balanced_accuracy(cm: np.ndarray, as_printed: bool = False) -> float:
    """Macro-averaged recall in percent (``as_printed`` switches to
    macro-averaged precision); classes absent from the data contribute 0."""
    precision, recall, _ = per_class_prf(cm)
    return float(np.mean(precision if as_printed else recall))


def mean_f_score(cm: np.ndarray) -> float:
    """Unweighted mean of the per-class F1 scores, in percent."""
    _, _, f1 = per_class_prf(cm)
    return float(np.mean(f1))


@dataclass
class MetricsReport:
    fold: str
    mean_f_score: float
    accuracy: float
    balanced_accuracy: float
    precision: tuple
    recall: tuple
    f1: tuple
    confusion: np.ndarray

    @classmethod
    def from_confusion(cls, cm: np.ndarray, fold: str) -> "MetricsReport":
        p, r, f1 = per_class_prf(cm)
        return cls(
            fold,
            mean_f_score(cm),
            accuracy(cm),
            balanced_accuracy(cm),
            tuple(p),
            tuple(r),
            tuple(f1),
            np.asarray(cm, dtype=int),
        )


@dataclass
class CrossValReport:
    method: str
    folds: list  # MetricsReport per completed fold
    fold_mean: MetricsReport  # equal-weight average across folds
    pooled: MetricsReport  # from the summed confusion matrix
    failed: list = field(default_factory=list)  # (session, error)
    logs: dict = field(default_factory=dict)  # session -> training log


def _mean_report(folds: Sequence[MetricsReport]) -> MetricsReport:
    cms = np.stack([f.confusion for f in folds])
    return MetricsReport(
        "fold_mean",
        float(np.mean([f.mean_f_score for f in folds])),
        float(np.mean([f.accuracy for f in folds])),
        float(np.mean([f.balanced_accuracy for f in folds])),
        tuple(np.mean([f.precision for f in folds], axis=0)),
        tuple(np.mean([f.recall for f in folds], axis=0)),
        tuple(np.mean([f.f1 for f in folds], axis=0)),
        cms.sum(axis=0),
    )


@dataclass
class MajorityPredictor:
    """Always predicts the most frequent training class."""

    class_id: int

    def predict(self, n: int):
        preds = np.full(n, self.class_id, dtype=int)
        probs = np.zeros((n, N_CLASSES))
        probs[:, self.class_id - 1] = 1.0
        return preds, probs


def baseline_majority(train_labels) -> MajorityPredictor:
    counts = count_classes(train_labels)
    return MajorityPredictor(int(np.argmax(counts)) + 1)  # argmax ties to lower id


@dataclass
class EvalSettings:
    """Everything one fold needs besides the data."""

    method: str = "net"  # net | majority | rf
    net_config: Optional[NetConfig] = None
    train_config: Optional[TrainConfig] = None
    auto_class_weights: bool = True
    noise_sigma: object = 0.05  # scalar or per-feature (58,) vector
    offset_range: int = 12
    val_fraction: float = 0.1
    rf_trees: int = 10
    rf_depth: int = 10
    seed: int = 0


def seconds_truth(labels: np.ndarray, window: int = SEGMENTS_PER_SECOND) -> np.ndarray:
    """Ground-truth class per 1-second window (majority of segment labels)."""
    return majority_vote_1s(labels, None, window)


def run_fold(
    fold_idx: int,
    test_session: SessionData,
    train_sessions: Sequence[SessionData],
    settings: EvalSettings,
):
    """Train on the training sessions, score 1-second windows of the
    held-out session. Returns (MetricsReport, training log)."""
    rng = np.random.default_rng([settings.seed, fold_idx])
    stats = fit_feature_stats(np.concatenate([s.features for s in train_sessions]))
    norm_train = [
        SessionData(s.session_id, apply_feature_stats(stats, s.features), s.labels)
        for s in train_sessions
    ]
    test_x = apply_feature_stats(stats, test_session.features)
    log: list = []

    if settings.method == "net":
        ncfg = settings.net_config or NetConfig()
        tcfg = settings.train_config or TrainConfig()
        if settings.auto_class_weights:
            counts = count_classes(np.concatenate([s.labels for s in train_sessions]))
            tcfg = replace(tcfg, class_weights=tuple(class_weights(counts)))
        sampler = SequenceSampler(
            norm_train,
            ncfg.seq_len,
            rng,
            val_fraction=settings.val_fraction,
            noise_sigma=settings.noise_sigma,
            offset_range=settings.offset_range,
        )
        result = train(sampler, ncfg, tcfg, rng)
        preds, probs = predict_segments(result.params, test_x, ncfg.seq_len)
        log = result.log
    elif settings.method == "rf":
        all_x = np.concatenate([s.features for s in norm_train])
        all_y = np.concatenate([s.labels for s in norm_train])
        forest = RandomForest(
            n_trees=settings.rf_trees,
            max_depth=settings.rf_depth,
            seed=int(rng.integers(2**31)),
        ).fit(all_x, all_y)
        preds = forest.predict(test_x)
        probs = forest.predict_proba(test_x)
    elif settings.method == "majority":
        all_y = np.concatenate([s.labels for s in train_sessions])
        preds, probs = baseline_majority(all_y).predict(len(test_x))
    else:
        raise ValueError(f"unknown method {settings.method!r}")

    pred_seconds = majority_vote_1s(preds, probs)
    true_seconds = seconds_truth(test_session.labels)
    cm = confusion_matrix(true_seconds, pred_seconds)
    return MetricsReport.from_confusion(cm, test_session.session_id), log


def _fold_worker(args):
    fold_idx, test_session, train_sessions, settings = args
    try:
        report, log = run_fold(fold_idx, test_session, train_sessions, settings)
        return fold_idx, report, log, None
    except TrainingDiverged as exc:
        return fold_idx, None, [], str(exc)


def cross_validate(
    sessions: Sequence[SessionData], settings: EvalSettings, jobs: int = 1
) -> CrossValReport:
    """Leave-one-out cross-validation over the sessions.

    Each fold is seeded from (seed, fold index), so results do not depend
    on ``jobs``. Diverged folds are excluded from the averages and listed
    in ``failed``.
    """
    by_id = {s.session_id: s for s in sessions}
    folds = loocv_folds([s.session_id for s in sessions])
    tasks = [
        (i, by_id[f.test_session], [by_id[t] for t in f.train_sessions], settings)
        for i, f in enumerate(folds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_fold_worker, tasks))
    else:
        outcomes = [_fold_worker(t) for t in tasks]
    outcomes.sort(key=lambda o: o[0])

    reports, failed, logs = [], [], {}
    for fold_idx, report, log, error in outcomes:
        session_id = folds[fold_idx].test_session
        if error is not None:
            failed.append((session_id, error))
            continue
        reports.append(report)
        if log:
            logs[session_id] = log
    if not reports:
        raise RuntimeError("all folds failed")
    pooled_cm = np.sum([r.confusion for r in reports], axis=0)
    return CrossValReport(
        settings.method,
        reports,
        _mean_report(reports),
        MetricsReport.from_confusion(pooled_cm, "pooled"),
        failed,
        logs,
    )
