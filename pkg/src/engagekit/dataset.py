"""Label alignment, sequence assembly, augmentation, class weights and
leave-one-out folds."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .features import FRAME_FEATURE_DIM, SEGMENT_FEATURE_DIM

SEGMENTS_PER_SECOND = 6  # 30 fps / 5-frame segments

CLASS_IDS = (1, 2, 3)
# reported weight vector for the recorded data; recomputing from the raw
# counts gives (9.17, 1.00, 3.46)
PAPER_CLASS_WEIGHTS = (9.16, 1.00, 3.42)
PAPER_CLASS_COUNTS = (281, 2578, 745)


@dataclass
class FoldSplit:
    test_session: str
    train_sessions: list[str]


@dataclass
class SessionData:
    """Per-session labeled segment features."""

    session_id: str
    features: np.ndarray  # (S, 116)
    labels: np.ndarray  # (S,) class ids in {1, 2, 3}

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[1] != SEGMENT_FEATURE_DIM:
            raise ValueError("features must be (S, 116)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must match features")

    @property
    def n_segments(self) -> int:
        return self.features.shape[0]


def align_labels(
    seconds: Sequence[int],
    features: np.ndarray,
    segments_per_second: int = SEGMENTS_PER_SECOND,
) -> tuple[np.ndarray, np.ndarray]:
    """Give each segment the class of its enclosing annotated second.

    Segments past the annotated span are dropped with a warning.
    """
    seconds = np.asarray(seconds, dtype=int)
    features = np.asarray(features, dtype=float)
    n_annotated = seconds.shape[0]
    sec_idx = np.arange(features.shape[0]) // segments_per_second
    keep = sec_idx < n_annotated
    if not keep.all():
        warnings.warn(
            f"annotation shorter than video: dropping {int((~keep).sum())} trailing segments",
            stacklevel=2,
        )
    return features[keep], seconds[sec_idx[keep]]


def make_sequences(
    features: np.ndarray, labels: np.ndarray, seq_len: int, offset: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping windows of ``seq_len`` segments starting at ``offset``.

    Returns (n, L, 116) features and (n, L) labels; the remainder is
    dropped. A session shorter than ``seq_len + offset`` yields zero
    sequences (with a warning).
    """
    if offset < 0 or offset >= seq_len:
        raise ValueError("offset must satisfy 0 <= offset < seq_len")
    usable = features.shape[0] - offset
    n = max(0, usable // seq_len)
    if n == 0:
        warnings.warn("session too short, zero sequences assembled", stacklevel=2)
        return (
            np.empty((0, seq_len, features.shape[1])),
            np.empty((0, seq_len), dtype=int),
        )
    end = offset + n * seq_len
    x = features[offset:end].reshape(n, seq_len, features.shape[1])
    y = np.asarray(labels[offset:end], dtype=int).reshape(n, seq_len)
    return x, y


def augment(
    seq_features: np.ndarray,
    sigma,
    rng: np.random.Generator,
    feature_std: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gaussian noise on the 58 mean entries of each segment vector.

    ``sigma`` is a scalar or per-feature (58,) scale; the noise std is
    ``sigma * feature_std`` (feature_std defaults to 1, i.e. z-scored
    inputs). The std half of the vector is untouched.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    out = np.array(seq_features, dtype=float, copy=True)
    if not np.any(sigma > 0):
        return out
    scale = np.ones(FRAME_FEATURE_DIM) if feature_std is None else np.asarray(feature_std, float)
    if scale.shape == (SEGMENT_FEATURE_DIM,):
        scale = scale[:FRAME_FEATURE_DIM]
    noise = rng.normal(0.0, 1.0, out[..., :FRAME_FEATURE_DIM].shape) * (sigma * scale)
    out[..., :FRAME_FEATURE_DIM] += noise
    return out


def class_weights(counts) -> np.ndarray:
    """Loss weights from per-class counts: majority count over class count."""
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (3,):
        raise ValueError("expected counts for 3 classes")
    if np.any(counts <= 0):
        raise ValueError("empty class")
    return counts.max() / counts


def count_classes(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    return np.bincount(labels - 1, minlength=3)[:3]


def loocv_folds(session_ids: Sequence[str]) -> list[FoldSplit]:
    """One fold per session; that session is the whole test set."""
    ids = list(session_ids)
    if len(ids) < 2:
        raise ValueError("leave-one-out needs at least 2 sessions")
    return [FoldSplit(s, [t for t in ids if t != s]) for s in ids]


@dataclass
class FeatureStats:
    mean: np.ndarray  # (116,)
    std: np.ndarray  # (116,)


def fit_feature_stats(train_features: np.ndarray, min_std: float = 1e-8) -> FeatureStats:
    """Per-feature z-score statistics; near-constant features pass through."""
    x = np.asarray(train_features, dtype=float)
    if x.size == 0:
        raise ValueError("empty training set")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    frozen = std < min_std
    mean[frozen] = 0.0
    std[frozen] = 1.0
    return FeatureStats(mean, std)


def apply_feature_stats(stats: FeatureStats, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=float) - stats.mean) / stats.std


class FixedSampler:
    """Static sequence source (no augmentation); validation defaults to the
    training set itself."""

    def __init__(self, x, y, x_val=None, y_val=None):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=int)
        self.x_val = self.x if x_val is None else np.asarray(x_val, dtype=float)
        self.y_val = self.y if y_val is None else np.asarray(y_val, dtype=int)

    def train_epoch(self, rng):
        return self.x, self.y

    def val_set(self):
        return self.x_val, self.y_val


class SequenceSampler:
    """Per-epoch training sequences with a fresh random start offset per
    session plus Gaussian noise on segment means; a fixed session-stratified
    subset of offset-0 windows is held out for early stopping and its
    segments never enter a training window.

    ``noise_sigma`` may be a scalar or a per-feature (58,) vector.
    """

    def __init__(
        self,
        sessions: Sequence[SessionData],
        seq_len: int,
        rng: np.random.Generator,
        val_fraction: float = 0.1,
        noise_sigma=0.05,
        offset_range: int = 12,
    ):
        if offset_range >= seq_len:
            offset_range = seq_len - 1
        self.seq_len = seq_len
        self.noise_sigma = noise_sigma
        self.offset_range = offset_range
        self.sessions = [s for s in sessions if s.n_segments >= seq_len]
        if not self.sessions:
            raise ValueError("no session long enough for the sequence length")
        if len(self.sessions) < len(sessions):
            warnings.warn("dropped sessions shorter than one sequence", stacklevel=2)

        self._val_ranges: list[list[tuple[int, int]]] = []
        xs, ys = [], []
        for s in self.sessions:
            n_windows = s.n_segments // seq_len
            n_val = 0
            if val_fraction > 0 and n_windows > 1:
                n_val = min(n_windows - 1, math.ceil(val_fraction * n_windows))
            picks = sorted(rng.choice(n_windows, size=n_val, replace=False)) if n_val else []
            ranges = []
            for k in picks:
                a, b = k * seq_len, (k + 1) * seq_len
                ranges.append((a, b))
                xs.append(s.features[a:b])
                ys.append(s.labels[a:b])
            self._val_ranges.append(ranges)
        if xs:
            self._x_val = np.stack(xs)
            self._y_val = np.stack(ys)
        else:
            dim = self.sessions[0].features.shape[1]
            self._x_val = np.empty((0, seq_len, dim))
            self._y_val = np.empty((0, seq_len), dtype=int)

    def val_set(self):
        return self._x_val, self._y_val

    def _windows(self, session_idx: int, offset: int):
        s = self.sessions[session_idx]
        ranges = self._val_ranges[session_idx]
        out = []
        start = offset
        while start + self.seq_len <= s.n_segments:
            end = start + self.seq_len
            if not any(a < end and start < b for a, b in ranges):
                out.append((start, end))
            start = end
        return out

    def train_epoch(self, rng: np.random.Generator):
        xs, ys = [], []
        for i, s in enumerate(self.sessions):
            offset = int(rng.integers(0, self.offset_range + 1))
            windows = self._windows(i, offset)
            if not windows:
                windows = self._windows(i, 0)
            for a, b in windows:
                xs.append(augment(s.features[a:b], self.noise_sigma, rng))
                ys.append(s.labels[a:b])
        if not xs:
            raise ValueError("no training sequences available")
        return np.stack(xs), np.stack(ys)
