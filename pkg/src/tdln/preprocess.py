"""Sliding-window extraction, normal-state normalization and one-hot labels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeError

NORM_EPSILON = 1e-8


@dataclass(frozen=True)
class RawSeries:
    """``values`` is (N time steps, d channels); ``labels`` holds N class ids."""

    values: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"values must be a non-empty (N, d) matrix, got shape {values.shape}")
        if labels.shape != (values.shape[0],):
            raise ValueError(f"expected {values.shape[0]} labels, got {labels.shape[0]}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class WindowSpec:
    width: int = 30
    stride: int = 20

    def __post_init__(self):
        if self.width < 1 or self.stride < 1:
            raise ValueError(f"window width and stride must be >= 1, got w={self.width}, s={self.stride}")


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    epsilon: float = NORM_EPSILON


@dataclass
class WindowedDataset:
    """Windows stacked as a (K, w, d) array with per-window metadata.

    ``valid_rows`` is the number of genuine source rows in each window; it is
    below ``w`` only for padded short-run windows, which are also flagged
    ``provisional``. ``dropped_runs`` counts label runs shorter than ``w``
    that offline extraction discarded.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    starts: np.ndarray
    valid_rows: np.ndarray
    dropped_runs: int = 0
    provisional: np.ndarray = field(init=False)

    def __post_init__(self):
        self.provisional = self.valid_rows < self.features.shape[1] if len(self.features) else np.zeros(0, bool)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")

    @property
    def labels_onehot(self) -> np.ndarray:
        out = np.zeros((len(self.labels), self.class_count))
        out[np.arange(len(self.labels)), self.labels] = 1.0
        return out

    @property
    def window_count(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "WindowedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowedDataset(
            self.features[idx], self.labels[idx], self.class_count, self.starts[idx], self.valid_rows[idx]
        )


def window_count(n: int, width: int, stride: int) -> int:
    """Number of full windows in a run of ``n`` rows: floor((n - w) / s) + 1, or 0."""
    if n < width:
        return 0
    return (n - width) // stride + 1


def label_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal constant-label runs as (start, stop) half-open intervals."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(labels)) + 1
    bounds = np.concatenate([[0], cuts, [labels.size]])
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def _pad_window(rows: np.ndarray, width: int) -> np.ndarray:
    # short buffers are padded by repeating the last observed row
    pad = np.repeat(rows[-1:], width - rows.shape[0], axis=0)
    return np.concatenate([rows, pad], axis=0)


def windows_over(values: np.ndarray, spec: WindowSpec, allow_short: bool = True):
    """Window an unlabeled (N, d) block. Returns (windows, starts, valid_rows)."""
    n = values.shape[0]
    w, s = spec.width, spec.stride
    if n >= w:
        starts = np.arange(window_count(n, w, s), dtype=np.int64) * s
        view = np.lib.stride_tricks.sliding_window_view(values, w, axis=0)  # (N-w+1, d, w)
        windows = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
        return windows, starts, np.full(len(starts), w, dtype=np.int64)
    if not allow_short or n == 0:
        return np.zeros((0, w, values.shape[1])), np.zeros(0, np.int64), np.zeros(0, np.int64)
    return _pad_window(values, w)[None], np.zeros(1, np.int64), np.array([n], dtype=np.int64)


def extract_windows(series: RawSeries, spec: WindowSpec, online: bool = False) -> WindowedDataset:
    """Cut label-homogeneous windows from each constant-label run.

    Offline (default), runs shorter than ``w`` are dropped and counted in
    ``dropped_runs``. With ``online=True`` such a run yields one padded,
    provisional window instead.
    """
    if len(series) == 0:
        raise ValueError("empty series")
    feats, labels, starts, valid = [], [], [], []
    dropped = 0
    for a, b in label_runs(series.labels):
        win, st, vr = windows_over(series.values[a:b], spec, allow_short=online)
        if len(st) == 0:
            dropped += 1
            continue
        feats.append(win)
        labels.append(np.full(len(st), series.labels[a], dtype=np.int64))
        starts.append(st + a)
        valid.append(vr)
    d = series.channels
    if not feats:
        return WindowedDataset(
            np.zeros((0, spec.width, d)), np.zeros(0, np.int64), series.class_count,
            np.zeros(0, np.int64), np.zeros(0, np.int64), dropped,
        )
    return WindowedDataset(
        np.concatenate(feats), np.concatenate(labels), series.class_count,
        np.concatenate(starts), np.concatenate(valid), dropped,
    )


def fit_norm_stats(series: RawSeries, epsilon: float = NORM_EPSILON) -> NormStats:
    """Per-channel mean and population std over normal-state (label 0) rows only."""
    normal = series.values[series.labels == 0]
    if normal.shape[0] < 2:
        raise ValueError(f"need at least 2 normal (label 0) rows to fit normalization, found {normal.shape[0]}")
    return NormStats(normal.mean(axis=0), normal.std(axis=0), epsilon)


def apply_norm(window: np.ndarray, stats: NormStats) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] != stats.mean.shape[0]:
        raise ShapeError(f"data has {window.shape[-1]} channels, normalization expects {stats.mean.shape[0]}")
    return (window - stats.mean) / (stats.std + stats.epsilon)


def invert_norm(window: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(window) * (stats.std + stats.epsilon) + stats.mean


def one_hot(label: int, n: int) -> np.ndarray:
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} classes")
    out = np.zeros(n)
    out[label] = 1.0
    return out


def split_train_val(ds: WindowedDataset, val_fraction: float, rng: np.random.Generator):
    """Stratified shuffle split; each class keeps round(fraction * count) windows for validation."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie strictly between 0 and 1")
    train_idx, val_idx = [], []
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} window; need at least 2 to split")
        idx = idx[rng.permutation(idx.size)]
        n_val = min(max(int(round(val_fraction * idx.size)), 1), idx.size - 1)
        val_idx.append(idx[:n_val])
        train_idx.append(idx[n_val:])
    return ds.subset(np.sort(np.concatenate(train_idx))), ds.subset(np.sort(np.concatenate(val_idx)))
