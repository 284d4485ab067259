"""Composite tdln model: offline learning and online detection.

Modes:

- ``full``: windows -> deep network -> 180-d (last hidden layer) features -> forest.
- ``dl_only``: the network's own softmax head classifies; no forest is fitted.
- ``ml_only``: the forest is fitted on flattened normalized windows (w*d features).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .extratrees import ForestModel, fit_forest
from .network import DeepNetParams, extract_features, predict_proba
from .numerics import ShapeError, make_rng
from .preprocess import (NormStats, RawSeries, WindowSpec, apply_norm, extract_windows, fit_norm_stats,
                         split_train_val, windows_over)
from .training import NetConfig, TrainConfig, TrainingCurve, train

MODES = ("full", "dl_only", "ml_only")


@dataclass
class ForestConfig:
    n_estimators: int = 112
    max_depth: int | None = 31
    subset_size: int | None = None
    bootstrap: bool = False


@dataclass
class PipelineConfig:
    window: WindowSpec = field(default_factory=WindowSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    net: NetConfig = field(default_factory=NetConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    mode: str = "full"
    refine_rounds: int = 1
    val_fraction: float = 0.2
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.refine_rounds < 1:
            raise ValueError("refine_rounds must be >= 1")


@dataclass
class TdlnModel:
    norm: NormStats
    window: WindowSpec
    mode: str
    class_count: int
    channels: int
    deep: DeepNetParams | None = None
    forest: ForestModel | None = None
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    training_seconds: list = field(default_factory=list, repr=False)  # wall clock, never serialized

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode != "ml_only" and self.deep is None:
            raise ValueError(f"mode {self.mode} needs deep parameters")
        if self.mode != "dl_only" and self.forest is None:
            raise ValueError(f"mode {self.mode} needs a forest")
        if self.forest is not None:
            expect = self.deep.feature_size if self.mode == "full" else self.window.width * self.channels
            if self.forest.n_features != expect:
                raise ShapeError(f"forest expects {self.forest.n_features} features, mode {self.mode} "
                                 f"produces {expect}")

    def with_mode(self, mode: str) -> "TdlnModel":
        """Same fitted parts viewed under another mode (e.g. the dl_only view of a full model)."""
        forest = None if mode == "dl_only" else self.forest
        return dataclasses.replace(self, mode=mode, forest=forest)


@dataclass
class Detection:
    index: int
    start: int
    predicted: int
    probabilities: np.ndarray
    provisional: bool = False
    truth: int | None = None


def predict_windows(model: TdlnModel, windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class ids and probability rows for a (K, w, d) batch of normalized windows."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[1:] != (model.window.width, model.channels):
        raise ShapeError(f"expected windows (K, {model.window.width}, {model.channels}), got {windows.shape}")
    if len(windows) == 0:
        return np.zeros(0, np.int64), np.zeros((0, model.class_count))
    if model.mode == "full":
        proba = model.forest.predict_proba(extract_features(model.deep, windows))
    elif model.mode == "dl_only":
        proba = predict_proba(model.deep, windows)
    else:
        proba = model.forest.predict_proba(windows.reshape(len(windows), -1))
    return np.argmax(proba, axis=1), proba


def _forest_inputs(mode: str, deep: DeepNetParams | None, windows: np.ndarray) -> np.ndarray:
    if mode == "full":
        return extract_features(deep, windows)
    return windows.reshape(len(windows), -1)


def fit_offline(raw: RawSeries, config: PipelineConfig | None = None) -> TdlnModel:
    """Normalize with normal-state statistics, window, split, train the network,
    then fit the forest on the frozen network's features (mode permitting).

    Validation metrics of the final model are stored under ``metadata``.
    """
    config = config or PipelineConfig()
    if raw.class_count < 2 or not np.any(raw.labels == 0):
        raise ValueError("training data needs the normal class 0 and at least one other class")
    norm = fit_norm_stats(raw)
    normed = RawSeries(apply_norm(raw.values, norm), raw.labels, raw.class_count)
    ds = extract_windows(normed, config.window)
    if len(ds) == 0:
        raise ValueError(f"no label run is at least {config.window.width} rows long")
    train_ds, val_ds = split_train_val(ds, config.val_fraction, make_rng(config.seed, 3))

    deep = None
    forest = None
    curve = TrainingCurve()
    fcfg = config.forest

    def fit_et(features):
        return fit_forest(features, train_ds.labels, fcfg.n_estimators, fcfg.max_depth, fcfg.subset_size,
                          config.seed, raw.class_count, fcfg.bootstrap, config.threads)

    if config.mode == "ml_only":
        forest = fit_et(_forest_inputs("ml_only", None, train_ds.features))
    else:
        tcfg = dataclasses.replace(config.train, seed=config.seed)
        for rnd in range(config.refine_rounds):
            if rnd:
                tcfg = dataclasses.replace(tcfg, seed=int(make_rng(config.seed, 4, rnd).integers(2 ** 32)))
            deep, c = train(train_ds, val_ds, tcfg, config.net, init=deep)
            for name in ("train_accuracy", "train_loss", "val_accuracy", "val_loss", "seconds"):
                getattr(curve, name).extend(getattr(c, name))
            if config.mode == "full":
                forest = fit_et(_forest_inputs("full", deep, train_ds.features))

    model = TdlnModel(norm, config.window, config.mode, raw.class_count, raw.channels, deep, forest,
                      config=config_dict(config))
    pred, proba = predict_windows(model, val_ds.features)
    rep = metrics.report(pred, proba, val_ds.labels, raw.class_count)
    model.metadata = {
        "windows_train": len(train_ds),
        "windows_validation": len(val_ds),
        "dropped_short_runs": ds.dropped_runs,
        "validation_fdr": rep.fdr,
        "validation_macro_fdr": rep.macro_fdr,
        "curve": {
            "train_accuracy": curve.train_accuracy, "train_loss": curve.train_loss,
            "val_accuracy": curve.val_accuracy, "val_loss": curve.val_loss,
        },
    }
    model.training_seconds = curve.seconds
    return model


def config_dict(config: PipelineConfig) -> dict:
    out = {
        "w": config.window.width, "s": config.window.stride, "mode": config.mode,
        "refine_rounds": config.refine_rounds, "val_fraction": config.val_fraction, "seed": config.seed,
        "epochs": config.train.epochs, "batch_size": config.train.batch_size, "lr": config.train.learning_rate,
        "adam_beta1": config.train.adam_beta1, "adam_beta2": config.train.adam_beta2,
        "adam_epsilon": config.train.adam_epsilon, "best_checkpoint": config.train.best_checkpoint,
        "blstm_hidden": config.net.blstm_hidden, "lstm_hidden": config.net.lstm_hidden,
        "fcnn_sizes": list(config.net.fcnn_sizes), "dropout": config.net.dropout,
        "forget_bias": config.net.forget_bias, "n_estimators": config.forest.n_estimators,
        "max_depth": config.forest.max_depth, "subset_size": config.forest.subset_size,
        "bootstrap": config.forest.bootstrap,
    }
    return out


def _detections(model, windows, starts, valid, truths=None) -> list[Detection]:
    pred, proba = predict_windows(model, windows)
    out = []
    for k in range(len(starts)):
        out.append(Detection(k, int(starts[k]), int(pred[k]), proba[k], bool(valid[k] < model.window.width),
                             None if truths is None else int(truths[k])))
    return out


def detect_online(model: TdlnModel, buffer) -> list[Detection]:
    """Window an unlabeled (N, d) buffer with the stored spec and classify each window.

    A buffer shorter than ``w`` yields one provisional window padded with its
    last row.
    """
    values = buffer.values if isinstance(buffer, RawSeries) else np.asarray(buffer, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != model.channels:
        got = values.shape[1] if values.ndim == 2 else values.shape
        raise ShapeError(f"data has {got} channels, model expects {model.channels}")
    if values.shape[0] == 0:
        raise ValueError("empty buffer")
    windows, starts, valid = windows_over(apply_norm(values, model.norm), model.window)
    return _detections(model, windows, starts, valid)


def detect_labeled(model: TdlnModel, series: RawSeries) -> list[Detection]:
    """Evaluation-time detection: windows are cut inside constant-label runs so each
    has one ground-truth label; runs shorter than ``w`` give a provisional window."""
    if series.channels != model.channels:
        raise ShapeError(f"data has {series.channels} channels, model expects {model.channels}")
    normed = RawSeries(apply_norm(series.values, model.norm), series.labels, series.class_count)
    ds = extract_windows(normed, model.window, online=True)
    return _detections(model, ds.features, ds.starts, ds.valid_rows, ds.labels)


def evaluate(model: TdlnModel, series: RawSeries) -> metrics.DetectionReport:
    if series.class_count > model.class_count:
        raise ValueError(f"data has {series.class_count} classes, model knows {model.class_count}")
    dets = detect_labeled(model, series)
    n = model.class_count
    return metrics.report([d.predicted for d in dets], np.array([d.probabilities for d in dets]),
                          [d.truth for d in dets], n)
