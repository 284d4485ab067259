"""Mini-batch Adam training of the deep network."""
from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .dense import CE_CLAMP, softmax_cross_entropy
from .network import DeepNetParams, network_backward, network_forward, predict_proba
from .numerics import ShapeError, make_rng
from .preprocess import WindowedDataset


class TrainingDiverged(RuntimeError):
    """Loss became NaN or infinite."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite training loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1024
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    best_checkpoint: bool = False
    verbose: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if min(self.learning_rate, self.adam_epsilon) <= 0:
            raise ValueError("learning rate and Adam epsilon must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class NetConfig:
    blstm_hidden: int = 128
    lstm_hidden: int = 128
    fcnn_sizes: tuple[int, ...] = (500, 180)
    dropout: float = 0.4
    forget_bias: float = 1.0


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


@dataclass
class TrainingCurve:
    train_accuracy: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Returns (new parameter arrays, state)."""
    if len(params) != len(grads) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ShapeError("parameter and gradient shapes differ")
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = []
    for k, (p, g) in enumerate(zip(params, grads)):
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        out.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon))
    return out, state


def evaluate_epoch(params: DeepNetParams, ds: WindowedDataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) with dropout disabled."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    p = predict_proba(params, ds.features)
    acc = float(np.mean(np.argmax(p, axis=1) == ds.labels))
    loss = float(np.mean(-np.log(np.maximum(p[np.arange(len(ds)), ds.labels], CE_CLAMP))))
    return acc, loss


def train(train_ds: WindowedDataset, val_ds: WindowedDataset, config: TrainConfig,
          net: NetConfig | None = None, init: DeepNetParams | None = None):
    """Train from a seeded initialization (or from ``init``) and return
    (final-epoch params, TrainingCurve).

    Progress lines go to stderr when ``config.verbose``:
    ``epoch<TAB>train_acc<TAB>train_loss<TAB>val_acc<TAB>val_loss<TAB>seconds``.
    """
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_ds.features.shape[1:] != val_ds.features.shape[1:]:
        raise ShapeError(f"train windows {train_ds.features.shape[1:]} != validation {val_ds.features.shape[1:]}")
    net = net or NetConfig()
    if init is None:
        params = DeepNetParams.init(config.seed, train_ds.features.shape[2], train_ds.class_count,
                                    net.blstm_hidden, net.lstm_hidden, net.fcnn_sizes, net.dropout,
                                    net.forget_bias)
    else:
        params = init.copy()
    rng = make_rng(config.seed, 1)
    state = AdamState.like(params.arrays())
    curve = TrainingCurve()
    best = None
    n = len(train_ds)
    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n)
        for batch, a in enumerate(range(0, n, config.batch_size), start=1):
            idx = order[a:a + config.batch_size]
            logits, cache = network_forward(params, train_ds.features[idx], training=True, rng=rng)
            loss, _, dlogits = softmax_cross_entropy(logits, train_ds.labels[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, batch)
            grads = network_backward(params, cache, dlogits)
            arrays, state = adam_step(params.arrays(), grads.arrays(), state, config)
            params = params.with_arrays(arrays)
        tr_acc, tr_loss = evaluate_epoch(params, train_ds)
        va_acc, va_loss = evaluate_epoch(params, val_ds)
        elapsed = time.perf_counter() - start
        curve.train_accuracy.append(tr_acc)
        curve.train_loss.append(tr_loss)
        curve.val_accuracy.append(va_acc)
        curve.val_loss.append(va_loss)
        curve.seconds.append(elapsed)
        if config.verbose:
            print(f"{epoch}\t{tr_acc:.4f}\t{tr_loss:.5f}\t{va_acc:.4f}\t{va_loss:.5f}\t{elapsed:.2f}",
                  file=sys.stderr)
        if config.best_checkpoint and (best is None or (va_acc, -va_loss) > best[0]):
            best = ((va_acc, -va_loss), params)
    if config.best_checkpoint:
        params = best[1]
    return params, curve
