"""The deep feature extractor: BLSTM -> LSTM -> SELU dense stack -> linear head.

Dropout sits after the first dense layer. The feature tap handed to the
forest is the post-activation output of the last hidden dense layer (the one
feeding the classification head).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dense import DenseCache, DenseParams, apply_dropout, dense_backward, dense_forward
from .numerics import ShapeError, make_rng, softmax
from .recurrent import BlstmCache, BlstmParams, LstmParams, SequenceCache, blstm_backward, blstm_forward, \
    lstm_backward, lstm_forward


@dataclass
class DeepNetParams:
    blstm: BlstmParams
    lstm: LstmParams
    fcnn: list[DenseParams]
    dropout: float = 0.4

    def __post_init__(self):
        if self.lstm.input_size != 2 * self.blstm.hidden:
            raise ShapeError(f"LSTM input {self.lstm.input_size} != 2 x BLSTM hidden {self.blstm.hidden}")
        if len(self.fcnn) < 2:
            raise ShapeError("need at least one hidden dense layer and an output head")
        prev = self.lstm.hidden
        for layer in self.fcnn:
            if layer.n_in != prev:
                raise ShapeError(f"dense layer expects {layer.n_in} inputs, previous layer emits {prev}")
            prev = layer.n_out
        if self.fcnn[-1].activation != "linear" or any(l.activation != "selu" for l in self.fcnn[:-1]):
            raise ShapeError("hidden dense layers must be selu and the head linear")

    @property
    def input_channels(self) -> int:
        return self.blstm.input_size

    @property
    def class_count(self) -> int:
        return self.fcnn[-1].n_out

    @property
    def feature_size(self) -> int:
        return self.fcnn[-2].n_out

    def arrays(self) -> list[np.ndarray]:
        out = self.blstm.arrays() + self.lstm.arrays()
        for layer in self.fcnn:
            out += layer.arrays()
        return out

    def copy(self) -> "DeepNetParams":
        return self.with_arrays([a.copy() for a in self.arrays()])

    def with_arrays(self, arrays: list[np.ndarray]) -> "DeepNetParams":
        arrays = list(arrays)
        bf = LstmParams(*arrays[0:8])
        br = LstmParams(*arrays[8:16])
        lstm = LstmParams(*arrays[16:24])
        fcnn = []
        k = 24
        for layer in self.fcnn:
            fcnn.append(DenseParams(arrays[k], arrays[k + 1], layer.activation))
            k += 2
        return DeepNetParams(BlstmParams(bf, br), lstm, fcnn, self.dropout)

    @classmethod
    def init(cls, seed: int, channels: int, class_count: int, blstm_hidden: int = 128, lstm_hidden: int = 128,
             fcnn_sizes=(500, 180), dropout: float = 0.4, forget_bias: float = 1.0) -> "DeepNetParams":
        rng = make_rng(seed, 0)
        blstm = BlstmParams.init(rng, channels, blstm_hidden, forget_bias)
        lstm = LstmParams.init(rng, 2 * blstm_hidden, lstm_hidden, forget_bias)
        sizes = [lstm_hidden, *fcnn_sizes]
        fcnn = [DenseParams.init(rng, a, b, "selu") for a, b in zip(sizes[:-1], sizes[1:])]
        fcnn.append(DenseParams.init(rng, sizes[-1], class_count, "linear"))
        return cls(blstm, lstm, fcnn, dropout)


@dataclass
class NetCache:
    blstm: BlstmCache
    lstm: SequenceCache
    dense: list[DenseCache] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    features: np.ndarray | None = None
    logits: np.ndarray | None = None


def network_forward(params: DeepNetParams, X: np.ndarray, training: bool = False,
                    rng: np.random.Generator | None = None, masks: list[np.ndarray] | None = None):
    """Forward a (B, w, d) batch. Returns (logits (B, n), cache).

    In training mode dropout masks are drawn from ``rng`` unless explicit
    ``masks`` are given (used by gradient checks to freeze them).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != params.input_channels:
        raise ShapeError(f"expected windows (B, w, {params.input_channels}), got {X.shape}")
    H, bc = blstm_forward(params.blstm, X)
    h, lc = lstm_forward(params.lstm, H, return_sequence=False)
    cache = NetCache(bc, lc)
    a = h
    for k, layer in enumerate(params.fcnn[:-1]):
        a, dc = dense_forward(layer, a)
        cache.dense.append(dc)
        if k == 0 and training:
            if masks is not None:
                mask = masks[0]
            else:
                mask = apply_dropout(a, params.dropout, rng, True)[1].mask
            cache.masks.append(mask)
            a = a * mask
    cache.features = a
    logits, dc = dense_forward(params.fcnn[-1], a)
    cache.dense.append(dc)
    cache.logits = logits
    return logits, cache


def network_backward(params: DeepNetParams, cache: NetCache, dlogits: np.ndarray) -> DeepNetParams:
    """Parameter gradients given dLoss/dlogits of the matching forward call."""
    grads = []
    g = dlogits
    for k in range(len(params.fcnn) - 1, -1, -1):
        if k == 0 and cache.masks:
            g = g * cache.masks[0]
        gp, g = dense_backward(params.fcnn[k], cache.dense[k], g)
        grads.append(gp)
    grads.reverse()
    glstm, dH = lstm_backward(cache.lstm, params.lstm, g)
    gblstm, _ = blstm_backward(cache.blstm, params.blstm, dH)
    return DeepNetParams(gblstm, glstm, grads, params.dropout)


def extract_features(params: DeepNetParams, windows: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Post-activation output of the last hidden dense layer, dropout disabled.

    Accepts one (w, d) window or a (B, w, d) batch.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        return extract_features(params, windows[None], batch_size)[0]
    out = np.empty((windows.shape[0], params.feature_size))
    for a in range(0, windows.shape[0], batch_size):
        _, cache = network_forward(params, windows[a:a + batch_size])
        out[a:a + batch_size] = cache.features
    return out


def predict_proba(params: DeepNetParams, windows: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Softmax class probabilities of the network head, dropout disabled."""
    windows = np.asarray(windows, dtype=np.float64)
    out = np.empty((windows.shape[0], params.class_count))
    for a in range(0, windows.shape[0], batch_size):
        logits, _ = network_forward(params, windows[a:a + batch_size])
        out[a:a + batch_size] = softmax(logits)
    return out
