"""LSTM and bidirectional LSTM layers with exact backpropagation through time.

Sequences are batched as (B, w, input); a lone (w, input) sequence is accepted
and the batch axis is dropped again on output. Every gate sees the
concatenation ``[x_t, h_{t-1}]`` in that order, and the initial state is
h_0 = C_0 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .numerics import ShapeError, glorot_uniform, matmul, sigmoid


@dataclass
class LstmParams:
    """Gate weights are (hidden, input + hidden); biases are (hidden,)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_S: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_S: np.ndarray
    b_o: np.ndarray

    def __post_init__(self):
        shapes = {self.W_f.shape, self.W_i.shape, self.W_S.shape, self.W_o.shape}
        if len(shapes) != 1:
            raise ShapeError(f"gate weight shapes differ: {sorted(shapes)}")
        bshapes = {self.b_f.shape, self.b_i.shape, self.b_S.shape, self.b_o.shape}
        if bshapes != {(self.hidden,)}:
            raise ShapeError(f"gate biases must all have shape ({self.hidden},), got {sorted(bshapes)}")
        if self.W_f.shape[1] <= self.hidden:
            raise ShapeError(f"weight shape {self.W_f.shape} leaves no input columns")

    @property
    def hidden(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.hidden

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.concatenate([self.W_f, self.W_i, self.W_S, self.W_o]),
                np.concatenate([self.b_f, self.b_i, self.b_S, self.b_o]))

    @classmethod
    def from_stacked(cls, W: np.ndarray, b: np.ndarray) -> "LstmParams":
        Ws = np.split(W, 4)
        bs = np.split(b, 4)
        return cls(*Ws, *bs)

    @classmethod
    def zeros(cls, input_size: int, hidden: int) -> "LstmParams":
        return cls(*[np.zeros((hidden, input_size + hidden)) for _ in range(4)],
                   *[np.zeros(hidden) for _ in range(4)])

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden: int,
             forget_bias: float = 1.0) -> "LstmParams":
        Ws = [glorot_uniform(rng, hidden, input_size + hidden) for _ in range(4)]
        bs = [np.zeros(hidden) for _ in range(4)]
        bs[0][:] = forget_bias
        return cls(*Ws, *bs)


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray


@dataclass
class GateRecord:
    f: np.ndarray
    i: np.ndarray
    S: np.ndarray
    o: np.ndarray


@dataclass
class SequenceCache:
    """Per-step activations of one forward pass, each shaped (B, w, ·)."""

    xh: np.ndarray
    f: np.ndarray
    i: np.ndarray
    S: np.ndarray
    o: np.ndarray
    C: np.ndarray
    h: np.ndarray
    return_sequence: bool
    batched: bool

    @property
    def x(self) -> np.ndarray:
        return self.xh[..., : self.xh.shape[-1] - self.h.shape[-1]]


@dataclass
class BlstmCache:
    forward: SequenceCache
    reverse: SequenceCache  # stored in reversed time order
    batched: bool


@dataclass
class BlstmParams:
    forward: LstmParams
    reverse: LstmParams

    def __post_init__(self):
        if (self.forward.hidden, self.forward.input_size) != (self.reverse.hidden, self.reverse.input_size):
            raise ShapeError("forward and reverse directions must share input and hidden sizes")

    @property
    def hidden(self) -> int:
        return self.forward.hidden

    @property
    def input_size(self) -> int:
        return self.forward.input_size

    def arrays(self) -> list[np.ndarray]:
        return self.forward.arrays() + self.reverse.arrays()

    @classmethod
    def init(cls, rng, input_size, hidden, forget_bias=1.0) -> "BlstmParams":
        return cls(LstmParams.init(rng, input_size, hidden, forget_bias),
                   LstmParams.init(rng, input_size, hidden, forget_bias))

    @classmethod
    def zeros(cls, input_size, hidden) -> "BlstmParams":
        return cls(LstmParams.zeros(input_size, hidden), LstmParams.zeros(input_size, hidden))


def _gates(z: np.ndarray, hidden: int):
    H = hidden
    sg = sigmoid(z)
    return sg[:, :H], sg[:, H:2 * H], np.tanh(z[:, 2 * H:3 * H]), sg[:, 3 * H:]


def lstm_cell_forward(params: LstmParams, x: np.ndarray, prev: LstmState) -> tuple[LstmState, GateRecord]:
    """One step of the gate equations; accepts a single vector or a (B, input) batch."""
    single = np.ndim(x) == 1
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h_prev = np.atleast_2d(prev.h)
    C_prev = np.atleast_2d(prev.C)
    if x2.shape[1] != params.input_size:
        raise ShapeError(f"input has {x2.shape[1]} features, cell expects {params.input_size}")
    if h_prev.shape[1] != params.hidden or C_prev.shape[1] != params.hidden:
        raise ShapeError(f"state size {h_prev.shape[1]}/{C_prev.shape[1]} != hidden {params.hidden}")
    W, b = params.stacked()
    z = matmul(np.concatenate([x2, h_prev], axis=1), W.T) + b
    f, i, S, o = _gates(z, params.hidden)
    C = f * C_prev + i * S
    h = o * np.tanh(C)
    if single:
        return LstmState(h[0], C[0]), GateRecord(f[0], i[0], S[0], o[0])
    return LstmState(h, C), GateRecord(f, i, S, o)


def _as_batch(seq) -> tuple[np.ndarray, bool]:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 2:
        return seq[None], False
    if seq.ndim != 3:
        raise ShapeError(f"sequence must be (w, input) or (B, w, input), got {seq.shape}")
    return seq, True


def lstm_forward(params: LstmParams, seq: np.ndarray, return_sequence: bool = False):
    """Run the cell over every time step from a zero state.

    Returns all hidden states (B, w, H) when ``return_sequence`` is set, else
    only the last one (B, H), together with the cache for the backward pass.
    """
    xs, batched = _as_batch(seq)
    B, w, n_in = xs.shape
    if w == 0:
        raise ValueError("empty sequence")
    if n_in != params.input_size:
        raise ShapeError(f"sequence has {n_in} features, layer expects {params.input_size}")
    H = params.hidden
    W, b = params.stacked()
    WT = np.ascontiguousarray(W.T)
    xh = np.empty((B, w, n_in + H))
    f = np.empty((B, w, H)); i = np.empty((B, w, H)); S = np.empty((B, w, H)); o = np.empty((B, w, H))
    C = np.empty((B, w, H)); h = np.empty((B, w, H))
    h_prev = np.zeros((B, H))
    C_prev = np.zeros((B, H))
    for t in range(w):
        xh[:, t, :n_in] = xs[:, t]
        xh[:, t, n_in:] = h_prev
        z = matmul(xh[:, t], WT) + b
        f[:, t], i[:, t], S[:, t], o[:, t] = _gates(z, H)
        C_prev = f[:, t] * C_prev + i[:, t] * S[:, t]
        h_prev = o[:, t] * np.tanh(C_prev)
        C[:, t] = C_prev
        h[:, t] = h_prev
    cache = SequenceCache(xh, f, i, S, o, C, h, return_sequence, batched)
    out = h if return_sequence else h[:, -1]
    return (out if batched else out[0]), cache


def lstm_backward(cache: SequenceCache, params: LstmParams, grad_out: np.ndarray):
    """Gradients of a scalar loss given dL/d(output) of the matching forward call.

    Returns (LstmParams of gradients, dL/d(input sequence)).
    """
    B, w, H = cache.h.shape
    if H != params.hidden or cache.xh.shape[2] != params.input_size + H:
        raise ShapeError("cache does not match these parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    if not cache.batched:
        g = g[None]
    expect = (B, w, H) if cache.return_sequence else (B, H)
    if g.shape != expect:
        raise ShapeError(f"upstream gradient has shape {g.shape}, expected {expect}")
    n_in = params.input_size
    W, _ = params.stacked()
    dz_all = np.empty((B, w, 4 * H))
    dx = np.empty((B, w, n_in))
    dh_next = np.zeros((B, H))
    dC_next = np.zeros((B, H))
    for t in range(w - 1, -1, -1):
        if cache.return_sequence:
            dh = g[:, t] + dh_next
        else:
            dh = dh_next + g if t == w - 1 else dh_next
        f, i, S, o, C = cache.f[:, t], cache.i[:, t], cache.S[:, t], cache.o[:, t], cache.C[:, t]
        C_prev = cache.C[:, t - 1] if t > 0 else np.zeros((B, H))
        tC = np.tanh(C)
        dC = dC_next + dh * o * (1.0 - tC * tC)
        dz = dz_all[:, t]
        dz[:, :H] = dC * C_prev * f * (1.0 - f)
        dz[:, H:2 * H] = dC * S * i * (1.0 - i)
        dz[:, 2 * H:3 * H] = dC * i * (1.0 - S * S)
        dz[:, 3 * H:] = dh * tC * o * (1.0 - o)
        dxh = matmul(dz, W)
        dx[:, t] = dxh[:, :n_in]
        dh_next = dxh[:, n_in:]
        dC_next = dC * f
    flat_dz = dz_all.reshape(B * w, 4 * H)
    dW = matmul(flat_dz.T, cache.xh.reshape(B * w, -1))
    db = flat_dz.sum(axis=0)
    grads = LstmParams.from_stacked(dW, db)
    return grads, (dx if cache.batched else dx[0])


def blstm_forward(params: BlstmParams, seq: np.ndarray):
    """Forward and time-reversed passes; output step t is [h_t forward, h_t reverse]."""
    xs, batched = _as_batch(seq)
    if xs.shape[2] != params.input_size:
        raise ShapeError(f"sequence has {xs.shape[2]} features, layer expects {params.input_size}")
    hf, cf = lstm_forward(params.forward, xs, return_sequence=True)
    hr, cr = lstm_forward(params.reverse, xs[:, ::-1], return_sequence=True)
    out = np.concatenate([hf, hr[:, ::-1]], axis=2)
    return (out if batched else out[0]), BlstmCache(cf, cr, batched)


def blstm_backward(caches, params: BlstmParams, grad_out: np.ndarray):
    cf, cr = caches.forward, caches.reverse
    g = np.asarray(grad_out, dtype=np.float64)
    if not caches.batched:
        g = g[None]
    H = params.hidden
    if g.ndim != 3 or g.shape[2] != 2 * H:
        raise ShapeError(f"upstream gradient has shape {g.shape}, expected (B, w, {2 * H})")
    gf_params, dxf = lstm_backward(cf, params.forward, g[:, :, :H])
    gr_params, dxr = lstm_backward(cr, params.reverse, np.ascontiguousarray(g[:, ::-1, H:]))
    dx = dxf + dxr[:, ::-1]
    return BlstmParams(gf_params, gr_params), (dx if caches.batched else dx[0])
