"""Fully connected layers, inverted dropout and the softmax/cross-entropy head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, glorot_uniform, matmul, selu, selu_grad, softmax

CE_CLAMP = 1e-12
ACTIVATIONS = ("selu", "linear")


@dataclass
class DenseParams:
    """``W`` is (out, in). ``activation`` is ``"selu"`` or ``"linear"``; the
    output head is linear and its logits are fed to softmax separately."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "selu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"inconsistent dense shapes W={self.W.shape} b={self.b.shape}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b]

    @classmethod
    def init(cls, rng, n_in, n_out, activation="selu") -> "DenseParams":
        return cls(glorot_uniform(rng, n_out, n_in), np.zeros(n_out), activation)


@dataclass
class DenseCache:
    x: np.ndarray
    pre: np.ndarray


@dataclass
class DropoutMask:
    keep_probability: float
    mask: np.ndarray


def dense_forward(params: DenseParams, x: np.ndarray):
    """activation(W x + b) for a vector or a (B, in) batch. Returns (output, cache)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if x2.shape[1] != params.n_in:
        raise ShapeError(f"input has {x2.shape[1]} features, layer expects {params.n_in}")
    pre = matmul(x2, params.W.T) + params.b
    out = selu(pre) if params.activation == "selu" else pre
    cache = DenseCache(x2, pre)
    return (out[0] if single else out), cache


def dense_backward(params: DenseParams, cache: DenseCache, grad_out: np.ndarray):
    """Returns (DenseParams of gradients, dL/dx)."""
    g = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    if g.shape != cache.pre.shape or cache.x.shape[1] != params.n_in:
        raise ShapeError(f"gradient shape {g.shape} does not match cached forward {cache.pre.shape}")
    if params.activation == "selu":
        g = g * selu_grad(cache.pre)
    dW = matmul(g.T, cache.x)
    db = g.sum(axis=0)
    dx = matmul(g, params.W)
    return DenseParams(dW, db, params.activation), (dx[0] if np.ndim(grad_out) == 1 else dx)


def apply_dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout: zero entries with probability ``rate`` and rescale
    survivors by 1/(1 - rate) in training; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    keep = 1.0 - rate
    if not training or rate == 0.0:
        return x, DropoutMask(keep, np.ones_like(x))
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, DropoutMask(keep, mask)


def cross_entropy(probabilities: np.ndarray, onehot: np.ndarray) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(onehot, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"probabilities {p.shape} and targets {y.shape} differ")
    return float(-np.log(max(float(p[np.argmax(y)]), CE_CLAMP)))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch of logits (B, n) and integer labels.

    Returns (mean loss, probabilities, dLoss/dlogits). The logit gradient is
    (p - onehot) / B.
    """
    p = softmax(logits)
    B = p.shape[0]
    rows = np.arange(B)
    loss = float(np.mean(-np.log(np.maximum(p[rows, labels], CE_CLAMP))))
    grad = p.copy()
    grad[rows, labels] -= 1.0
    return loss, p, grad / B
