"""Dense numeric primitives shared by every layer.

Matrices are plain ``float64`` numpy arrays. Products go through
:func:`matmul`, whose kernel accumulates each output cell strictly left to
right (no FMA contraction, no blocked reordering), so results are
bit-reproducible and equal to a naive triple loop. ``tanh`` and ``exp`` are
numpy's (platform libm) implementations.

Randomness uses numpy's PCG64 bit generator, a published algorithm with a
platform-independent output stream. Child streams are derived with
``SeedSequence([seed, *keys])``.
"""
from __future__ import annotations

import numba
import numpy as np

SELU_LAMBDA = 1.05070098
SELU_ALPHA = 1.67326324


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@numba.njit(cache=True)
def _matmul_kernel(a, b):
    m, k_dim = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for k in range(k_dim):
            aik = a[i, k]
            for j in range(n):
                out[i, j] += aik * b[k, j]
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed per-cell summation order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _matmul_kernel(np.ascontiguousarray(a), np.ascontiguousarray(b))


def sigmoid(x):
    """Logistic function, stable for large |x| (saturates instead of overflowing)."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def tanh(x):
    return np.tanh(x)


def selu(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * (SELU_ALPHA * np.exp(np.minimum(x, 0.0)) - SELU_ALPHA))
    return out if out.ndim else float(out)


def selu_grad(x):
    """Derivative of :func:`selu`: lambda on the right, lambda*a*e^x on the left (x <= 0)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
    return out if out.ndim else float(out)


def softmax(v: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, max-shifted for stability."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0 or v.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    z = np.exp(v - v.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Seeded PCG64 generator; extra integer keys select an independent child stream."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))
