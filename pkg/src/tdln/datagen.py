"""Seeded synthetic multichannel process with injectable faults.

Latent channels follow independent AR(1) dynamics with unit-scale stationary
spread; observations are ``mean + M @ z_t`` for a row-normalized mixing
matrix ``M``. Faults act from their onset index onward:

- ``step``: constant offset ``magnitude`` on the affected observed channels.
- ``random_variation``: latent noise std of the affected channels scaled by
  ``1 + magnitude``.
- ``slow_drift``: ramp ``magnitude * (t - onset) / N`` on the affected
  observed channels (``N`` is the run length).
- ``sticking``: each affected observed channel holds its last released value
  with probability 0.9 per step; on a release step it takes the live value,
  which becomes the new held value.

All noise for a run is drawn up front from the run's own stream, and the
sticking draws come from a separate stream, so the pre-onset part of a faulted
run equals the normal run generated with the same run key.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import make_rng
from .preprocess import RawSeries

FAMILIES = ("step", "random_variation", "slow_drift", "sticking")
STICK_PROBABILITY = 0.9

# per-family default magnitudes (observed channels have roughly unit spread)
DEFAULT_MAGNITUDES = {"step": 1.5, "random_variation": 2.5, "slow_drift": 20.0, "sticking": 1.0}
AFFECTED_CHANNELS = 6

TRAIN_ONSET = 20
TEST_ONSET = 160

_NOISE_STREAM, _STICK_STREAM, _FAULT_STREAM, _STRUCT_STREAM = 10, 11, 12, 13


@dataclass
class ProcessSpec:
    ar: np.ndarray
    mean: np.ndarray
    noise: np.ndarray
    mixing: np.ndarray
    seed: int = 0

    def __post_init__(self):
        d = self.ar.shape[0]
        if d < 1 or self.mean.shape != (d,) or self.noise.shape != (d,) or self.mixing.shape != (d, d):
            raise ValueError("inconsistent process dimensions")
        if not np.all((self.ar > 0) & (self.ar < 1)):
            raise ValueError("AR coefficients must lie in (0, 1)")
        if not np.all(self.noise > 0):
            raise ValueError("noise std must be positive")

    @property
    def channels(self) -> int:
        return self.ar.shape[0]

    @classmethod
    def random(cls, channels: int = 12, seed: int = 0, mix_strength: float = 0.3,
               ar_range: tuple[float, float] = (0.2, 0.7)) -> "ProcessSpec":
        rng = make_rng(seed, _STRUCT_STREAM)
        ar = rng.uniform(*ar_range, channels)
        scale = rng.uniform(0.5, 1.5, channels)
        noise = scale * np.sqrt(1.0 - ar * ar)
        mean = rng.uniform(-5.0, 5.0, channels)
        mixing = np.eye(channels) + mix_strength * rng.uniform(-1.0, 1.0, (channels, channels)) * (
            1 - np.eye(channels))
        mixing /= np.linalg.norm(mixing, axis=1, keepdims=True)
        return cls(ar, mean, noise, mixing, seed)


@dataclass(frozen=True)
class FaultSpec:
    family: str
    channels: tuple[int, ...]
    magnitude: float
    onset: int
    class_id: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown fault family {self.family!r}")
        if self.onset < 1:
            raise ValueError(f"onset must be >= 1, got {self.onset}")
        if self.magnitude <= 0:
            raise ValueError("magnitude must be positive")
        if self.class_id < 1:
            raise ValueError("fault class ids start at 1")


def generate(spec: ProcessSpec, fault: FaultSpec | None, length: int, run_key=(0,)) -> RawSeries:
    d = spec.channels
    if length < 1:
        raise ValueError("length must be >= 1")
    if fault is not None:
        if fault.onset > length:
            raise ValueError(f"onset {fault.onset} beyond run length {length}")
        if any(not 0 <= c < d for c in fault.channels):
            raise ValueError(f"affected channels {fault.channels} outside [0, {d})")
    key = tuple(int(k) for k in np.atleast_1d(run_key))
    eps = make_rng(spec.seed, _NOISE_STREAM, *key).standard_normal((length, d))
    sigma = np.tile(spec.noise, (length, 1))
    ch = list(fault.channels) if fault is not None else []
    if fault is not None and fault.family == "random_variation":
        sigma[fault.onset:, ch] *= 1.0 + fault.magnitude
    z = np.empty((length, d))
    z[0] = spec.noise / np.sqrt(1.0 - spec.ar ** 2) * eps[0]
    for t in range(1, length):
        z[t] = spec.ar * z[t - 1] + sigma[t] * eps[t]
    x = spec.mean + z @ spec.mixing.T
    labels = np.zeros(length, dtype=np.int64)
    n_classes = 1
    if fault is not None:
        on = fault.onset
        labels[on:] = fault.class_id
        n_classes = fault.class_id + 1
        if fault.family == "step":
            x[on:, ch] += fault.magnitude
        elif fault.family == "slow_drift":
            ramp = fault.magnitude * (np.arange(on, length) - on) / length
            x[on:, ch] += ramp[:, None]
        elif fault.family == "sticking":
            u = make_rng(spec.seed, _STICK_STREAM, *key).random((length, len(ch)))
            held = x[on, ch].copy()
            for t in range(on + 1, length):
                stuck = u[t] < STICK_PROBABILITY
                x[t, ch] = np.where(stuck, held, x[t, ch])
                held = x[t, ch].copy()
    return RawSeries(x, labels, n_classes)


def fault_catalogue(spec: ProcessSpec, class_count: int, magnitudes: dict | None = None) -> dict[int, FaultSpec]:
    """Fault for each class id >= 1: families cycle step, random_variation,
    slow_drift, sticking; each pass through the cycle raises the magnitude by
    25%. Affected channels are a seeded draw per class. Onsets are placeholders
    (1) and get set per run."""
    magnitudes = {**DEFAULT_MAGNITUDES, **(magnitudes or {})}
    out = {}
    for c in range(1, class_count):
        family = FAMILIES[(c - 1) % len(FAMILIES)]
        rng = make_rng(spec.seed, _FAULT_STREAM, c)
        k = min(AFFECTED_CHANNELS, spec.channels)
        chans = tuple(int(v) for v in np.sort(rng.choice(spec.channels, size=k, replace=False)))
        mag = magnitudes[family] * (1.0 + 0.25 * ((c - 1) // len(FAMILIES)))
        out[c] = FaultSpec(family, chans, mag, 1, c)
    return out


def scaled_onset(length: int, nominal: int) -> int:
    """Nominal onset if the run is long enough, else max(2, length // 6)."""
    return nominal if length > nominal else max(2, length // 6)


def generate_benchmark(spec: ProcessSpec, class_count: int, train_runs: int, test_runs: int,
                       train_length: int = 500, test_length: int = 960, magnitudes: dict | None = None):
    """Concatenated runs per class (class-major order) for a train and a test split.

    Class 0 runs are fault-free. A run of fault class ``c`` starts in normal
    operation and switches to fault ``c`` at the onset: index 20 for training
    runs and 160 for test runs (see :func:`scaled_onset` for short runs).
    """
    if class_count < 2 or train_runs < 1 or test_runs < 1:
        raise ValueError("need class_count >= 2 and at least one run per split")
    catalogue = fault_catalogue(spec, class_count, magnitudes)

    def split(tag, runs, length, nominal):
        onset = scaled_onset(length, nominal)
        values, labels = [], []
        for c in range(class_count):
            fault = None
            if c > 0:
                f = catalogue[c]
                fault = FaultSpec(f.family, f.channels, f.magnitude, onset, c)
            for r in range(runs):
                s = generate(spec, fault, length, (tag, c, r))
                values.append(s.values)
                labels.append(s.labels)
        return RawSeries(np.concatenate(values), np.concatenate(labels), class_count)

    return (split(0, train_runs, train_length, TRAIN_ONSET),
            split(1, test_runs, test_length, TEST_ONSET))
