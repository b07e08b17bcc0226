"""Seeded generators for the synthetic task suites.

Discrete tasks draw token sequences uniformly from an integer range and
derive targets per task:

    copy     y = x
    reverse  y = x reversed
    double   y = x followed by x again
    add      y_t = (x_t + x_{T-t}) / 2   for t = 1..T//2   (distant pairing)
    max      y_t = max(x_{2t-1}, x_{2t}) for t = 1..T//2   (adjacent pairing)

``add`` targets can be half-integers and are produced as floats; all
other targets are tokens.  The sinusoid task samples points of
y = 5 + A sin(2 pi f x + phase) at jittered positions x = (t + eps)/1000
over t = 1..2T; the first half is the input (optionally with additive
value noise), the second half the continuation target.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError

DISCRETE_TASKS = ("double", "copy", "reverse", "add", "max")
ALL_TASKS = DISCRETE_TASKS + ("sinusoid",)

DEFAULT_RANGES = {"double": (1, 10), "copy": (1, 10), "reverse": (1, 10),
                  "add": (1, 10), "max": (1, 50)}


def output_length(task: str, length: int) -> int:
    if task in ("copy", "reverse", "sinusoid"):
        return length
    if task == "double":
        return 2 * length
    if task in ("add", "max"):
        return length // 2
    raise ConfigError(f"unknown task {task!r}; choose from {ALL_TASKS}")


def discrete_targets(task: str, X: np.ndarray) -> np.ndarray:
    """Targets for a batch of token rows (vectorized over rows)."""
    T = X.shape[1]
    if task == "copy":
        return X.copy()
    if task == "reverse":
        return X[:, ::-1].copy()
    if task == "double":
        return np.concatenate([X, X], axis=1)
    if task == "add":
        # 1-based pairing of x_t with x_{T-t}; the middle self-pairs for even T
        t = np.arange(1, T // 2 + 1)
        return (X[:, t - 1] + X[:, T - t - 1]) / 2.0
    if task == "max":
        t = np.arange(1, T // 2 + 1)
        return np.maximum(X[:, 2 * t - 2], X[:, 2 * t - 1])
    raise ConfigError(f"unknown discrete task {task!r}")


def make_discrete(
    task: str,
    length: int,
    n_samples: int,
    seed: int,
    low: int | None = None,
    high: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch of (inputs, targets) for one discrete task, i.i.d. uniform tokens."""
    if task not in DISCRETE_TASKS:
        raise ConfigError(f"unknown discrete task {task!r}; choose from {DISCRETE_TASKS}")
    if length < 2:
        raise ConfigError(f"task sequences need length >= 2, got {length}")
    if task in ("add", "max") and length % 2:
        raise ConfigError(f"task {task!r} needs an even length, got {length}")
    d_low, d_high = DEFAULT_RANGES[task]
    low = d_low if low is None else low
    high = d_high if high is None else high
    if high < low:
        raise ConfigError(f"empty token range [{low}, {high}]")
    rng = np.random.default_rng(seed)
    X = rng.integers(low, high + 1, size=(n_samples, length), dtype=np.int64)
    return X, discrete_targets(task, X)


def sinusoid_value(amplitude: float, frequency: float, phase: float,
                   t, jitter=0.0) -> np.ndarray:
    """y = 5 + A sin(2 pi f x + phase) at x = (t + jitter)/1000."""
    x = (np.asarray(t, dtype=np.float64) + jitter) / 1000.0
    return 5.0 + amplitude * np.sin(2.0 * np.pi * frequency * x + phase)


def make_sinusoid(
    length: int,
    n_samples: int,
    seed: int,
    noisy: bool = False,
    return_params: bool = False,
):
    """Sinusoid continuation batches.

    Amplitude ~ U(1,5), frequency ~ U(10,30), phase ~ U(0,100); positions
    are jittered per point with eps1 ~ U(-1,1).  When ``noisy`` the input
    half additionally gets value noise eps2 ~ U(-2,2); the target half
    stays clean.
    """
    if length < 1:
        raise ConfigError(f"sinusoid length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    amp = rng.uniform(1.0, 5.0, n_samples)
    freq = rng.uniform(10.0, 30.0, n_samples)
    phase = rng.uniform(0.0, 100.0, n_samples)
    jitter = rng.uniform(-1.0, 1.0, (n_samples, 2 * length))
    t = np.arange(1, 2 * length + 1)
    y = sinusoid_value(amp[:, None], freq[:, None], phase[:, None], t[None, :], jitter)
    X, Y = y[:, :length].copy(), y[:, length:].copy()
    if noisy:
        X += rng.uniform(-2.0, 2.0, (n_samples, length))
    if return_params:
        return X, Y, {"amplitude": amp, "frequency": freq, "phase": phase}
    return X, Y


def make_task(task: str, length: int, n_samples: int, seed: int,
              low: int | None = None, high: int | None = None,
              noisy: bool = False) -> tuple[np.ndarray, np.ndarray]:
    if task == "sinusoid":
        return make_sinusoid(length, n_samples, seed, noisy=noisy)
    return make_discrete(task, length, n_samples, seed, low=low, high=high)


SAMPLES_HEADER = ("split", "task", "seed", "index", "input", "target")


def _format_tokens(row: np.ndarray) -> str:
    if np.issubdtype(row.dtype, np.integer):
        return " ".join(str(int(v)) for v in row)
    return " ".join(f"{v:.9f}" for v in row)


def write_samples_csv(path, task: str, X: np.ndarray, Y: np.ndarray,
                      seed: int, split: str = "train") -> None:
    """Dump a generated batch as ``split,task,seed,index,input,target`` with
    space-separated token lists."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SAMPLES_HEADER)
        for i in range(X.shape[0]):
            writer.writerow([split, task, seed, i, _format_tokens(X[i]), _format_tokens(Y[i])])
