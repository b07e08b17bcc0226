"""Parameter updates: SGD, RMSprop and Adam, plus global-norm clipping."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError

OPTIMIZERS = ("adam", "rmsprop", "sgd")


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients so the global L2 norm is at most ``max_norm``.

    Returns (possibly rescaled grads, pre-clip norm).  Direction is
    preserved exactly; gradients at or under the threshold pass through
    untouched.
    """
    if max_norm <= 0:
        raise ConfigError(f"clip norm must be positive, got {max_norm}")
    total = 0.0
    for g in grads.values():
        total += float((g * g).sum())
    norm = float(np.sqrt(total))
    if norm <= max_norm:
        return grads, norm
    factor = max_norm / norm
    return {k: g * factor for k, g in grads.items()}, norm


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            p -= self.lr * g


class RmsProp:
    decay = 0.9
    eps = 1e-8

    def __init__(self, lr: float):
        self.lr = lr
        self.sq: dict[str, np.ndarray] = {}

    def step(self, params, grads) -> None:
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            sq = self.sq.setdefault(name, np.zeros_like(p))
            sq *= self.decay
            sq += (1.0 - self.decay) * g * g
            p -= self.lr * g / (np.sqrt(sq) + self.eps)


class Adam:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            _check_finite(name, g)
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _check_finite(name: str, g: np.ndarray) -> None:
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite gradient for parameter {name!r}")


def make_optimizer(kind: str, lr: float):
    if kind == "adam":
        return Adam(lr)
    if kind == "rmsprop":
        return RmsProp(lr)
    if kind == "sgd":
        return Sgd(lr)
    raise ConfigError(f"unknown optimizer {kind!r}; choose from {OPTIMIZERS}")


def optimizer_step(kind: str, params, grads, state, lr: float):
    """Functional wrapper: one update step, threading optimizer state.

    ``state`` is None on the first call; pass the returned state back in.
    """
    if state is None:
        state = make_optimizer(kind, lr)
    state.lr = lr
    state.step(params, grads)
    return params, state
