"""Sequence-to-sequence estimator: recurrent controller + slot memory.

``MemorySeq2Seq`` follows the scikit-learn estimator API: constructor
arguments are stored verbatim, everything data-dependent happens in
``fit``, and fitted state lives in trailing-underscore attributes.  The
model encodes each input sequence under the configured writing policy,
then decodes a fixed number of output steps from a learned "go" input,
writing and reading memory every decode step unless ``decode_write`` is
off (reads continue either way).

Training samples minibatches with replacement from the provided arrays,
optimizes with Adam/RMSprop/SGD under global-norm gradient clipping, and
is bit-reproducible for a fixed ``random_state``.
"""

from __future__ import annotations

import csv
import time
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from . import checkpoint as ckpt
from . import memory as mem_mod
from . import optim
from ._validation import check_paired, check_positive_int, check_sequences
from .autodiff import Value
from .controllers import (
    CellRunner,
    init_controller_params,
    init_projection_params,
    initial_state,
    named_uniform,
)
from .errors import ConfigError, DimensionError, NumericError
from .memory import interface_width, parse_interface, read_only, write_then_read
from .writing import POLICIES, build_schedule, run_episode

METRICS_HEADER = ("iter", "seconds", "loss", "metric", "mem_writes", "seed")


def _stream_seed(seed: int, label: str) -> list[int]:
    return [int(seed), zlib.crc32(label.encode())]


class _GraphModel:
    """Per-forward view of the estimator that the episode loop drives."""

    def __init__(self, kind: str, param_values: dict[str, Value], n_slots: int,
                 slot_width: int, hidden: int):
        self.kind = kind
        self.param_values = param_values
        self.n_slots = n_slots
        self.slot_width = slot_width
        self.hidden = hidden
        self.cell = CellRunner(kind, param_values)

    def fresh_state(self, batch: int):
        return initial_state(self.kind, batch, self.hidden)

    def fresh_memory(self, batch: int):
        if self.n_slots == 0:
            return mem_mod.MemoryState(content=ad.leaf(np.zeros((0, 1))), n_slots=0,
                                       read=ad.leaf(np.zeros((batch, 0))))
        return mem_mod.init_memory(batch, self.n_slots, self.slot_width)

    def step(self, state, x, r, surrogate=None):
        return self.cell.step(state, x, r, surrogate=surrogate)

    def output(self, state, x, r, surrogate=None):
        new_state = self.cell.step(state, x, r, surrogate=surrogate)
        return self.cell.project(new_state.h, r, "iface"), new_state


@dataclass
class _ForwardResult:
    loss: Value | None
    predictions: np.ndarray
    encode_trace: object
    decode_rows: list[tuple]
    param_values: dict[str, Value]


class MemorySeq2Seq(BaseEstimator):
    """Recurrent sequence-to-sequence model with scheduled memory writes.

    Parameters
    ----------
    policy : {"regular", "uniform", "random", "cuw"}
        When the encoder writes to memory.  ``uniform`` writes every
        floor(T/(slots+1)) steps; ``cuw`` additionally attends over a
        cache of hidden states at each write.
    controller : {"rnn", "lstm"}
        Recurrent cell kind.
    slots : int
        Number of memory slots (0 disables external memory).
    slot_width : int
        Width of each slot's content vector.
    hidden_size : int
        Controller hidden dimension.
    cache_size : int or None
        Cache length L for ``cuw``; defaults to floor(T/(slots+1)).
    optimizer : {"adam", "rmsprop", "sgd"}
    learning_rate, clip_norm, batch_size, max_iter
        Training-loop knobs; gradients are clipped to ``clip_norm``
        global L2 norm.
    loss : {"auto", "xent", "mse"}
        ``auto`` picks cross-entropy for integer targets, squared error
        for real ones.
    decode_write : bool
        Write to memory during decoding (reads happen regardless).
    metrics_every, checkpoint_every : int
        Logging/checkpoint cadence in iterations.
    run_dir : str or None
        When set, metrics.csv and checkpoints are written under it.
    record_timing : bool
        Record wall-clock seconds in metrics; disable for byte-for-byte
        reproducible metric files.
    random_state : int
        Seed for parameters, batch order and the random policy schedule.
    """

    def __init__(
        self,
        policy: str = "uniform",
        controller: str = "lstm",
        slots: int = 4,
        slot_width: int = 32,
        hidden_size: int = 64,
        cache_size: int | None = None,
        optimizer: str = "adam",
        learning_rate: float = 1e-3,
        clip_norm: float = 10.0,
        batch_size: int = 32,
        max_iter: int = 2000,
        loss: str = "auto",
        decode_write: bool = True,
        metrics_every: int = 100,
        checkpoint_every: int = 1000,
        run_dir: str | None = None,
        record_timing: bool = True,
        random_state: int = 0,
    ):
        self.policy = policy
        self.controller = controller
        self.slots = slots
        self.slot_width = slot_width
        self.hidden_size = hidden_size
        self.cache_size = cache_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.loss = loss
        self.decode_write = decode_write
        self.metrics_every = metrics_every
        self.checkpoint_every = checkpoint_every
        self.run_dir = run_dir
        self.record_timing = record_timing
        self.random_state = random_state

    # ------------------------------------------------------------------
    # set-up

    def _validate_knobs(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.hidden_size, "hidden_size")
        check_positive_int(self.slot_width, "slot_width")
        if self.slots < 0:
            raise ConfigError(f"slots must be >= 0, got {self.slots}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.loss not in ("auto", "xent", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}; choose auto, xent or mse")
        if self.policy == "cuw" and self.slots == 0:
            raise ConfigError("policy 'cuw' needs at least one memory slot")

    def initialize(self, X, y) -> "MemorySeq2Seq":
        """Dimension handshake and parameter init, without training.

        ``fit`` calls this; it is also the entry point for loading a
        checkpoint into a fresh estimator.
        """
        self._validate_knobs()
        X = check_sequences(X)
        y = check_paired(X, y)
        self.n_features_in_ = X.shape[1]
        self.seq_len_ = X.shape[1]
        self.n_outputs_ = y.shape[1]

        if self.loss == "auto":
            self.loss_ = "xent" if np.issubdtype(y.dtype, np.integer) else "mse"
        else:
            self.loss_ = self.loss
        if np.issubdtype(X.dtype, np.integer):
            if X.min() < 1:
                raise ConfigError(f"tokens must be >= 1, got minimum {X.min()}")
            vocab = int(X.max())
            if self.loss_ == "xent":
                if not np.issubdtype(y.dtype, np.integer):
                    raise ConfigError("cross-entropy loss needs integer targets")
                vocab = max(vocab, int(y.max()))
                self.classes_ = np.arange(1, vocab + 1)
            self.vocab_size_ = vocab
            self.x_dim_ = vocab + 1  # one-hot tokens plus an end-of-sequence channel
        else:
            if self.loss_ == "xent":
                raise ConfigError("cross-entropy loss needs integer inputs/targets")
            self.vocab_size_ = 0
            self.x_dim_ = 2  # scalar value plus an end-of-sequence flag
        self.out_dim_ = self.vocab_size_ if self.loss_ == "xent" else 1

        read_dim = self.slot_width if self.slots > 0 else 0
        self.read_dim_ = read_dim
        seed = int(self.random_state)

        self._cache = None
        if self.policy == "cuw":
            top = max(1, self.seq_len_ // (self.slots + 1))
            self._cache = top if self.cache_size is None else int(self.cache_size)
            if not (1 <= self._cache <= top):
                raise ConfigError(
                    f"cache size must lie in [1, {top}] for T={self.seq_len_}, "
                    f"D={self.slots}; got {self._cache}"
                )
            self.schedule_ = build_schedule("cuw", self.seq_len_, self.slots,
                                            cache_size=self._cache)
        else:
            if self.cache_size is not None:
                raise ConfigError("cache_size is only meaningful for policy='cuw'")
            sched_seed = np.random.SeedSequence(_stream_seed(seed, "schedule")).generate_state(1)[0]
            self.schedule_ = build_schedule(self.policy, self.seq_len_, self.slots,
                                            seed=int(sched_seed))

        params: dict[str, np.ndarray] = {}
        params.update(init_controller_params(self.controller, self.x_dim_, read_dim,
                                             self.hidden_size, seed))
        if self.slots > 0:
            params.update(init_projection_params(self.hidden_size, read_dim,
                                                 interface_width(self.slot_width),
                                                 seed, prefix="iface"))
        params.update(init_projection_params(self.hidden_size, read_dim, self.out_dim_,
                                             seed, prefix="head"))
        params["go"] = named_uniform(seed, "go", (1, self.x_dim_), self.x_dim_)
        if self.policy == "cuw":
            h, w = self.hidden_size, self.slot_width
            params["att.W"] = named_uniform(seed, "att.W", (h, h), h)
            params["att.U"] = named_uniform(seed, "att.U", (h, h), h)
            params["att.V"] = named_uniform(seed, "att.V", (w, h), w)
            params["att.v"] = named_uniform(seed, "att.v", (h, 1), h)
        self.params_ = params
        self.fingerprint_ = self._fingerprint()
        self.metrics_ = []
        return self

    def _fingerprint(self) -> str:
        att = "yes" if self.policy == "cuw" else "no"
        return (
            f"controller={self.controller};x_dim={self.x_dim_};hidden={self.hidden_size};"
            f"slots={self.slots};width={self.slot_width};out_dim={self.out_dim_};"
            f"out_steps={self.n_outputs_};loss={self.loss_};attention={att}"
        )

    # ------------------------------------------------------------------
    # graph construction

    def _encode_steps(self, Xb: np.ndarray) -> list[Value]:
        batch, steps = Xb.shape
        xs = []
        if self.vocab_size_:
            for t in range(steps):
                onehot = np.zeros((batch, self.x_dim_))
                onehot[np.arange(batch), Xb[:, t] - 1] = 1.0
                xs.append(ad.leaf(onehot))
        else:
            for t in range(steps):
                col = np.zeros((batch, 2))
                col[:, 0] = Xb[:, t]
                xs.append(ad.leaf(col))
        return xs

    def _eos_step(self, batch: int) -> Value:
        eos = np.zeros((batch, self.x_dim_))
        eos[:, -1] = 1.0
        return ad.leaf(eos)

    def _forward(self, param_values: dict[str, Value], Xb: np.ndarray,
                 Yb: np.ndarray | None) -> _ForwardResult:
        batch = Xb.shape[0]
        gm = _GraphModel(self.controller, param_values, self.slots, self.slot_width,
                         self.hidden_size)
        xs = self._encode_steps(Xb)
        state, mem, trace = run_episode(gm, xs, self.policy, schedule=self.schedule_,
                                        cache_size=self._cache)
        state = gm.step(state, self._eos_step(batch), mem.read)

        go = ad.add(ad.leaf(np.zeros((batch, self.x_dim_))), param_values["go"])
        loss_acc: Value | None = None
        preds = np.empty((batch, self.n_outputs_),
                         dtype=np.int64 if self.loss_ == "xent" else np.float64)
        decode_rows: list[tuple] = []
        for k in range(self.n_outputs_):
            if self.slots > 0:
                o, state = gm.output(state, go, mem.read)
                iface = parse_interface(o, self.slot_width)
                mem = write_then_read(mem, iface) if self.decode_write else read_only(mem, iface)
                gate = float(iface.write_gate.data[0, 0]) if self.decode_write else 0.0
                decode_rows.extend(mem_mod.trace_rows(self.seq_len_ + 1 + k + 1, mem, gate))
            else:
                state = gm.step(state, go, mem.read)
            out = gm.cell.project(state.h, mem.read, "head")
            if self.loss_ == "xent":
                preds[:, k] = out.data.argmax(axis=1) + 1
                if Yb is not None:
                    onehot = np.zeros((batch, self.out_dim_))
                    onehot[np.arange(batch), Yb[:, k].astype(np.int64) - 1] = 1.0
                    term = ad.softmax_xent(out, ad.leaf(onehot))
                    loss_acc = term if loss_acc is None else ad.add(loss_acc, term)
            else:
                preds[:, k] = out.data[:, 0]
                if Yb is not None:
                    term = ad.squared_error(out, ad.leaf(Yb[:, k : k + 1]))
                    loss_acc = term if loss_acc is None else ad.add(loss_acc, term)
        loss = None if loss_acc is None else ad.scale(loss_acc, 1.0 / self.n_outputs_)
        return _ForwardResult(loss, preds, trace, decode_rows, param_values)

    def _wrap_params(self) -> dict[str, Value]:
        return {name: ad.leaf(arr) for name, arr in self.params_.items()}

    def loss_builder(self, Xb: np.ndarray, Yb: np.ndarray):
        """(fn, point) pair for finite-difference checks over all parameters."""
        Xb = check_sequences(Xb)
        Yb = check_paired(Xb, Yb)

        def fn(leaves: dict[str, Value]) -> Value:
            return self._forward(leaves, Xb, Yb).loss

        return fn, {name: arr.copy() for name, arr in self.params_.items()}

    # ------------------------------------------------------------------
    # training

    def fit(self, X, y) -> "MemorySeq2Seq":
        self.initialize(X, y)
        X = check_sequences(X)
        y = check_paired(X, y)
        n = X.shape[0]
        rng = np.random.default_rng(_stream_seed(int(self.random_state), "batches"))
        opt = optim.make_optimizer(self.optimizer, self.learning_rate)

        run_dir = Path(self.run_dir) if self.run_dir else None
        metrics_fh = writer = None
        if run_dir:
            run_dir.mkdir(parents=True, exist_ok=True)
            metrics_fh = open(run_dir / "metrics.csv", "w", newline="")
            writer = csv.writer(metrics_fh)
            writer.writerow(METRICS_HEADER)
        self._last_checkpoint = None
        started = time.perf_counter()
        try:
            for it in range(1, self.max_iter + 1):
                idx = rng.integers(0, n, self.batch_size)
                result = self._forward(self._wrap_params(), X[idx], y[idx])
                loss_val = float(result.loss.data[0, 0])
                if not np.isfinite(loss_val):
                    raise NumericError(
                        f"non-finite loss at iteration {it}; last good checkpoint: "
                        f"{self._last_checkpoint or 'none'}"
                    )
                ad.backward(result.loss)
                grads = {name: ad.grad_of(v) for name, v in result.param_values.items()}
                grads, _ = optim.clip_gradients(grads, self.clip_norm)
                opt.step(self.params_, grads)

                if it % self.metrics_every == 0 or it == self.max_iter:
                    seconds = time.perf_counter() - started if self.record_timing else 0.0
                    metric = self._batch_metric(result.predictions, y[idx])
                    row = (it, f"{seconds:.6f}", f"{loss_val:.9f}", f"{metric:.6f}",
                           result.encode_trace.memory_writes, int(self.random_state))
                    self.metrics_.append(row)
                    if writer:
                        writer.writerow(row)
                        metrics_fh.flush()
                if run_dir and (it % self.checkpoint_every == 0 or it == self.max_iter):
                    path = run_dir / f"ckpt-{it}"
                    self.save(path)
                    self._last_checkpoint = str(path)
        finally:
            if metrics_fh:
                metrics_fh.close()
        self._is_fitted = True
        return self

    def _batch_metric(self, preds: np.ndarray, targets: np.ndarray) -> float:
        if self.loss_ == "xent":
            return float((preds == targets).mean() * 100.0)
        return float(((preds - targets) ** 2).mean())

    # ------------------------------------------------------------------
    # inference

    def _check_ready(self) -> None:
        if not hasattr(self, "params_"):
            raise ConfigError("estimator is not initialized; call fit or initialize first")

    def predict(self, X) -> np.ndarray:
        self._check_ready()
        X = check_sequences(X)
        if X.shape[1] != self.seq_len_:
            raise DimensionError(
                f"X has {X.shape[1]} steps but the model was built for {self.seq_len_}"
            )
        chunks = []
        for lo in range(0, X.shape[0], self.batch_size):
            result = self._forward(self._wrap_params(), X[lo : lo + self.batch_size], None)
            chunks.append(result.predictions)
        return np.concatenate(chunks, axis=0)

    def evaluate(self, X, y) -> float:
        """Mean per-step decode accuracy in percent, or MSE for regression."""
        self._check_ready()
        X = check_sequences(X)
        y = check_paired(X, y)
        preds = self.predict(X)
        return self._batch_metric(preds, y)

    def score(self, X, y) -> float:
        """Sklearn-style score: accuracy fraction, or negative MSE."""
        value = self.evaluate(X, y)
        return value / 100.0 if self.loss_ == "xent" else -value

    def episode_trace(self, X) -> list[tuple]:
        """Memory-access trace rows (t, slot, write_w, read_w, gate) for the
        first batch of X, encode then decode steps."""
        self._check_ready()
        X = check_sequences(X)
        result = self._forward(self._wrap_params(), X[: self.batch_size], None)
        return list(result.encode_trace.rows) + list(result.decode_rows)

    # ------------------------------------------------------------------
    # persistence

    def save(self, path) -> None:
        self._check_ready()
        ckpt.save_checkpoint(path, self.fingerprint_, self.params_)

    def load(self, path) -> "MemorySeq2Seq":
        """Load parameters from a checkpoint; shapes and fingerprint must
        match the initialized model."""
        self._check_ready()
        _, params = ckpt.load_checkpoint(path, expected_fingerprint=self.fingerprint_)
        for name, arr in self.params_.items():
            if name not in params or params[name].shape != arr.shape:
                raise ckpt.CheckpointCompatibilityError(
                    f"parameter {name!r} missing or mis-shaped in checkpoint"
                )
        self.params_ = params
        self._is_fitted = True
        return self

    def __sklearn_is_fitted__(self) -> bool:
        return getattr(self, "_is_fitted", False)
