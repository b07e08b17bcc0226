"""Write schedules and episode semantics for the four writing policies.

``regular`` writes at every encoding step, ``uniform`` every
``floor(T/(D+1))`` steps, ``random`` at binomially sampled steps with
p = (D+1)/T, and ``cuw`` (cached uniform writing) writes every L steps
after attending over a cache of the hidden states accumulated since the
previous write.  Between writes the read vector is carried over
unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import memory as mem_mod
from .autodiff import Value
from .controllers import ControllerState
from .errors import ConfigError, ContractError, StateError

POLICIES = ("regular", "uniform", "random", "cuw")


@dataclass(frozen=True)
class WriteSchedule:
    """Ordered write timesteps over a length-T encoding phase."""

    length: int
    n_slots: int
    policy: str
    write_steps: tuple[int, ...]

    def __post_init__(self):
        prev = 0
        for t in self.write_steps:
            if not (1 <= t <= self.length) or t <= prev:
                raise ContractError(
                    f"write steps must be strictly increasing within [1, {self.length}]: "
                    f"{self.write_steps}"
                )
            prev = t

    @property
    def intervals(self) -> list[int]:
        """Gaps between consecutive writes, plus the tail up to T.

        The final entry is 0 when the last write lands on T; the list
        always sums to T.
        """
        out, prev = [], 0
        for t in self.write_steps:
            out.append(t - prev)
            prev = t
        out.append(self.length - prev)
        return out

    def csv_row(self, cache_size: int | None = None) -> str:
        steps = " ".join(str(t) for t in self.write_steps)
        cache = "" if cache_size is None else str(cache_size)
        return f"{self.policy},{self.length},{self.n_slots},{cache},{steps}"


def regular_schedule(length: int, n_slots: int) -> WriteSchedule:
    steps = () if n_slots == 0 else tuple(range(1, length + 1))
    return WriteSchedule(length, n_slots, "regular", steps)


def uniform_schedule(length: int, n_slots: int) -> WriteSchedule:
    """Writes at multiples of floor(T/(D+1)); degrades to regular writing
    when the interval floors to zero, and to no writes at all when there
    are no slots."""
    if length < 1 or n_slots < 0:
        raise ConfigError(f"need length >= 1 and slots >= 0, got {length}, {n_slots}")
    if n_slots == 0:
        return WriteSchedule(length, 0, "uniform", ())
    interval = length // (n_slots + 1)
    if interval == 0:
        return WriteSchedule(length, n_slots, "uniform", tuple(range(1, length + 1)))
    return WriteSchedule(length, n_slots, "uniform", tuple(range(interval, length + 1, interval)))


def random_schedule(length: int, n_slots: int, seed: int) -> WriteSchedule:
    """Each step is independently a write with p = (D+1)/T."""
    p = (n_slots + 1) / length
    if p > 1.0:
        raise ConfigError(
            f"write probability (D+1)/T = {p:.3f} exceeds 1 for D={n_slots}, T={length}"
        )
    rng = np.random.default_rng(seed)
    mask = rng.random(length) < p
    return WriteSchedule(length, n_slots, "random", tuple(int(i) + 1 for i in np.nonzero(mask)[0]))


def cuw_schedule(length: int, n_slots: int, cache_size: int) -> WriteSchedule:
    """Write steps implied by `t mod L == 0`; the episode loop enforces
    the same rule, this object exists for counting and dumping."""
    _check_cache_size(length, n_slots, cache_size)
    return WriteSchedule(length, n_slots, "cuw", tuple(range(cache_size, length + 1, cache_size)))


def _check_cache_size(length: int, n_slots: int, cache_size: int) -> None:
    top = max(1, length // (n_slots + 1))
    if not (1 <= cache_size <= top):
        raise ConfigError(
            f"cache size must lie in [1, {top}] for T={length}, D={n_slots}; got {cache_size}"
        )


def build_schedule(policy: str, length: int, n_slots: int, seed: int = 0,
                   cache_size: int | None = None) -> WriteSchedule:
    if policy == "regular":
        return regular_schedule(length, n_slots)
    if policy == "uniform":
        return uniform_schedule(length, n_slots)
    if policy == "random":
        return random_schedule(length, n_slots, seed)
    if policy == "cuw":
        if cache_size is None:
            cache_size = max(1, length // (n_slots + 1))
        return cuw_schedule(length, n_slots, cache_size)
    raise ConfigError(f"unknown policy {policy!r}; choose from {POLICIES}")


class CacheBuffer:
    """Bounded queue of controller hidden states, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"cache capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Value] = []

    def push(self, h: Value) -> None:
        if len(self._items) >= self.capacity:
            raise StateError(f"cache overflow: capacity {self.capacity} exceeded")
        self._items.append(h)

    def clear(self) -> None:
        self._items = []

    @property
    def items(self) -> list[Value]:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)


def cache_attention(cache: CacheBuffer, h_prev: Value, r_prev: Value,
                    params: dict[str, Value]) -> tuple[Value, Value]:
    """Soft selection of a representative cached state.

    Scores each cache element d_j with v' tanh(W h + U d_j + V r), then
    returns the softmax-weighted mixture together with the weights.
    """
    items = cache.items
    if not items:
        raise StateError("cache_attention on an empty cache")
    hq = ad.matmul(h_prev, params["att.W"])
    rq = ad.matmul(r_prev, params["att.V"])
    scores = []
    for d in items:
        s = ad.tanh(ad.add(ad.add(hq, ad.matmul(d, params["att.U"])), rq))
        scores.append(ad.matmul(s, params["att.v"]))
    alpha = ad.softmax_rows(ad.concat_cols(*scores))
    out = None
    for j, d in enumerate(items):
        term = ad.mul(ad.slice_cols(alpha, j, j + 1), d)
        out = term if out is None else ad.add(out, term)
    return out, alpha


@dataclass
class EpisodeTrace:
    """Bookkeeping collected while running an episode."""

    write_steps: list[int] = field(default_factory=list)
    rows: list[tuple] = field(default_factory=list)          # (t, slot, write_w, read_w, gate)
    gates: list[float] = field(default_factory=list)         # batch element 0
    reads: list[Value] = field(default_factory=list)         # r_t after each step
    cache_sizes: list[int] = field(default_factory=list)     # cache length after each step
    cached_at_writes: list[list[Value]] = field(default_factory=list)
    memory_writes: int = 0


def run_episode(
    model,
    xs: list[Value],
    policy: str,
    schedule: WriteSchedule | None = None,
    cache_size: int | None = None,
) -> tuple[ControllerState, mem_mod.MemoryState, EpisodeTrace]:
    """Encode a sequence under one writing policy.

    ``model`` must provide ``param_values`` (name -> Value), ``n_slots``,
    ``slot_width``, ``fresh_state``/``fresh_memory`` and the cell-driving
    methods ``step(state, x, r, surrogate=None)`` and
    ``output(state, x, r, surrogate=None) -> (o, state)``.  ``xs`` is the
    list of per-step input Values.  For schedule-driven policies the
    schedule's length must match ``len(xs)``; for cuw a cache of
    ``cache_size`` is attended and cleared at every write
    (``t mod L == 0``).
    """
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}; choose from {POLICIES}")
    steps = len(xs)
    batch = xs[0].shape[0] if xs else 1
    params = model.param_values
    state = model.fresh_state(batch)
    mem = model.fresh_memory(batch)
    trace = EpisodeTrace()

    if policy == "cuw":
        if cache_size is None:
            raise ConfigError("cuw needs a cache size")
        _check_cache_size(steps, mem.n_slots, cache_size)
        cache = CacheBuffer(cache_size)
        for t, x in enumerate(xs, start=1):
            cache.push(state.h)
            if t % cache_size == 0 and mem.n_slots > 0:
                cached = cache.items
                a, _ = cache_attention(cache, state.h, mem.read, params)
                o, state = model.output(state, x, mem.read, surrogate=a)
                iface = mem_mod.parse_interface(o, model.slot_width)
                mem = mem_mod.write_then_read(mem, iface)
                cache.clear()
                trace.memory_writes += 1
                trace.write_steps.append(t)
                trace.cached_at_writes.append(cached)
                gate = float(iface.write_gate.data[0, 0])
                trace.gates.append(gate)
                trace.rows.extend(mem_mod.trace_rows(t, mem, gate))
            else:
                state = model.step(state, x, mem.read)
            trace.reads.append(mem.read)
            trace.cache_sizes.append(len(cache))
        return state, mem, trace

    if schedule is None:
        schedule = build_schedule(policy, steps, model.n_slots)
    if schedule.length != steps:
        raise ContractError(
            f"schedule length {schedule.length} does not match sequence length {steps}"
        )
    writes = set(schedule.write_steps)
    for t, x in enumerate(xs, start=1):
        if t in writes and mem.n_slots > 0:
            o, state = model.output(state, x, mem.read)
            iface = mem_mod.parse_interface(o, model.slot_width)
            mem = mem_mod.write_then_read(mem, iface)
            trace.memory_writes += 1
            trace.write_steps.append(t)
            gate = float(iface.write_gate.data[0, 0])
            trace.gates.append(gate)
            trace.rows.extend(mem_mod.trace_rows(t, mem, gate))
        else:
            state = model.step(state, x, mem.read)
        trace.reads.append(mem.read)
    return state, mem, trace
