"""Memorization-capacity calculus for slot-memory recurrent networks.

A write schedule splits a length-T sequence into intervals l_1..l_{D+1}.
Under a geometric per-step contribution decay with rate ``lam`` the
average retained contribution has the lower bound

    I = (C / T) * sum_i f(l_i),      f(x) = (1 - lam**x) / (1 - lam)

with f(x) = x at lam = 1.  For 0 < lam <= 1 the bound is maximized by
equal intervals T/(D+1) (concave f, Jensen), giving the closed form

    g(T, D) = C * (D+1) / T * (1 - lam**(T/(D+1))) / (1 - lam)

and for lam > 1 the same equal split is the minimizer.  This module
provides both the closed forms and brute-force enumeration oracles, plus
empirical per-input contribution profiles ||d h_T / d x_i|| computed by
reverse-mode differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .controllers import cell_step, initial_state
from .errors import ContractError, SizeError
from .writing import WriteSchedule

ENUMERATION_CAP = 10**6
PROFILE_CAP = 20_000  # max T * hidden-dim for a contribution profile

NORMS = ("fro", "inf", "spectral")


@dataclass(frozen=True)
class DecayParams:
    """Decay rate and contribution constant of the bound."""

    lam: float
    c: float = 1.0

    def __post_init__(self):
        if self.lam <= 0 or self.c <= 0:
            raise ContractError(f"decay rate and constant must be positive, got {self}")


@dataclass(frozen=True)
class ContributionProfile:
    """Per-position gradient norms c_{i,T} for i = 1..T."""

    values: np.ndarray
    norm: str

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ContractError("contribution norms cannot be negative")


def f_lambda(x: float, lam: float) -> float:
    """Per-interval contribution kernel; linear in x at lam = 1."""
    if lam == 1.0:
        return float(x)
    return (1.0 - lam**x) / (1.0 - lam)


def _intervals_of(schedule) -> tuple[list[float], float]:
    if isinstance(schedule, WriteSchedule):
        ivs = schedule.intervals
        return ivs, float(schedule.length)
    ivs = list(schedule)
    return ivs, float(sum(ivs))


def avg_contribution(schedule, params: DecayParams) -> float:
    """Interval-form bound (C/T) * sum_i f(l_i).

    ``schedule`` is a WriteSchedule or a plain list of (possibly real)
    interval lengths.  Zero-length intervals contribute nothing.
    """
    if isinstance(schedule, WriteSchedule) and schedule.n_slots > 0 and not schedule.write_steps:
        raise ContractError(
            f"schedule with {schedule.n_slots} slots has no write steps"
        )
    intervals, total = _intervals_of(schedule)
    if not intervals or total <= 0:
        raise ContractError("schedule must cover at least one timestep")
    acc = 0.0
    for l in intervals:
        if l < 0:
            raise ContractError(f"negative interval {l} in schedule")
        if l > 0:
            acc += f_lambda(l, params.lam)
    return params.c * acc / total


def avg_contribution_raw(schedule: WriteSchedule, params: DecayParams) -> float:
    """Independent oracle: the raw double sum of lambda powers.

    Sums lam**(K_i - t) for every step t up to its segment's write step
    (the final segment decays toward T).  Must agree with the interval
    form to high precision.
    """
    boundaries = list(schedule.write_steps)
    if not boundaries or boundaries[-1] != schedule.length:
        boundaries.append(schedule.length)
    acc, prev = 0.0, 0
    for k in boundaries:
        for t in range(prev + 1, k + 1):
            acc += params.lam ** (k - t)
        prev = k
    return params.c * acc / schedule.length


def optimal_intervals(length: int, n_slots: int) -> list[float]:
    """The real-valued equal split: D+1 intervals of T/(D+1)."""
    if length < 1 or n_slots < 0:
        raise ContractError(f"need length >= 1 and slots >= 0, got {length}, {n_slots}")
    return [length / (n_slots + 1)] * (n_slots + 1)


def g_lambda_max(length: int, n_slots: int, params: DecayParams) -> float:
    """Closed-form bound value of the equal split."""
    if params.lam == 1.0:
        return params.c
    per = length / (n_slots + 1)
    return params.c * (n_slots + 1) / length * (1.0 - params.lam**per) / (1.0 - params.lam)


def brute_force_best_schedule(
    length: int, n_slots: int, params: DecayParams
) -> tuple[WriteSchedule, float]:
    """Exhaustive search over all placements of D writes in 1..T-1.

    Returns the schedule attaining the maximum bound for lam <= 1 and the
    minimum for lam > 1 (first in lexicographic order on ties).
    """
    n_placements = math.comb(length - 1, n_slots)
    if n_placements > ENUMERATION_CAP:
        raise SizeError(
            f"{n_placements} placements exceed the enumeration cap of {ENUMERATION_CAP}"
        )
    maximize = params.lam <= 1.0
    best_steps, best_val = None, None
    for steps in combinations(range(1, length), n_slots):
        sched = WriteSchedule(length, n_slots, "enumerated", steps)
        val = avg_contribution(sched, params)
        if best_val is None or (val > best_val if maximize else val < best_val):
            best_steps, best_val = steps, val
    return WriteSchedule(length, n_slots, "enumerated", best_steps), best_val


def lambda_c_linear(U: np.ndarray, norm: str = "inf") -> float:
    """Decay rate of the linear recurrence h_t = W x_t + U h_{t-1} + b,
    i.e. the chosen consistent norm of U."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ContractError(f"U must be square, got shape {U.shape}")
    if norm == "inf":
        return float(np.abs(U).sum(axis=1).max())
    if norm == "fro":
        return float(np.linalg.norm(U, "fro"))
    raise ContractError(f"unknown norm {norm!r}; choose 'inf' or 'fro'")


# ---------------------------------------------------------------------------
# empirical contribution profiles


def linear_rollout(W: np.ndarray, U: np.ndarray, b: np.ndarray | None = None):
    """Builder for the linear recurrence h_t = W x_t + U h_{t-1} (+ b)."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    hidden = U.shape[0]

    def build(xs: list[Value]) -> Value:
        h = ad.leaf(np.zeros((xs[0].shape[0], hidden)))
        wv, uv = ad.leaf(W), ad.leaf(U)
        bv = ad.leaf(b) if b is not None else None
        for x in xs:
            h = ad.add(ad.matmul(x, wv), ad.matmul(h, uv))
            if bv is not None:
                h = ad.add(h, bv)
        return h

    return build


def controller_rollout(kind: str, params: dict[str, np.ndarray], hidden: int):
    """Builder running a memory-less controller (zero-width read vector)."""

    def build(xs: list[Value]) -> Value:
        batch = xs[0].shape[0]
        values = {name: ad.leaf(arr) for name, arr in params.items()}
        state = initial_state(kind, batch, hidden)
        empty = ad.leaf(np.zeros((batch, 0)))
        for x in xs:
            state = cell_step(kind, values, state, x, empty)
        return state.h

    return build


def _jacobian_norm(jac: np.ndarray, norm: str) -> float:
    if norm == "fro":
        return float(np.sqrt((jac**2).sum()))
    if norm == "inf":
        return float(np.abs(jac).sum(axis=1).max()) if jac.size else 0.0
    if norm == "spectral":
        return float(np.linalg.norm(jac, 2))
    raise ContractError(f"unknown norm {norm!r}; choose from {NORMS}")


def contribution_profile(model, xs, norm: str = "fro") -> ContributionProfile:
    """Per-input contribution c_{i,T} = ||d h_T / d x_i|| for i = 1..T.

    ``model`` is a callable mapping a list of per-step leaf Values to the
    final hidden state (1 x hidden).  One backward pass per hidden
    coordinate assembles the full Jacobian for every position at once.
    """
    if norm not in NORMS:
        raise ContractError(f"unknown norm {norm!r}; choose from {NORMS}")
    arrays = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in xs]
    steps = len(arrays)
    if any(a.shape[0] != 1 for a in arrays):
        raise ContractError("contribution profiles run on single sequences (batch 1)")
    leaves = [ad.leaf(a) for a in arrays]
    h_final = model(leaves)
    hidden = h_final.shape[1]
    if steps * hidden > PROFILE_CAP:
        raise SizeError(
            f"profile of T={steps}, hidden={hidden} exceeds the budget of "
            f"{PROFILE_CAP} position-coordinates"
        )

    x_dim = arrays[0].shape[1]
    jac = np.zeros((steps, hidden, x_dim))
    for k in range(hidden):
        leaves = [ad.leaf(a) for a in arrays]
        h_final = model(leaves)
        seed = np.zeros((1, hidden))
        seed[0, k] = 1.0
        ad.backward(h_final, seed=seed)
        for i, x in enumerate(leaves):
            jac[i, k, :] = ad.grad_of(x)[0]
    values = np.array([_jacobian_norm(jac[i], norm) for i in range(steps)])
    return ContributionProfile(values=values, norm=norm)
