"""Recurrent controller cells and their output projection.

Two cell kinds are supported, a vanilla tanh RNN and an LSTM.  The read
vector coming back from external memory enters a cell by concatenation
with the current input, so a cell step computes its pre-activations from
``[x ; r]`` and the previous hidden state.  The controller output ``o``
is a learned linear map of ``[h_new ; r]`` and is what the memory
interface is parsed from.

Parameters are plain name->array dicts.  Every parameter is drawn
uniformly from ``[-s, s]`` with ``s = 1/sqrt(fan_in)``, each from an RNG
seeded by ``(seed, name)`` so that two models sharing a parameter name
get bit-identical values regardless of which other parameters exist.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import ConfigError, DimensionError

CONTROLLER_KINDS = ("rnn", "lstm")


@dataclass
class ControllerState:
    """Hidden state of a controller; ``c`` is present for LSTM cells only."""

    h: Value
    c: Value | None = None


def named_uniform(seed: int, name: str, shape: tuple[int, int], fan_in: int) -> np.ndarray:
    """Uniform[-s, s] draw with s = 1/sqrt(fan_in), seeded by (seed, name)."""
    rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, shape)


def init_controller_params(
    kind: str, x_dim: int, read_dim: int, hidden: int, seed: int
) -> dict[str, np.ndarray]:
    """Fresh parameter arrays for one controller cell."""
    if kind == "gru":
        raise ConfigError(
            "controller 'gru' is not supported here; choose 'rnn' or 'lstm'"
        )
    if kind not in CONTROLLER_KINDS:
        raise ConfigError(f"unknown controller kind {kind!r}; choose from {CONTROLLER_KINDS}")
    fan = x_dim + read_dim
    params: dict[str, np.ndarray] = {}
    if kind == "rnn":
        params["cell.W"] = named_uniform(seed, "cell.W", (fan, hidden), fan)
        params["cell.U"] = named_uniform(seed, "cell.U", (hidden, hidden), hidden)
        params["cell.b"] = named_uniform(seed, "cell.b", (1, hidden), fan)
    else:
        for gate in ("f", "i", "o", "z"):
            params[f"cell.W_{gate}"] = named_uniform(seed, f"cell.W_{gate}", (fan, hidden), fan)
            params[f"cell.U_{gate}"] = named_uniform(seed, f"cell.U_{gate}", (hidden, hidden), hidden)
            params[f"cell.b_{gate}"] = named_uniform(seed, f"cell.b_{gate}", (1, hidden), fan)
    return params


def init_projection_params(
    hidden: int, read_dim: int, out_dim: int, seed: int, prefix: str = "proj"
) -> dict[str, np.ndarray]:
    """Linear map of [h ; r] -> out_dim."""
    fan = hidden + read_dim
    return {
        f"{prefix}.W": named_uniform(seed, f"{prefix}.W", (fan, out_dim), fan),
        f"{prefix}.b": named_uniform(seed, f"{prefix}.b", (1, out_dim), fan),
    }


def initial_state(kind: str, batch: int, hidden: int) -> ControllerState:
    """All-zeros starting state."""
    h = ad.leaf(np.zeros((batch, hidden)))
    if kind == "lstm":
        return ControllerState(h=h, c=ad.leaf(np.zeros((batch, hidden))))
    return ControllerState(h=h)


def _check_dims(x: Value, r: Value, h: Value, w_rows: int) -> None:
    if x.shape[0] != h.shape[0] or r.shape[0] != h.shape[0]:
        raise DimensionError(
            f"batch sizes differ: x {x.shape}, r {r.shape}, h {h.shape}"
        )
    if x.shape[1] + r.shape[1] != w_rows:
        raise DimensionError(
            f"cell expects input width {w_rows}, got x {x.shape} + r {r.shape}"
        )


def rnn_step(params: dict[str, Value], state: ControllerState, x: Value, r: Value) -> ControllerState:
    """h' = tanh([x;r] W + h U + b)."""
    _check_dims(x, r, state.h, params["cell.W"].shape[0])
    xr = ad.concat_cols(x, r)
    pre = ad.add(ad.add(ad.matmul(xr, params["cell.W"]), ad.matmul(state.h, params["cell.U"])), params["cell.b"])
    return ControllerState(h=ad.tanh(pre))


def lstm_step(params: dict[str, Value], state: ControllerState, x: Value, r: Value) -> ControllerState:
    """Standard LSTM update: c' = f*c + i*z, h' = o*tanh(c')."""
    _check_dims(x, r, state.h, params["cell.W_f"].shape[0])
    if state.c is None:
        raise DimensionError("lstm_step needs a state carrying both h and c")
    xr = ad.concat_cols(x, r)

    def gate(tag, act):
        pre = ad.add(
            ad.add(ad.matmul(xr, params[f"cell.W_{tag}"]), ad.matmul(state.h, params[f"cell.U_{tag}"])),
            params[f"cell.b_{tag}"],
        )
        return act(pre)

    f = gate("f", ad.sigmoid)
    i = gate("i", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    z = gate("z", ad.tanh)
    c_new = ad.add(ad.mul(f, state.c), ad.mul(i, z))
    return ControllerState(h=ad.mul(o, ad.tanh(c_new)), c=c_new)


def cell_step(kind: str, params: dict[str, Value], state: ControllerState, x: Value, r: Value) -> ControllerState:
    if kind == "rnn":
        return rnn_step(params, state, x, r)
    return lstm_step(params, state, x, r)


def controller_output(
    kind: str,
    params: dict[str, Value],
    state: ControllerState,
    x: Value,
    r: Value,
    surrogate: Value | None = None,
    prefix: str = "iface",
) -> tuple[Value, ControllerState]:
    """One controller step plus the output projection.

    ``surrogate``, when given, replaces the previous hidden state inside
    the cell (used by cached-uniform writing, where an attention result
    stands in for ``h``).  Returns the output ``o = [h_new ; r] W + b``
    together with the new state.
    """
    if surrogate is not None:
        state = ControllerState(h=surrogate, c=state.c)
    new_state = cell_step(kind, params, state, x, r)
    o = ad.add(ad.matmul(ad.concat_cols(new_state.h, r), params[f"{prefix}.W"]), params[f"{prefix}.b"])
    return o, new_state


LSTM_GATES = ("f", "i", "o", "z")


class CellRunner:
    """Steps a controller with gate weights fused into one matmul.

    The per-gate parameter matrices are concatenated once (as graph
    nodes, so gradients still flow to the individual parameters) and
    every step computes all pre-activations with a single
    ``[x ; r ; h] @ W`` product.  Numerically equivalent to
    ``rnn_step``/``lstm_step`` up to float addition order.
    """

    def __init__(self, kind: str, params: dict[str, Value]):
        if kind not in CONTROLLER_KINDS:
            raise ConfigError(f"unknown controller kind {kind!r}; choose from {CONTROLLER_KINDS}")
        self.kind = kind
        self.params = params
        if kind == "rnn":
            self._W = ad.concat_rows(params["cell.W"], params["cell.U"])
            self._b = params["cell.b"]
            self._in_width = self._W.shape[0]
        else:
            self._W = ad.concat_cols(
                *[ad.concat_rows(params[f"cell.W_{g}"], params[f"cell.U_{g}"]) for g in LSTM_GATES]
            )
            self._b = ad.concat_cols(*[params[f"cell.b_{g}"] for g in LSTM_GATES])
            self._in_width = self._W.shape[0]
            self._hidden = params["cell.U_f"].shape[0]

    def step(self, state: ControllerState, x: Value, r: Value,
             surrogate: Value | None = None) -> ControllerState:
        h_prev = surrogate if surrogate is not None else state.h
        if x.shape[1] + r.shape[1] + h_prev.shape[1] != self._in_width:
            raise DimensionError(
                f"cell expects total input width {self._in_width}, got "
                f"x {x.shape} + r {r.shape} + h {h_prev.shape}"
            )
        pre = ad.add(ad.matmul(ad.concat_cols(x, r, h_prev), self._W), self._b)
        if self.kind == "rnn":
            return ControllerState(h=ad.tanh(pre))
        nh = self._hidden
        f = ad.sigmoid(ad.slice_cols(pre, 0, nh))
        i = ad.sigmoid(ad.slice_cols(pre, nh, 2 * nh))
        o = ad.sigmoid(ad.slice_cols(pre, 2 * nh, 3 * nh))
        z = ad.tanh(ad.slice_cols(pre, 3 * nh, 4 * nh))
        c_new = ad.add(ad.mul(f, state.c), ad.mul(i, z))
        return ControllerState(h=ad.mul(o, ad.tanh(c_new)), c=c_new)

    def project(self, h: Value, r: Value, prefix: str) -> Value:
        return ad.add(
            ad.matmul(ad.concat_cols(h, r), self.params[f"{prefix}.W"]),
            self.params[f"{prefix}.b"],
        )
