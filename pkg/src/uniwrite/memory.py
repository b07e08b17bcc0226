"""Slot-based external memory with content addressing and gated writes.

The memory is a set of D slots, each a W-dimensional content vector per
batch row.  Addressing is cosine-similarity softmax sharpened by a
positive strength; writing erases and adds under a scalar gate:

    M'_d = M_d * (1 - g * w_d * e) + g * w_d * a

Reading mixes slots by the read weights.  Internally the slots are
stacked into one (batch*D, W) matrix, row ``b*D + d`` holding slot d of
batch row b, so one addressing or write touches all slots with a fixed
handful of graph operations.  Everything is built from autodiff
primitives, so a write/read cycle is differentiable end to end.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import DimensionError, NumericError

MEM_INIT = 1e-6  # small constant init keeps cosine addressing well-defined


@dataclass
class MemoryState:
    """Slot contents plus the last read vector and addressing weights."""

    content: Value                      # (batch * n_slots, width), batch-major
    n_slots: int
    read: Value                         # (batch, width)
    write_weights: Value | None = None  # (batch, n_slots)
    read_weights: Value | None = None   # (batch, n_slots)

    def slot(self, batch_index: int, d: int) -> np.ndarray:
        """Concrete content of one slot (convenience for tests/inspection)."""
        return self.content.data[batch_index * self.n_slots + d]


@dataclass
class InterfaceVector:
    """Per-step memory interface parsed from the controller output."""

    read_key: Value
    read_strength: Value
    write_key: Value
    write_strength: Value
    erase: Value
    add: Value
    write_gate: Value


def interface_width(width: int) -> int:
    """Columns the controller output must provide: two keys, two strengths,
    erase and add vectors, one gate."""
    return 4 * width + 3


def init_memory(batch: int, n_slots: int, width: int) -> MemoryState:
    content = ad.leaf(np.full((batch * n_slots, width), MEM_INIT))
    # The initial read equals a read of the fresh memory under any simplex
    # weighting (all slots are identical), so a gate-0 episode keeps the
    # read vector frozen at exactly this value.
    read = ad.leaf(np.full((batch, width), MEM_INIT))
    return MemoryState(content=content, n_slots=n_slots, read=read)


def parse_interface(o: Value, width: int) -> InterfaceVector:
    """Split a controller output row into the memory interface.

    Strengths go through softplus+1 (so they stay >= 1), erase and gate
    through sigmoid.
    """
    need = interface_width(width)
    if o.shape[1] != need:
        raise DimensionError(
            f"interface needs {need} columns for width {width}, got {o.shape}"
        )
    w = width
    return InterfaceVector(
        read_key=ad.slice_cols(o, 0, w),
        read_strength=ad.add(ad.softplus(ad.slice_cols(o, w, w + 1)), ad.leaf(1.0)),
        write_key=ad.slice_cols(o, w + 1, 2 * w + 1),
        write_strength=ad.add(ad.softplus(ad.slice_cols(o, 2 * w + 1, 2 * w + 2)), ad.leaf(1.0)),
        erase=ad.sigmoid(ad.slice_cols(o, 2 * w + 2, 3 * w + 2)),
        add=ad.slice_cols(o, 3 * w + 2, 4 * w + 2),
        write_gate=ad.sigmoid(ad.slice_cols(o, 4 * w + 2, 4 * w + 3)),
    )


def address(content: Value, n_slots: int, key: Value, strength: Value) -> Value:
    """Content addressing: softmax over strength-scaled cosine similarities.

    Returns (batch, n_slots) weights on the simplex.
    """
    if not np.all(np.isfinite(key.data)):
        raise NumericError("addressing key contains non-finite values")
    batch = key.shape[0]
    sims = ad.cosine_rows(ad.repeat_rows(key, n_slots), content)
    sims = ad.reshape(sims, batch, n_slots)
    return ad.softmax_rows(ad.mul(sims, strength))


def memory_read(content: Value, n_slots: int, weights: Value) -> Value:
    """r = sum_d weights_d * M_d."""
    batch = weights.shape[0]
    flat = ad.reshape(weights, batch * n_slots, 1)
    return ad.sum_rowblocks(ad.mul(flat, content), n_slots)


def memory_write(
    content: Value, n_slots: int, weights: Value, erase: Value, add_vec: Value, gate: Value
) -> Value:
    """Gated erase/add write; returns the new stacked content."""
    batch = weights.shape[0]
    gw = ad.reshape(ad.mul(weights, gate), batch * n_slots, 1)
    erase_rep = ad.repeat_rows(erase, n_slots)
    add_rep = ad.repeat_rows(add_vec, n_slots)
    keep = ad.sub(ad.leaf(1.0), ad.mul(gw, erase_rep))
    return ad.add(ad.mul(content, keep), ad.mul(gw, add_rep))


def write_then_read(mem: MemoryState, iface: InterfaceVector) -> MemoryState:
    """One full memory access: write against the old content, then read the
    updated memory."""
    write_w = address(mem.content, mem.n_slots, iface.write_key, iface.write_strength)
    new_content = memory_write(mem.content, mem.n_slots, write_w, iface.erase,
                               iface.add, iface.write_gate)
    read_w = address(new_content, mem.n_slots, iface.read_key, iface.read_strength)
    r = memory_read(new_content, mem.n_slots, read_w)
    return MemoryState(content=new_content, n_slots=mem.n_slots, read=r,
                       write_weights=write_w, read_weights=read_w)


def read_only(mem: MemoryState, iface: InterfaceVector) -> MemoryState:
    """Memory access without writing (decoding with writes disabled)."""
    read_w = address(mem.content, mem.n_slots, iface.read_key, iface.read_strength)
    r = memory_read(mem.content, mem.n_slots, read_w)
    return MemoryState(content=mem.content, n_slots=mem.n_slots, read=r,
                       write_weights=None, read_weights=read_w)


TRACE_HEADER = ("t", "slot", "write_w", "read_w", "gate")


def trace_rows(step: int, mem: MemoryState, gate: float, batch_index: int = 0):
    """CSV rows (one per slot) describing the memory access at ``step``."""
    n = mem.n_slots
    ww = mem.write_weights.data[batch_index] if mem.write_weights is not None else np.zeros(n)
    rw = mem.read_weights.data[batch_index] if mem.read_weights is not None else np.zeros(n)
    return [(step, d, float(ww[d]), float(rw[d]), gate) for d in range(n)]


def write_trace_csv(path, rows) -> None:
    """Dump accumulated trace rows as ``t,slot,write_w,read_w,gate``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in rows:
            writer.writerow(
                [row[0], row[1], f"{row[2]:.9f}", f"{row[3]:.9f}", f"{row[4]:.9f}"]
            )
