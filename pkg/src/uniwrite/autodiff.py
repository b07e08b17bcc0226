"""Reverse-mode automatic differentiation over dense float64 matrices.

Every tensor is a 2-D array: rows are the batch dimension, columns are
features.  Operations build a dynamic graph of :class:`Value` nodes and
compute their result eagerly, so constructing an expression *is* the
forward pass.  ``evaluate`` replays the forward computation (useful after
mutating leaf data in place), ``backward`` runs one reverse sweep and
returns the adjoints of the leaves.

The primitive set is deliberately small: matrix multiply, broadcasted
elementwise arithmetic, scalar scaling, tanh / sigmoid / softplus,
row-wise softmax, concatenate / slice / reshape / block ops, sum and
mean reductions, a fused mean squared error, a fused softmax
cross-entropy (log-sum-exp stabilised) and a fused row-wise cosine
similarity.  Each primitive carries a hand-written vector-Jacobian
product that is checked against central finite differences in the test
suite.
"""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NumericError, StateError

_counter = itertools.count()


class Value:
    """One node of the computation graph.

    ``data`` is the forward result, ``grad`` the adjoint (allocated lazily
    and therefore all-zeros before a backward pass), ``op`` a tag naming
    the primitive that produced the node and ``parents`` the operand
    nodes.  Leaf nodes have no parents.
    """

    __slots__ = ("data", "grad", "op", "parents", "_vjp", "_fwd", "_consumed", "_seq")

    def __init__(self, data, op="leaf", parents=()):
        self.data = data
        self.grad = None
        self.op = op
        self.parents = parents
        self._vjp = None
        self._fwd = None
        self._consumed = False
        self._seq = next(_counter)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Value(op={self.op!r}, shape={self.data.shape})"

    # Arithmetic sugar; floats are promoted to 1x1 constant leaves so that
    # expressions like ``1.0 - gate`` broadcast naturally.
    def __add__(self, other):
        return add(self, _as_value(other))

    def __radd__(self, other):
        return add(_as_value(other), self)

    def __sub__(self, other):
        return sub(self, _as_value(other))

    def __rsub__(self, other):
        return sub(_as_value(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def leaf(data) -> Value:
    """Wrap an array (or scalar) as a graph leaf, coerced to 2-D float64."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        if arr.ndim > 2:
            raise DimensionError(f"leaf data must be at most 2-D, got shape {arr.shape}")
        arr = np.atleast_2d(arr)
    return Value(arr)


def _as_value(x) -> Value:
    if isinstance(x, Value):
        return x
    return leaf(x)


def _check_broadcast(a: Value, b: Value, op: str) -> None:
    sa, sb = a.data.shape, b.data.shape
    if sa != sb and not (
        (sa[0] == sb[0] or sa[0] == 1 or sb[0] == 1)
        and (sa[1] == sb[1] or sa[1] == 1 or sb[1] == 1)
    ):
        raise DimensionError(f"{op}: shapes {sa} and {sb} do not broadcast")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and grad.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


# ---------------------------------------------------------------------------
# primitives


def add(a: Value, b: Value) -> Value:
    _check_broadcast(a, b, "add")
    out = Value(a.data + b.data, "add", (a, b))
    out._fwd = lambda: a.data + b.data
    if a.data.shape == b.data.shape:
        out._vjp = lambda g: (g, g)
    else:
        out._vjp = lambda g: (
            _unbroadcast(g, a.data.shape),
            _unbroadcast(g, b.data.shape),
        )
    return out


def sub(a: Value, b: Value) -> Value:
    _check_broadcast(a, b, "sub")
    out = Value(a.data - b.data, "sub", (a, b))
    out._fwd = lambda: a.data - b.data
    out._vjp = lambda g: (_unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape))
    return out


def mul(a: Value, b: Value) -> Value:
    _check_broadcast(a, b, "mul")
    out = Value(a.data * b.data, "mul", (a, b))
    out._fwd = lambda: a.data * b.data
    out._vjp = lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape),
    )
    return out


def scale(a: Value, k: float) -> Value:
    out = Value(a.data * k, "scale", (a,))
    out._fwd = lambda: a.data * k
    out._vjp = lambda g: (g * k,)
    return out


def matmul(a: Value, b: Value) -> Value:
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {a.data.shape} @ {b.data.shape}"
        )
    out = Value(a.data @ b.data, "matmul", (a, b))
    out._fwd = lambda: a.data @ b.data
    out._vjp = lambda g: (g @ b.data.T, a.data.T @ g)
    return out


def tanh(a: Value) -> Value:
    out = Value(np.tanh(a.data), "tanh", (a,))
    out._fwd = lambda: np.tanh(a.data)
    out._vjp = lambda g: (g * (1.0 - out.data**2),)
    return out


def sigmoid(a: Value) -> Value:
    out = Value(expit(a.data), "sigmoid", (a,))
    out._fwd = lambda: expit(a.data)
    out._vjp = lambda g: (g * out.data * (1.0 - out.data),)
    return out


def softplus(a: Value) -> Value:
    out = Value(np.logaddexp(0.0, a.data), "softplus", (a,))
    out._fwd = lambda: np.logaddexp(0.0, a.data)
    out._vjp = lambda g: (g * expit(a.data),)
    return out


def softmax_rows(a: Value) -> Value:
    def fwd():
        shifted = a.data - a.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    out = Value(fwd(), "softmax", (a,))
    out._fwd = fwd

    def vjp(g):
        y = out.data
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    out._vjp = vjp
    return out


def concat_cols(*parts: Value) -> Value:
    rows = parts[0].data.shape[0]
    for p in parts[1:]:
        if p.data.shape[0] != rows:
            raise DimensionError(
                f"concat: row counts differ, {parts[0].data.shape} vs {p.data.shape}"
            )
    widths = [p.data.shape[1] for p in parts]
    out = Value(np.concatenate([p.data for p in parts], axis=1), "concat", tuple(parts))
    out._fwd = lambda: np.concatenate([p.data for p in parts], axis=1)

    def vjp(g):
        grads, lo = [], 0
        for w in widths:
            grads.append(g[:, lo : lo + w])
            lo += w
        return tuple(grads)

    out._vjp = vjp
    return out


def concat_rows(*parts: Value) -> Value:
    cols = parts[0].data.shape[1]
    for p in parts[1:]:
        if p.data.shape[1] != cols:
            raise DimensionError(
                f"concat_rows: column counts differ, {parts[0].data.shape} vs {p.data.shape}"
            )
    heights = [p.data.shape[0] for p in parts]
    out = Value(np.concatenate([p.data for p in parts], axis=0), "concat_rows", tuple(parts))
    out._fwd = lambda: np.concatenate([p.data for p in parts], axis=0)

    def vjp(g):
        grads, lo = [], 0
        for h in heights:
            grads.append(g[lo : lo + h, :])
            lo += h
        return tuple(grads)

    out._vjp = vjp
    return out


def slice_cols(a: Value, lo: int, hi: int) -> Value:
    if not (0 <= lo < hi <= a.data.shape[1]):
        raise DimensionError(
            f"slice: columns [{lo}:{hi}] out of range for shape {a.data.shape}"
        )
    out = Value(a.data[:, lo:hi].copy(), "slice", (a,))
    out._fwd = lambda: a.data[:, lo:hi].copy()

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        return (full,)

    out._vjp = vjp
    return out


def reshape(a: Value, rows: int, cols: int) -> Value:
    if rows * cols != a.data.size:
        raise DimensionError(
            f"reshape: cannot view {a.data.shape} as ({rows}, {cols})"
        )
    shape = a.data.shape
    out = Value(a.data.reshape(rows, cols), "reshape", (a,))
    out._fwd = lambda: a.data.reshape(rows, cols)
    out._vjp = lambda g: (g.reshape(shape),)
    return out


def repeat_rows(a: Value, k: int) -> Value:
    """Repeat each row k times in place: row i maps to rows i*k .. i*k+k-1."""
    if k < 1:
        raise DimensionError(f"repeat_rows: k must be >= 1, got {k}")
    rows, cols = a.data.shape
    out = Value(np.repeat(a.data, k, axis=0), "repeat_rows", (a,))
    out._fwd = lambda: np.repeat(a.data, k, axis=0)
    out._vjp = lambda g: (g.reshape(rows, k, cols).sum(axis=1),)
    return out


def sum_rowblocks(a: Value, k: int) -> Value:
    """Sum each consecutive block of k rows: (n*k, c) -> (n, c)."""
    rows, cols = a.data.shape
    if k < 1 or rows % k:
        raise DimensionError(f"sum_rowblocks: {rows} rows do not split into blocks of {k}")
    out = Value(a.data.reshape(rows // k, k, cols).sum(axis=1), "sum_rowblocks", (a,))
    out._fwd = lambda: a.data.reshape(rows // k, k, cols).sum(axis=1)
    out._vjp = lambda g: (np.repeat(g, k, axis=0),)
    return out


def sum_all(a: Value) -> Value:
    out = Value(np.array([[a.data.sum()]]), "sum", (a,))
    out._fwd = lambda: np.array([[a.data.sum()]])
    out._vjp = lambda g: (np.full_like(a.data, g[0, 0]),)
    return out


def mean_all(a: Value) -> Value:
    n = a.data.size
    out = Value(np.array([[a.data.mean()]]), "mean", (a,))
    out._fwd = lambda: np.array([[a.data.mean()]])
    out._vjp = lambda g: (np.full_like(a.data, g[0, 0] / n),)
    return out


def squared_error(pred: Value, target: Value) -> Value:
    """Mean of elementwise squared differences, as a 1x1 node."""
    if pred.data.shape != target.data.shape:
        raise DimensionError(
            f"squared_error: shapes differ, {pred.data.shape} vs {target.data.shape}"
        )
    n = pred.data.size
    out = Value(
        np.array([[np.mean((pred.data - target.data) ** 2)]]),
        "squared_error",
        (pred, target),
    )
    out._fwd = lambda: np.array([[np.mean((pred.data - target.data) ** 2)]])

    def vjp(g):
        d = (2.0 * g[0, 0] / n) * (pred.data - target.data)
        return (d, -d)

    out._vjp = vjp
    return out


def softmax_xent(logits: Value, onehot: Value) -> Value:
    """Cross-entropy of row-wise softmax against one-hot targets.

    Fused for stability: uses log-sum-exp with max subtraction.  Returns
    the mean over rows as a 1x1 node.
    """
    if logits.data.shape != onehot.data.shape:
        raise DimensionError(
            f"softmax_xent: shapes differ, {logits.data.shape} vs {onehot.data.shape}"
        )
    rows = logits.data.shape[0]
    cache = {}

    def fwd():
        x = logits.data
        m = x.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
        logp = x - lse
        cache["softmax"] = np.exp(logp)
        cache["logp"] = logp
        return np.array([[-(onehot.data * logp).sum() / rows]])

    out = Value(fwd(), "softmax_xent", (logits, onehot))
    out._fwd = fwd

    def vjp(g):
        s = g[0, 0] / rows
        return (
            s * (cache["softmax"] * onehot.data.sum(axis=1, keepdims=True) - onehot.data),
            -s * cache["logp"],
        )

    out._vjp = vjp
    return out


COSINE_EPS = 1e-8


def cosine_rows(a: Value, b: Value) -> Value:
    """Row-wise cosine similarity, one column of output per row pair.

    Denominators carry an additive epsilon so zero-norm rows yield
    similarity 0 instead of NaN.
    """
    if a.data.shape != b.data.shape:
        raise DimensionError(
            f"cosine: shapes differ, {a.data.shape} vs {b.data.shape}"
        )
    cache = {}

    def fwd():
        na = np.sqrt((a.data**2).sum(axis=1, keepdims=True))
        nb = np.sqrt((b.data**2).sum(axis=1, keepdims=True))
        s = (a.data * b.data).sum(axis=1, keepdims=True)
        denom = na * nb + COSINE_EPS
        cache.update(na=na, nb=nb, s=s, denom=denom)
        return s / denom

    out = Value(fwd(), "cosine", (a, b))
    out._fwd = fwd

    def vjp(g):
        na, nb = cache["na"], cache["nb"]
        s, denom = cache["s"], cache["denom"]
        coeff = s / denom**2
        ga = g * (b.data / denom - coeff * nb * a.data / np.maximum(na, 1e-30))
        gb = g * (a.data / denom - coeff * na * b.data / np.maximum(nb, 1e-30))
        return (ga, gb)

    out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# tape, evaluation, backward


def topo_order(root: Value) -> list[Value]:
    """All nodes reachable from ``root``, parents before children.

    Construction order is already topological (operands exist before the
    node that uses them), so this is reachability plus a sort on the
    per-node sequence number.
    """
    seen = {id(root)}
    nodes = [root]
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node.parents:
            if id(p) not in seen:
                seen.add(id(p))
                nodes.append(p)
                stack.append(p)
    nodes.sort(key=lambda v: v._seq)
    return nodes


class Tape:
    """Topologically ordered nodes of one forward pass, rooted at ``root``.

    A tape supports exactly one backward sweep per forward pass; calling
    ``evaluate`` again re-runs the forward computation and re-arms it.
    """

    def __init__(self, root: Value):
        self.root = root
        self.order = topo_order(root)

    def forward(self) -> Value:
        for node in self.order:
            if node.parents:
                node.data = node._fwd()
            elif node.data is None:
                raise StateError(f"leaf {node!r} has no data assigned")
            node.grad = None
            node._consumed = False
        return self.root


def evaluate(root: Value) -> Value:
    """(Re-)run the forward pass for the graph rooted at ``root``.

    Operations compute their result when constructed, so a freshly built
    graph is already evaluated; this replays the computation (after leaf
    data changed in place) and re-arms the graph for a backward pass.
    """
    return Tape(root).forward()


def backward(root: Value, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
    """Reverse sweep from ``root``; returns a map ``id(leaf) -> adjoint``.

    ``root`` must be 1x1 unless a ``seed`` adjoint of matching shape is
    supplied.  Adjoints accumulate over all paths, so a leaf used k times
    receives the sum of its k path contributions.  Each forward pass
    supports one backward pass; re-run ``evaluate`` to take another.
    """
    if root.data is None:
        raise StateError("backward before forward: root has no data")
    if root._consumed:
        raise StateError("backward already ran for this forward pass; call evaluate first")
    if seed is None:
        if root.data.shape != (1, 1):
            raise ContractError(
                f"non-scalar root of shape {root.data.shape} needs an explicit seed"
            )
        seed = np.ones((1, 1))
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != root.data.shape:
            raise DimensionError(
                f"seed shape {seed.shape} does not match root shape {root.data.shape}"
            )

    order = topo_order(root)
    root.grad = seed.copy()
    root._consumed = True
    leaves: dict[int, Value] = {}
    for node in reversed(order):
        if not node.parents:
            leaves[id(node)] = node
            continue
        if node.grad is None:
            continue
        for parent, g in zip(node.parents, node._vjp(node.grad)):
            if parent.grad is None:
                # copy: the vjp may hand back an array it still aliases
                parent.grad = np.array(g)
            else:
                parent.grad += g
    return {
        key: (node.grad if node.grad is not None else np.zeros_like(node.data))
        for key, node in leaves.items()
    }


def grad_of(leaf_node: Value) -> np.ndarray:
    """Adjoint of a leaf after ``backward``; zeros if it was unreachable."""
    if leaf_node.grad is None:
        return np.zeros_like(leaf_node.data)
    return leaf_node.grad


def grad_check(
    fn: Callable[[dict[str, Value]], Value],
    point: dict[str, np.ndarray],
    step: float = 1e-5,
) -> float:
    """Compare analytic gradients of ``fn`` with central finite differences.

    ``fn`` receives a dict of named leaf Values and must return a scalar
    (1x1) node.  Returns the max over all coordinates of
    ``|analytic - central| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")
    leaves = {name: leaf(np.array(arr, dtype=np.float64)) for name, arr in point.items()}
    root = fn(leaves)
    if root.data.shape != (1, 1):
        raise ContractError(f"grad_check needs a scalar function, got {root.data.shape}")
    tape = Tape(root)
    tape.forward()
    backward(root)
    analytic = {name: grad_of(v).copy() for name, v in leaves.items()}

    worst = 0.0
    for name, v in leaves.items():
        arr = v.data
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            f_plus = tape.forward().data[0, 0]
            arr[idx] = orig - step
            f_minus = tape.forward().data[0, 0]
            arr[idx] = orig
            central = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name][idx]
            if not (np.isfinite(central) and np.isfinite(a)):
                raise NumericError(
                    f"non-finite value in grad check at {name}{list(idx)}: "
                    f"analytic={a}, central={central}"
                )
            err = abs(a - central) / max(1.0, abs(a))
            if err > worst:
                worst = err
    tape.forward()
    return worst
