"""Minimal reverse-mode autodiff over dense float64 matrices.

Every value on a tape is a 2-D numpy array; scalars are (1, 1). Nodes are
appended in creation order, which is a topological order by construction,
and the backward pass walks that list in exact reverse. There is no
broadcasting: shapes must match each operation's contract exactly, and
mismatches raise ValueError naming both shapes.

The LSTM ops delegate forward and backward-through-time to the kernels
package so the compiled backend is used when available.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Node",
    "Tape",
    "matmul",
    "add",
    "subtract",
    "elementwise_mul",
    "transpose",
    "concat_cols",
    "sigmoid",
    "tanh",
    "relu",
    "frobenius_sq",
    "l1_sum",
    "scalar_scale",
    "tile_cols",
    "slice_rows",
    "expm_trace",
    "lstm_cell",
    "lstm_last",
    "backward",
    "Adam",
]


class Node:
    """One value on a tape, plus the plumbing to backpropagate through it."""

    __slots__ = ("tape", "value", "grad", "op", "parents", "requires_grad", "_vjp")

    def __init__(
        self,
        tape: "Tape",
        value: np.ndarray,
        op: str,
        parents: tuple["Node", ...],
        requires_grad: bool,
        vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None,
    ) -> None:
        self.tape = tape
        self.value = value
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ValueError(f"item() requires shape (1, 1), got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        return f"Node(op={self.op!r}, shape={self.value.shape})"


class Tape:
    """Topologically ordered record of one forward computation."""

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def leaf(self, value: np.ndarray, *, requires_grad: bool = False) -> Node:
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tape values must be 2-D, got shape {arr.shape}")
        node = Node(self, arr, "leaf", (), requires_grad, None)
        self.nodes.append(node)
        return node

    def scalar(self, value: float, *, requires_grad: bool = False) -> Node:
        return self.leaf(np.array([[float(value)]]), requires_grad=requires_grad)


def _record(
    op: str,
    value: np.ndarray,
    parents: tuple[Node, ...],
    vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]],
) -> Node:
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise ValueError(f"{op}: operands belong to different tapes")
    requires = any(p.requires_grad for p in parents)
    node = Node(tape, value, op, parents, requires, vjp if requires else None)
    tape.nodes.append(node)
    return node


def _check_same_shape(op: str, a: Node, b: Node) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shapes {a.value.shape} and {b.value.shape} differ")


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul: shapes {a.value.shape} and {b.value.shape} are not aligned"
        )
    av, bv = a.value, b.value

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return g @ bv.T, av.T @ g

    return _record("matmul", av @ bv, (a, b), vjp)


def add(a: Node, b: Node) -> Node:
    _check_same_shape("add", a, b)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return g, g

    return _record("add", a.value + b.value, (a, b), vjp)


def subtract(a: Node, b: Node) -> Node:
    _check_same_shape("subtract", a, b)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return g, -g

    return _record("subtract", a.value - b.value, (a, b), vjp)


def elementwise_mul(a: Node, b: Node) -> Node:
    _check_same_shape("elementwise_mul", a, b)
    av, bv = a.value, b.value

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return g * bv, g * av

    return _record("elementwise_mul", av * bv, (a, b), vjp)


def transpose(a: Node) -> Node:
    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g.T.copy(),)

    return _record("transpose", a.value.T.copy(), (a,), vjp)


def concat_cols(a: Node, b: Node) -> Node:
    if a.value.shape[0] != b.value.shape[0]:
        raise ValueError(
            f"concat_cols: row counts differ, {a.value.shape} vs {b.value.shape}"
        )
    split = a.value.shape[1]

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return g[:, :split].copy(), g[:, split:].copy()

    return _record("concat_cols", np.concatenate([a.value, b.value], axis=1), (a, b), vjp)


def _sigmoid_values(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(a: Node) -> Node:
    s = _sigmoid_values(a.value)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g * s * (1.0 - s),)

    return _record("sigmoid", s, (a,), vjp)


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g * (1.0 - t * t),)

    return _record("tanh", t, (a,), vjp)


def relu(a: Node) -> Node:
    # Subgradient at exactly 0 is 0 (strict mask).
    mask = a.value > 0.0

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g * mask,)

    return _record("relu", np.where(mask, a.value, 0.0), (a,), vjp)


def frobenius_sq(a: Node) -> Node:
    av = a.value
    val = np.array([[float(np.sum(av * av))]])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (2.0 * av * g[0, 0],)

    return _record("frobenius_sq", val, (a,), vjp)


def l1_sum(a: Node) -> Node:
    av = a.value
    val = np.array([[float(np.sum(np.abs(av)))]])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (np.sign(av) * g[0, 0],)

    return _record("l1_sum", val, (a,), vjp)


def scalar_scale(a: Node, s: float) -> Node:
    s = float(s)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g * s,)

    return _record("scalar_scale", a.value * s, (a,), vjp)


def tile_cols(a: Node, k: int) -> Node:
    """Repeat a single-column matrix k times along columns."""
    if a.value.shape[1] != 1:
        raise ValueError(f"tile_cols: expected shape (n, 1), got {a.value.shape}")
    if k < 1:
        raise ValueError(f"tile_cols: k must be >= 1, got {k}")

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (g.sum(axis=1, keepdims=True),)

    return _record("tile_cols", np.repeat(a.value, k, axis=1), (a,), vjp)


def slice_rows(a: Node, start: int, stop: int) -> Node:
    n = a.value.shape[0]
    if not (0 <= start < stop <= n):
        raise ValueError(f"slice_rows: [{start}, {stop}) invalid for {a.value.shape}")

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        out = np.zeros_like(a.value)
        out[start:stop] = g
        return (out,)

    return _record("slice_rows", a.value[start:stop].copy(), (a,), vjp)


def _expm(mat: np.ndarray) -> np.ndarray:
    """Matrix exponential by Taylor series, scaling-and-squaring above norm 1."""
    n = mat.shape[0]
    norm1 = float(np.abs(mat).sum(axis=0).max()) if n else 0.0
    squarings = 0
    if norm1 > 1.0:
        squarings = int(np.ceil(np.log2(norm1)))
        mat = mat / (2.0**squarings)
    out = np.eye(n)
    term = np.eye(n)
    k = 1
    while True:
        term = term @ mat / k
        out = out + term
        if np.linalg.norm(term, "fro") < 1e-14 or k > 200:
            break
        k += 1
    for _ in range(squarings):
        out = out @ out
    return out


def expm_trace(a: Node) -> Node:
    """tr(exp(A∘A)) − n, the smooth acyclicity penalty. Zero iff A∘A is nilpotent."""
    av = a.value
    n = av.shape[0]
    if av.shape[0] != av.shape[1]:
        raise ValueError(f"expm_trace: matrix must be square, got {av.shape}")
    exp_had = _expm(av * av)
    val = np.array([[float(np.trace(exp_had)) - n]])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return (exp_had.T * (2.0 * av) * g[0, 0],)

    return _record("expm_trace", val, (a,), vjp)


def _lstm_shapes(x: Node, h0: Node, c0: Node, wx: Node, wh: Node, b: Node) -> tuple[int, int]:
    n = x.value.shape[1]
    d = h0.value.shape[1]
    expect = {
        "h0": ((1, d), h0), "c0": ((1, d), c0), "wx": ((n, 4 * d), wx),
        "wh": ((d, 4 * d), wh), "b": ((1, 4 * d), b),
    }
    for name, (shape, node) in expect.items():
        if node.value.shape != shape:
            raise ValueError(f"lstm: {name} has shape {node.value.shape}, expected {shape}")
    return n, d


def _lstm_packed(x: Node, h0: Node, c0: Node, wx: Node, wh: Node, b: Node, op: str) -> Node:
    _, d = _lstm_shapes(x, h0, c0, wx, wh, b)
    xv = np.ascontiguousarray(x.value)
    h0v = np.ascontiguousarray(h0.value[0])
    c0v = np.ascontiguousarray(c0.value[0])
    wxv = np.ascontiguousarray(wx.value)
    whv = np.ascontiguousarray(wh.value)
    bv = np.ascontiguousarray(b.value[0])
    h_last, c_last, cache = kernels.lstm_forward(xv, h0v, c0v, wxv, whv, bv)
    packed = np.stack([h_last, c_last])

    def vjp(g: np.ndarray) -> tuple[np.ndarray, ...]:
        dx, dh0, dc0, dwx, dwh, db = kernels.lstm_backward(
            xv, h0v, c0v, wxv, whv, bv, cache,
            np.ascontiguousarray(g[0]), np.ascontiguousarray(g[1]),
        )
        return dx, dh0[None, :], dc0[None, :], dwx, dwh, db[None, :]

    return _record(op, packed, (x, h0, c0, wx, wh, b), vjp)


def lstm_cell(
    x: Node, h_prev: Node, c_prev: Node, wx: Node, wh: Node, b: Node
) -> tuple[Node, Node]:
    """One LSTM step. x is 1×n; returns (h, c), each 1×d, both differentiable.

    Gate layout in the packed weight matrices is [input, forget, cell, output].
    """
    if x.value.shape[0] != 1:
        raise ValueError(f"lstm_cell: x must be a single row, got {x.value.shape}")
    packed = _lstm_packed(x, h_prev, c_prev, wx, wh, b, "lstm_cell")
    return slice_rows(packed, 0, 1), slice_rows(packed, 1, 2)


def lstm_last(
    xs: Node, h0: Node, c0: Node, wx: Node, wh: Node, b: Node
) -> tuple[Node, Node]:
    """Run an LSTM over all rows of xs (T×n) and return the final (h, c).

    The whole sequence is one fused tape node; backpropagation through time
    happens inside the kernel call, which keeps epoch cost off the tape.
    """
    if xs.value.shape[0] < 1:
        raise ValueError("lstm_last: sequence must have at least one row")
    packed = _lstm_packed(xs, h0, c0, wx, wh, b, "lstm_last")
    return slice_rows(packed, 0, 1), slice_rows(packed, 1, 2)


def backward(tape: Tape, loss: Node) -> None:
    """Populate .grad on every grad-requiring node reachable from loss."""
    if loss.tape is not tape:
        raise ValueError("backward: loss node is not on this tape")
    if loss.value.shape != (1, 1):
        raise ValueError(f"backward: loss must be (1, 1), got {loss.value.shape}")
    for node in tape.nodes:
        node.grad = np.zeros_like(node.value) if node.requires_grad else None
    if not loss.requires_grad:
        return
    loss.grad = np.ones((1, 1))
    for node in reversed(tape.nodes):
        if node._vjp is None or node.grad is None:
            continue
        contribs = node._vjp(node.grad)
        for parent, contrib in zip(node.parents, contribs):
            if parent.requires_grad:
                parent.grad += contrib


class Adam:
    """Adam over a named set of arrays, updated in place.

    State is keyed by parameter name, so the same optimizer instance can be
    used across epochs while tapes are rebuilt.
    """

    def __init__(
        self,
        lr: float = 1e-2,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def clone(self) -> "Adam":
        """Independent copy, including accumulated moments and step count."""
        twin = Adam(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
        twin.t = self.t
        twin._m = {k: v.copy() for k, v in self._m.items()}
        twin._v = {k: v.copy() for k, v in self._v.items()}
        return twin

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name in sorted(params):
            g = grads[name]
            if g.shape != params[name].shape:
                raise ValueError(
                    f"adam: grad shape {g.shape} != param shape {params[name].shape}"
                    f" for {name!r}"
                )
            m = self._m.setdefault(name, np.zeros_like(g))
            v = self._v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def collect_grads(leaves: dict[str, Node]) -> dict[str, np.ndarray]:
    """Pull .grad off a dict of leaf nodes after backward()."""
    out: dict[str, np.ndarray] = {}
    for name, node in leaves.items():
        if node.grad is None:
            raise ValueError(f"collect_grads: no gradient on {name!r}")
        out[name] = node.grad
    return out


def leaf_dict(
    tape: Tape, params: dict[str, np.ndarray], trainable: Sequence[str] | None = None
) -> dict[str, Node]:
    """Wrap a parameter dict as grad-requiring leaves on a tape."""
    names = set(trainable) if trainable is not None else None
    return {
        name: tape.leaf(value, requires_grad=(names is None or name in names))
        for name, value in params.items()
    }
