"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A `Tape` records a define-by-run graph: every operation appends a `Node`
holding the forward value and a closure that pushes the upstream gradient
into the node's parents.  Graphs are small (a few thousand nodes) and are
rebuilt from scratch for every mini-batch, so nothing is retained between
steps.  Everything runs in float64: the correlation quotients downstream
are too ill-conditioned near decorrelation for float32.

Scalars are 1x1 matrices, column vectors are Nx1.  There is no general
broadcasting; a scalar or row vector is expanded over rows by multiplying
with a constant column of ones (see `broadcast_rows` in models.py).
"""

from __future__ import annotations

import math
import weakref
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericalDomainError

__all__ = ["Tensor", "Node", "Tape", "UNARY_OPS"]

_DIV_GUARD = 1e-300


class Tensor:
    """Immutable dense 2-D float64 matrix.

    Construction copies the input, coerces scalars to 1x1 and 1-D
    sequences to Nx1 columns, and rejects NaN/Inf entries.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        if isinstance(data, Tensor):
            self.data = data.data
            return
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensors are 2-D; got array of ndim {arr.ndim}")
        if not np.isfinite(arr).all():
            raise NumericalDomainError("tensor entries must be finite (NaN/Inf rejected)")
        arr.flags.writeable = False
        self.data = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Node:
    """One recorded operation result on a tape.

    `tape` is a weak proxy: nodes must not keep their tape alive, or the
    tape <-> nodes cycle would park megabytes of buffers until a cyclic GC
    pass (array payloads are invisible to the collector's heuristics).
    """

    __slots__ = ("tape", "idx", "op", "value", "grad", "needs_grad", "_backward")

    def __init__(self, tape: "Tape", idx: int, op: str, value: np.ndarray,
                 needs_grad: bool, backward: Callable[[np.ndarray], None] | None):
        self.tape = tape
        self.idx = idx
        self.op = op
        self.value = value
        self.grad: np.ndarray | None = None
        self.needs_grad = needs_grad
        self._backward = backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ContractError(f"item() requires a 1x1 node, got {self.value.shape}")
        return float(self.value[0, 0])

    # Operator sugar for readability in model/regularizer code.  Operands
    # must be nodes on the same tape; plain numbers are not lifted.
    def __add__(self, other: "Node") -> "Node":
        return self.tape.add(self, other)

    def __sub__(self, other: "Node") -> "Node":
        return self.tape.sub(self, other)

    def __mul__(self, other: "Node") -> "Node":
        return self.tape.mul(self, other)

    def __truediv__(self, other: "Node") -> "Node":
        return self.tape.div(self, other)

    def __matmul__(self, other: "Node") -> "Node":
        return self.tape.matmul(self, other)

    def __repr__(self) -> str:
        return f"Node({self.op}, shape={self.value.shape}, idx={self.idx})"


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _gelu(x: np.ndarray):
    # tanh approximation; the tanh value is saved for the backward pass
    t = np.tanh(_GELU_C * x * (1.0 + _GELU_A * (x * x)))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x: np.ndarray, out: np.ndarray, g: np.ndarray, t) -> np.ndarray:
    inner = _GELU_C * (1.0 + 3.0 * _GELU_A * (x * x))
    return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * inner)


def _sqrt_forward(x: np.ndarray) -> np.ndarray:
    if (x < 0).any():
        raise NumericalDomainError("sqrt of a negative entry")
    return np.sqrt(x)


def _log_forward(x: np.ndarray) -> np.ndarray:
    if (x <= 0).any():
        raise NumericalDomainError("log of a non-positive entry")
    return np.log(x)


# name -> (forward, grad).  forward(x) returns the output array, optionally
# as (output, saved_context); grad(x, out, upstream, ctx) returns the input
# gradient.  abs and relu use subgradient 0 at x == 0.
UNARY_OPS: dict[str, tuple[Callable, Callable]] = {
    "abs": (np.abs, lambda x, out, g, ctx: g * np.sign(x)),
    "sqrt": (_sqrt_forward, lambda x, out, g, ctx: g / (2.0 * out)),
    "exp": (np.exp, lambda x, out, g, ctx: g * out),
    "log": (_log_forward, lambda x, out, g, ctx: g / x),
    "sigmoid": (_stable_sigmoid, lambda x, out, g, ctx: g * out * (1.0 - out)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, out, g, ctx: g * (x > 0)),
    "gelu": (_gelu, _gelu_grad),
    "elu": (lambda x: np.where(x > 0, x, np.expm1(x)),
            lambda x, out, g, ctx: g * np.where(x > 0, 1.0, out + 1.0)),
    "sin": (np.sin, lambda x, out, g, ctx: g * np.cos(x)),
    "cos": (np.cos, lambda x, out, g, ctx: -g * np.sin(x)),
    "square": (np.square, lambda x, out, g, ctx: g * 2.0 * x),
}

_REDUCE_AXES = ("rows", "cols", "all")


class Tape:
    """Define-by-run computation graph.

    Nodes reference earlier nodes only, so a single reverse sweep over the
    construction order is a valid reverse-topological traversal.  A tape is
    single-threaded; distinct tapes are fully independent.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: list[Node] = []
        self._proxy = weakref.proxy(self)

    # ------------------------------------------------------------------
    # Leaves
    # ------------------------------------------------------------------

    def _append(self, op: str, value: np.ndarray, needs_grad: bool,
                backward: Callable[[np.ndarray], None] | None) -> Node:
        node = Node(self._proxy, len(self.nodes), op, value, needs_grad, backward)
        self.nodes.append(node)
        return node

    def constant(self, value) -> Node:
        """A leaf that needs no gradient (data batches, masks, ones)."""
        return self._append("const", Tensor(value).data, False, None)

    def param(self, value) -> Node:
        """A trainable leaf; backward() guarantees it ends up with a gradient.

        The array is referenced, not copied: callers must not mutate it while
        the tape is in use (the training loop updates parameters only after
        backward has finished with a step's tape).
        """
        if isinstance(value, Tensor):
            arr = value.data
        else:
            arr = np.asarray(value, dtype=np.float64)
            if arr.ndim != 2:
                arr = Tensor(value).data  # scalar/1-D coercion path (copies)
            elif not np.isfinite(arr).all():
                raise NumericalDomainError("parameter entries must be finite")
        node = self._append("param", arr, True, None)
        self.params.append(node)
        return node

    # ------------------------------------------------------------------
    # Operations
    # ------------------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.shape[1] != b.value.shape[0]:
            raise DimensionError(
                f"matmul: inner dimensions differ, {a.value.shape} x {b.value.shape}")
        out = self._append("matmul", a.value @ b.value,
                           a.needs_grad or b.needs_grad, None)

        def backward(g: np.ndarray) -> None:
            if a.needs_grad:
                a._accumulate(g @ b.value.T)
            if b.needs_grad:
                b._accumulate(a.value.T @ g)

        out._backward = backward
        return out

    def _binary(self, op: str, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise DimensionError(
                f"{op}: operand shapes differ, {a.value.shape} vs {b.value.shape}")
        if op == "add":
            val = a.value + b.value

            def backward(g):
                if a.needs_grad:
                    a._accumulate(g)
                if b.needs_grad:
                    b._accumulate(g)
        elif op == "sub":
            val = a.value - b.value

            def backward(g):
                if a.needs_grad:
                    a._accumulate(g)
                if b.needs_grad:
                    b._accumulate(-g)
        elif op == "mul":
            val = a.value * b.value

            def backward(g):
                if a.needs_grad:
                    a._accumulate(g * b.value)
                if b.needs_grad:
                    b._accumulate(g * a.value)
        elif op == "div":
            if np.abs(b.value).min() < _DIV_GUARD:
                raise NumericalDomainError(
                    f"div: denominator magnitude below {_DIV_GUARD}")
            val = a.value / b.value

            def backward(g):
                if a.needs_grad:
                    a._accumulate(g / b.value)
                if b.needs_grad:
                    b._accumulate(-g * val / b.value)
        else:  # pragma: no cover - internal misuse
            raise ValueError(f"unknown binary op {op!r}")
        out = self._append(op, val, a.needs_grad or b.needs_grad, backward)
        return out

    def add(self, a: Node, b: Node) -> Node:
        return self._binary("add", a, b)

    def sub(self, a: Node, b: Node) -> Node:
        return self._binary("sub", a, b)

    def mul(self, a: Node, b: Node) -> Node:
        return self._binary("mul", a, b)

    def div(self, a: Node, b: Node) -> Node:
        return self._binary("div", a, b)

    def apply(self, op: str, a: Node) -> Node:
        """Apply a registered elementwise unary op by name."""
        try:
            forward, grad = UNARY_OPS[op]
        except KeyError:
            raise ValueError(f"unknown unary op {op!r} (have {sorted(UNARY_OPS)})")
        result = forward(a.value)
        val, ctx = result if isinstance(result, tuple) else (result, None)

        def backward(g):
            if a.needs_grad:
                a._accumulate(grad(a.value, val, g, ctx))

        return self._append(op, val, a.needs_grad, backward)

    def __getattr__(self, name: str):
        # tape.relu(x), tape.abs(x), ... for every registered unary op.
        if name in UNARY_OPS:
            return lambda a: self.apply(name, a)
        raise AttributeError(name)

    def reduce(self, op: str, a: Node, axis: str = "all") -> Node:
        if op not in ("sum", "mean"):
            raise ValueError(f"reduce op must be sum or mean, got {op!r}")
        if axis not in _REDUCE_AXES:
            raise ValueError(f"axis must be one of {_REDUCE_AXES}, got {axis!r}")
        rows, cols = a.value.shape
        if axis == "all":
            val = np.array([[a.value.sum()]])
            count = rows * cols
        elif axis == "rows":
            val = a.value.sum(axis=0, keepdims=True)
            count = rows
        else:
            val = a.value.sum(axis=1, keepdims=True)
            count = cols
        scale = 1.0 / count if op == "mean" else 1.0
        if op == "mean":
            val = val * scale

        def backward(g):
            if a.needs_grad:
                a._accumulate(np.broadcast_to(g, a.value.shape) * scale)

        return self._append(f"{op}_{axis}", val, a.needs_grad, backward)

    def sum(self, a: Node, axis: str = "all") -> Node:
        return self.reduce("sum", a, axis)

    def mean(self, a: Node, axis: str = "all") -> Node:
        return self.reduce("mean", a, axis)

    def transpose(self, a: Node) -> Node:
        def backward(g):
            if a.needs_grad:
                a._accumulate(g.T)

        return self._append("transpose", a.value.T.copy(), a.needs_grad, backward)

    def concat_cols(self, columns: Sequence[Node]) -> Node:
        """Stack equal-height blocks side by side into one matrix."""
        if not columns:
            raise ContractError("concat_cols needs at least one column")
        rows = columns[0].value.shape[0]
        for c in columns:
            if c.value.shape[0] != rows:
                raise DimensionError(
                    f"concat_cols: row counts differ, {rows} vs {c.value.shape[0]}")
        val = np.concatenate([c.value for c in columns], axis=1)
        offsets = np.cumsum([0] + [c.value.shape[1] for c in columns])

        def backward(g):
            for c, lo, hi in zip(columns, offsets[:-1], offsets[1:]):
                if c.needs_grad:
                    c._accumulate(g[:, lo:hi])

        needs = any(c.needs_grad for c in columns)
        return self._append("concat_cols", val, needs, backward)

    # ------------------------------------------------------------------
    # Backward
    # ------------------------------------------------------------------

    def backward(self, root: Node) -> None:
        """Reverse sweep from a scalar root; gradients accumulate over fan-out.

        Every parameter node ends up with a gradient of its own shape, zero
        if the root does not depend on it.
        """
        if root.value.shape != (1, 1):
            raise ContractError(
                f"backward root must be a 1x1 scalar, got shape {root.value.shape}")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones((1, 1))
        for node in reversed(self.nodes[: root.idx + 1]):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.value)
