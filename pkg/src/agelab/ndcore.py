"""Dense float64 tensors with reverse-mode autodiff and an ADAM optimizer.

Broadcasting is never implicit: shapes of elementwise operands must agree
exactly, and rows/columns are replicated with :func:`broadcast_row` /
:func:`broadcast_col`. That keeps every backward rule a few lines long.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > 0 and 0 in arr.shape:
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def __repr__(self):
        tag = f", op={self.op}" if self.op != "leaf" else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _not_scalar(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], op: str, backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _two_d(op: str, a: Tensor) -> None:
    if a.data.ndim != 2:
        raise ShapeError(f"{op}: expected a 2-D tensor, got shape {a.shape}")


# ---------------------------------------------------------------- primitives

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _node(ad * bd, (a, b), "mul", lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("div", a, b)
    ad, bd = a.data, b.data
    if np.any(bd == 0.0):
        raise DomainError("div: zero in denominator")
    q = ad / bd
    return _node(q, (a, b), "div", lambda g: (g / bd, -g * q / bd))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), "scalar-mul", lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    return _node(a.data + c, (a,), "scalar-add", lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _two_d("matmul", a)
    _two_d("matmul", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _node(ad @ bd, (a, b), "matmul", bw)


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    """Sum all entries (0-d result) or along ``axis`` keeping a 2-D shape."""
    shape = a.shape
    if axis is None:
        return _node(np.array(a.data.sum()), (a,), "sum", lambda g: (np.full(shape, float(g)),))
    _two_d("sum", a)
    out = a.data.sum(axis=axis, keepdims=True)
    return _node(out, (a,), "sum", lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    if axis is None:
        n = a.data.size
        return _node(np.array(a.data.mean()), (a,), "mean", lambda g: (np.full(shape, float(g) / n),))
    _two_d("mean", a)
    n = shape[axis]
    out = a.data.mean(axis=axis, keepdims=True)
    return _node(out, (a,), "mean", lambda g: (np.broadcast_to(g / n, shape).copy(),))


def abs(a: Tensor) -> Tensor:  # noqa: A001
    sgn = np.sign(a.data)
    return _node(np.abs(a.data), (a,), "abs", lambda g: (g * sgn,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _node(ad * ad, (a,), "square", lambda g: (2.0 * g * ad,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("sqrt: non-positive input")
    r = np.sqrt(a.data)
    return _node(r, (a,), "sqrt", lambda g: (0.5 * g / r,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log: non-positive input")
    ad = a.data
    return _node(np.log(ad), (a,), "log", lambda g: (g / ad,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return _node(e, (a,), "exp", lambda g: (g * e,))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _node(t, (a,), "tanh", lambda g: (g * (1.0 - t * t),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    d = np.where(a.data > 0.0, 1.0, slope)
    return _node(a.data * d, (a,), "leaky-relu", lambda g: (g * d,))


def clamp_min(a: Tensor, lo: float) -> Tensor:
    keep = a.data > lo
    return _node(np.where(keep, a.data, lo), (a,), "clamp-min", lambda g: (g * keep,))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    for p in parts:
        _two_d("concat-columns", p)
    n = parts[0].shape[0]
    if any(p.shape[0] != n for p in parts):
        raise ShapeError(f"concat-columns: row mismatch {[p.shape for p in parts]}")
    edges = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=1), parts, "concat-columns", bw)


def row_slice(a: Tensor, start: int, stop: int) -> Tensor:
    _two_d("row-slice", a)
    n = a.shape[0]
    if not 0 <= start < stop <= n:
        raise ShapeError(f"row-slice: [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _node(a.data[start:stop].copy(), (a,), "row-slice", bw)


def broadcast_row(a: Tensor, n: int) -> Tensor:
    """Replicate a 1 x M row into n x M."""
    _two_d("broadcast-row", a)
    if a.shape[0] != 1:
        raise ShapeError(f"broadcast-row: expected a 1 x M row, got {a.shape}")
    out = np.repeat(a.data, n, axis=0)
    return _node(out, (a,), "broadcast-row", lambda g: (g.sum(axis=0, keepdims=True),))


def broadcast_col(a: Tensor, m: int) -> Tensor:
    """Replicate an n x 1 column into n x m."""
    _two_d("broadcast-col", a)
    if a.shape[1] != 1:
        raise ShapeError(f"broadcast-col: expected an n x 1 column, got {a.shape}")
    out = np.repeat(a.data, m, axis=1)
    return _node(out, (a,), "broadcast-col", lambda g: (g.sum(axis=1, keepdims=True),))


def custom_op(op: str, inputs: tuple[Tensor, ...], value: np.ndarray,
              backward: Callable[[np.ndarray], tuple]) -> Tensor:
    """Register a fused op; ``backward`` maps the output grad to input grads."""
    return _node(value, inputs, op, backward)


# ---------------------------------------------------------------- backward

def graph_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (inputs first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    pending: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(graph_order(root)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            pending[k] = pending[k] + pg if k in pending else pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


@contextmanager
def frozen(params: Sequence[Tensor]):
    """Temporarily exclude ``params`` from gradient tracking."""
    saved = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, s in zip(params, saved):
            p.requires_grad = s


# ---------------------------------------------------------------- ADAM

@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """Bias-corrected ADAM update in place. Gradients are left for the caller to zero."""
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {i} {p.shape} has no gradient")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    if len(state.first_moment) != len(params):
        raise ValueError("adam_step: optimizer state does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
