"""Dense float64 tensors with reverse-mode differentiation.

The compute graph is define-by-run: every operation creates a fresh node
holding references to its inputs, a forward closure (for replay) and a
backward closure (local gradient rule). `backward` topologically sorts the
graph from the loss node and accumulates gradients in reverse order.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an operation's calling contract is violated."""


def _as_f64(values) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    return arr


class Tensor:
    """A dense real-valued array, optionally tracked for gradients.

    `values` is a C-contiguous float64 ndarray. `grad` is populated (same
    shape) by `backward`. Tensors are immutable after construction except
    for grad accumulation; training code replaces `values` wholesale
    between steps rather than mutating live graph nodes.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward",
                 "_forward", "_op")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_f64(values)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._forward: Callable[[], np.ndarray] | None = None
        self._op: str = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() requires a scalar, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Copy of the values with no graph history and no grad tracking."""
        return Tensor(self.values.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op!r}{flag})"

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def ones(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape), requires_grad=requires_grad)


def _node(op: str, values: np.ndarray, parents: Sequence[Tensor],
          backward: Callable[[np.ndarray], None],
          forward: Callable[[], np.ndarray]) -> Tensor:
    out = Tensor(values)
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = tuple(parents)
    out._backward = backward
    out._forward = forward
    out._op = op
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


class ComputationTape:
    """Topologically ordered record of the operations behind one tensor.

    Entry order guarantees every node's parents appear before it. `replay`
    re-executes each forward closure in order and verifies bit-identical
    values, which pins down forward determinism.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @staticmethod
    def from_tensor(out: Tensor) -> "ComputationTape":
        order: list[Tensor] = []
        seen: set[int] = set()
        # Iterative DFS: graphs from batched training exceed the default
        # Python recursion limit.
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return ComputationTape(order)

    def replay(self) -> bool:
        """Recompute every non-leaf node; True iff all values match bit-exactly."""
        for node in self.nodes:
            if node._forward is None:
                continue
            fresh = node._forward()
            if not np.array_equal(fresh, node.values):
                return False
            node.values = fresh
        return True

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor) -> None:
    """Populate `grad` on every tensor reachable from a scalar loss."""
    if loss.values.size != 1:
        raise ContractError(
            f"backward requires a scalar loss, got shape {loss.shape}")
    tape = ComputationTape.from_tensor(loss)
    for node in tape:
        node.grad = None
    loss.grad = np.ones_like(loss.values)
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None and node.requires_grad:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")

    def fwd() -> np.ndarray:
        return a.values @ b.values

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g @ b.values.T)
        if b.requires_grad:
            _accumulate(b, a.values.T @ g)

    return _node("matmul", fwd(), (a, b), bwd, fwd)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")

    def fwd() -> np.ndarray:
        return np.ascontiguousarray(a.values.T)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g.T)

    return _node("transpose", fwd(), (a,), bwd, fwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-D right operand broadcasts across rows."""
    broadcast = a.values.ndim == 2 and b.values.ndim == 1
    if broadcast:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"add: cannot broadcast {b.shape} across {a.shape}")
    elif a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")

    def fwd() -> np.ndarray:
        return a.values + b.values

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0) if broadcast else g)

    return _node("add", fwd(), (a, b), bwd, fwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shape mismatch {a.shape} vs {b.shape}")

    def fwd() -> np.ndarray:
        return a.values * b.values

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * b.values)
        if b.requires_grad:
            _accumulate(b, g * a.values)

    return _node("mul", fwd(), (a, b), bwd, fwd)


def neg(a: Tensor) -> Tensor:
    def fwd() -> np.ndarray:
        return -a.values

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, -g)

    return _node("neg", fwd(), (a,), bwd, fwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def fwd() -> np.ndarray:
        return a.values * c

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * c)

    return _node("scale", fwd(), (a,), bwd, fwd)


def log(a: Tensor) -> Tensor:
    def fwd() -> np.ndarray:
        return np.log(a.values)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g / a.values)

    return _node("log", fwd(), (a,), bwd, fwd)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient passes only where a > floor."""
    floor = float(floor)

    def fwd() -> np.ndarray:
        return np.maximum(a.values, floor)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * (a.values > floor))

    return _node("clamp_min", fwd(), (a,), bwd, fwd)


_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error gelu; smooth, so finite differences behave."""

    def fwd() -> np.ndarray:
        x = a.values
        return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            x = a.values
            cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
            _accumulate(a, g * (cdf + x * pdf))

    return _node("gelu", fwd(), (a,), bwd, fwd)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    if x.values.ndim != 2:
        raise ShapeError(f"softmax_rows: expected a matrix, got shape {x.shape}")

    def fwd() -> np.ndarray:
        shifted = x.values - x.values.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    out = fwd()

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            p = out_node.values
            inner = (g * p).sum(axis=1, keepdims=True)
            _accumulate(x, p * (g - inner))

    out_node = _node("softmax_rows", out, (x,), bwd, fwd)
    return out_node


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} vs {b.shape}")
    p = a.shape[1]

    def fwd() -> np.ndarray:
        return np.concatenate([a.values, b.values], axis=1)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g[:, :p])
        if b.requires_grad:
            _accumulate(b, g[:, p:])

    return _node("concat_cols", fwd(), (a, b), bwd, fwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.values.ndim != 2 or not (0 <= start <= stop <= a.shape[1]):
        raise ShapeError(
            f"slice_cols: [{start},{stop}) out of range for shape {a.shape}")

    def fwd() -> np.ndarray:
        return np.ascontiguousarray(a.values[:, start:stop])

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.values)
            full[:, start:stop] = g
            _accumulate(a, full)

    return _node("slice_cols", fwd(), (a,), bwd, fwd)


def layer_norm_rows(x: Tensor, gamma: Tensor, beta: Tensor,
                    eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift.

    The denominator is sqrt(var + eps) with population variance (divide by
    n), so a constant row maps to all zeros under gamma=1, beta=0.
    """
    if x.values.ndim != 2:
        raise ShapeError(f"layer_norm_rows: expected a matrix, got {x.shape}")
    n = x.shape[1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm_rows: gamma/beta must have shape ({n},), "
            f"got {gamma.shape} and {beta.shape}")

    def stats():
        mean = x.values.mean(axis=1, keepdims=True)
        var = x.values.var(axis=1, keepdims=True)
        std = np.sqrt(var + eps)
        xhat = (x.values - mean) / std
        return std, xhat

    def fwd() -> np.ndarray:
        _, xhat = stats()
        return xhat * gamma.values + beta.values

    def bwd(g: np.ndarray) -> None:
        std, xhat = stats()
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=0))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=0))
        if x.requires_grad:
            gy = g * gamma.values
            m1 = gy.mean(axis=1, keepdims=True)
            m2 = (gy * xhat).mean(axis=1, keepdims=True)
            _accumulate(x, (gy - m1 - xhat * m2) / std)

    return _node("layer_norm_rows", fwd(), (x, gamma, beta), bwd, fwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with b broadcast across rows."""
    if x.values.ndim != 2 or w.values.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: incompatible shapes {x.shape} x {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine: bias shape {b.shape} != ({w.shape[1]},)")

    def fwd() -> np.ndarray:
        return x.values @ w.values + b.values

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            _accumulate(x, g @ w.values.T)
        if w.requires_grad:
            _accumulate(w, x.values.T @ g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0))

    return _node("affine", fwd(), (x, w, b), bwd, fwd)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of `table` by index; gradients scatter-add back."""
    idx = np.asarray(list(ids), dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("embedding: ids must be a flat sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractError(
            f"embedding: id out of range [0,{table.shape[0]}) in {idx.tolist()}")

    def fwd() -> np.ndarray:
        return table.values[idx].copy()

    def bwd(g: np.ndarray) -> None:
        if table.requires_grad:
            full = np.zeros_like(table.values)
            np.add.at(full, idx, g)
            _accumulate(table, full)

    return _node("embedding", fwd(), (table,), bwd, fwd)


def sum_all(a: Tensor) -> Tensor:
    def fwd() -> np.ndarray:
        return np.array([[a.values.sum()]])

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.full_like(a.values, g.reshape(-1)[0]))

    return _node("sum_all", fwd(), (a,), bwd, fwd)


def add_all(terms: Iterable[Tensor]) -> Tensor:
    """Left fold of `add` over same-shape tensors."""
    terms = list(terms)
    if not terms:
        raise ContractError("add_all: need at least one term")
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return acc
