"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Covers exactly the operations the trajectory models need: affine maps, LSTM
gate math, dot-product attention, hinge gating, concatenation and masked
quadratic losses. A fresh computation graph is built on every forward pass
and freed afterwards; graphs never outlive the pass that created them.

All values are 64-bit floats and every operation is deterministic: identical
inputs produce bit-identical outputs.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (forward evaluation only)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """Dense float64 array with an optional gradient slot and tape hooks."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g) -> None:
        if self.grad is None:
            # g may be shared with other consumers; own a copy
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # convenience arithmetic (Tensor or python float on the right)
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_const(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_const(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_const(self, other)

    def __rmul__(self, other):
        return mul_const(self, other)

    def __neg__(self):
        return mul_const(self, -1.0)


def parameter(data, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _make(data, parents, backward_fn) -> Tensor:
    """Create an op output; records the tape only when gradients are live."""
    out = Tensor(data)
    if _GRAD_ENABLED:
        live = None
        for p in parents:
            if p.requires_grad:
                if live is None:
                    live = [p]
                else:
                    live.append(p)
        if live is not None:
            out.requires_grad = True
            out._parents = tuple(live)
            out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss, accumulating into .grad slots."""
    if loss.data.shape != ():
        raise ValueError("backward expects a scalar loss tensor")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss._accumulate(np.ones(()))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(a.data + b.data, (a, b), bwd)


def add_n(tensors) -> Tensor:
    """Sum of same-shape tensors as a single node."""
    ts = list(tensors)
    if not ts:
        raise ValueError("add_n needs at least one tensor")
    data = ts[0].data.copy()
    for t in ts[1:]:
        data += t.data

    def bwd(g):
        for t in ts:
            if t.requires_grad:
                t._accumulate(g)

    return _make(data, ts, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), bwd)


def add_const(a: Tensor, c) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)

    return _make(a.data + c, (a,), bwd)


def mul_const(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(a.data * c, (a,), bwd)


def scale_vec(s: Tensor, v: Tensor) -> Tensor:
    """Scalar tensor times vector tensor."""
    if s.data.shape != ():
        raise ValueError("scale_vec expects a scalar first argument")

    def bwd(g):
        if s.requires_grad:
            s._accumulate(np.dot(g, v.data))
        if v.requires_grad:
            v._accumulate(g * s.data)

    return _make(s.data * v.data, (s, v), bwd)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ValueError("dot expects two vectors of equal length")

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(np.dot(a.data, b.data), (a, b), bwd)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ValueError(f"matvec shape mismatch {w.data.shape} @ {x.data.shape}")

    def bwd(g):
        if w.requires_grad:
            w._accumulate(np.outer(g, x.data))
        if x.requires_grad:
            x._accumulate(w.data.T @ g)

    return _make(w.data @ x.data, (w, x), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map w @ x + b as a single node."""
    if w.data.shape[1] != x.data.shape[0] or w.data.shape[0] != b.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch w={w.data.shape} x={x.data.shape} b={b.data.shape}"
        )

    def bwd(g):
        if w.requires_grad:
            w._accumulate(np.outer(g, x.data))
        if x.requires_grad:
            x._accumulate(w.data.T @ g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(w.data @ x.data + b.data, (x, w, b), bwd)


def concat(parts) -> Tensor:
    parts = list(parts)
    if any(p.data.ndim != 1 for p in parts):
        raise ValueError("concat expects vectors")
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accumulate(g[lo:hi])

    return _make(np.concatenate([p.data for p in parts]), parts, bwd)


def slice_vec(t: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous vector slice; the output shares the parent's buffer."""
    if t.data.ndim != 1:
        raise ValueError("slice_vec expects a vector")

    def bwd(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[start:stop] += g

    return _make(t.data[start:stop], (t,), bwd)


def select(t: Tensor, index: tuple) -> Tensor:
    """Scalar element of a tensor; gradient scatters back to the selected cell."""

    def bwd(g):
        if t.requires_grad:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            t.grad[index] += g

    return _make(np.asarray(t.data[index]), (t,), bwd)


def stack_rows(rows) -> Tensor:
    """Stack equal-length vectors into a (T, H) matrix."""
    rows = list(rows)
    if not rows:
        raise ValueError("stack_rows needs at least one row")

    def bwd(g):
        for i, r in enumerate(rows):
            if r.requires_grad:
                r._accumulate(g[i])

    return _make(np.stack([r.data for r in rows]), rows, bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)

    def bwd(g):
        if t.requires_grad:
            t._accumulate(g * (1.0 - out_data * out_data))

    return _make(out_data, (t,), bwd)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # overflow-free: sigmoid(x) = (tanh(x/2) + 1) / 2
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(t: Tensor) -> Tensor:
    out_data = _sigmoid(np.atleast_1d(t.data)).reshape(t.data.shape)

    def bwd(g):
        if t.requires_grad:
            t._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (t,), bwd)


def relu(t: Tensor) -> Tensor:
    """max(x, 0) with subgradient 0 exactly at the kink."""
    mask = t.data > 0.0

    def bwd(g):
        if t.requires_grad:
            t._accumulate(g * mask)

    return _make(np.where(mask, t.data, 0.0), (t,), bwd)


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / np.sum(z)


def softmax(t: Tensor) -> Tensor:
    if t.data.ndim != 1:
        raise ValueError("softmax expects a vector")
    p = _softmax(t.data)

    def bwd(g):
        if t.requires_grad:
            t._accumulate(p * (g - np.dot(g, p)))

    return _make(p, (t,), bwd)


def attend(query: Tensor, keys: Tensor) -> Tensor:
    """Dot-product attention of a query over stacked keys (T, H) -> context (H,).

    Scores are dot products, weights their softmax, the context the
    weight-averaged keys.
    """
    if keys.data.ndim != 2 or query.data.ndim != 1 or keys.data.shape[1] != query.data.shape[0]:
        raise ValueError(f"attend shape mismatch keys={keys.data.shape} query={query.data.shape}")
    k = keys.data
    p = _softmax(k @ query.data)
    ctx = p @ k

    def bwd(g):
        gp = k @ g
        ds = p * (gp - np.dot(gp, p))
        if query.requires_grad:
            query._accumulate(k.T @ ds)
        if keys.requires_grad:
            keys._accumulate(np.outer(p, g) + np.outer(ds, query.data))

    return _make(ctx, (query, keys), bwd)
