"""Dense tensors with reverse-mode automatic differentiation.

Just enough machinery for the transceiver networks: batched matmul, the
usual elementwise ops, softmax / layer norm / logsumexp with fused
backward rules, embedding lookup, and the glue ops (reshape, transpose,
concat, slice, gather). Arrays are numpy, float32 by default; a graph is
recorded only while gradients are enabled and at least one input is
tracked.

Broadcasting is deliberately narrow: two operands must have equal shapes
or one shape must be a suffix of the other (so a ``(d,)`` bias expands
across leading batch axes, and scalars combine with anything). Anything
else is a shape error, named after the op that raised it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operands do not conform; message names the op and both shapes."""


class NonFiniteGradientError(RuntimeError):
    """An optimizer step was refused because a gradient had NaN/Inf."""


_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (eval-mode forward)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def grad_enabled() -> bool:
    return _GRAD_ENABLED[-1]


class Tensor:
    """A dense n-d array, optionally participating in the gradient graph.

    ``grad`` is populated by :func:`backward` and has the same shape as
    ``data``. Tensors built by ops remember their parents and a
    vector-Jacobian closure; leaves have neither.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, grad={self.requires_grad})"

    # operator sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False, dtype=dtype)


def _make(op: str, data: np.ndarray, parents: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    track = grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _check_suffix(op: str, a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    if len(sa) >= len(sb) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} neither match nor suffix-broadcast")


def _reduce_to(shape: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    """Sum g over the leading axes introduced by suffix broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and broadcast arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix("add", a, b)
    data = a.data + b.data

    def vjp(g):
        return _reduce_to(a.shape, g), _reduce_to(b.shape, g)

    return _make("add", data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix("sub", a, b)
    data = a.data - b.data

    def vjp(g):
        return _reduce_to(a.shape, g), _reduce_to(b.shape, -g)

    return _make("sub", data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix("mul", a, b)
    data = a.data * b.data

    def vjp(g):
        return _reduce_to(a.shape, g * b.data), _reduce_to(b.shape, g * a.data)

    return _make("mul", data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_suffix("div", a, b)
    data = a.data / b.data

    def vjp(g):
        ga = _reduce_to(a.shape, g / b.data)
        gb = _reduce_to(b.shape, -g * a.data / (b.data * b.data))
        return ga, gb

    return _make("div", data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0).astype(a.dtype)

    def vjp(g):
        return (g * mask,)

    return _make("relu", data, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def vjp(g):
        return (g * data,)

    return _make("exp", data, (a,), vjp)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _make("log", data, (a,), vjp)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def vjp(g):
        return (g * (0.5 / data),)

    return _make("sqrt", data, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: (..., n, m) @ (m, p), or equal leading dims on both."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} and {b.shape}")
    if b.data.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: leading dims differ for {a.shape} and {b.shape}")
    data = np.matmul(a.data, b.data)

    def vjp(g):
        if b.data.ndim == 2:
            ga = np.matmul(g, b.data.T)
            m, p = b.shape
            gb = np.matmul(a.data.reshape(-1, m).T, g.reshape(-1, p))
        else:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
        return ga, gb

    return _make("matmul", data, (a, b), vjp)


# ---------------------------------------------------------------------------
# reductions and normalizations

def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, a.data.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return _make("sum", data, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _axis_tuple(axis, a.data.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).astype(a.dtype) / count,)

    return _make("mean", data, (a,), vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _make("softmax", data, (a,), vjp)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = m + np.log(s)
    soft = e / s
    if not keepdims:
        data = np.squeeze(data, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _make("logsumexp", data, (a,), vjp)


def layer_norm(a: Tensor, axis: int = -1, eps: float = 1e-6) -> Tensor:
    """Normalize to zero mean / unit variance along ``axis`` (no affine)."""
    mu = a.data.mean(axis=axis, keepdims=True)
    var = a.data.var(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((a.data - mu) * inv).astype(a.dtype)

    def vjp(g):
        gm = g.mean(axis=axis, keepdims=True)
        gx = (g * xhat).mean(axis=axis, keepdims=True)
        return ((inv * (g - gm - xhat * gx)).astype(a.dtype),)

    return _make("layer_norm", xhat, (a,), vjp)


# ---------------------------------------------------------------------------
# structural ops

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _make("reshape", data, (a,), vjp)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _make("transpose", data, (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return _make("concat", data, tuple(tensors), vjp)


def slice_axis(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    axis = axis % a.data.ndim
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = np.ascontiguousarray(a.data[idx])

    def vjp(g):
        full = np.zeros(a.shape, dtype=a.dtype)
        full[idx] = g
        return (full,)

    return _make("slice", data, (a,), vjp)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` (V, E) selected by integer array ``ids`` (...)."""
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or (ids.size and ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: ids out of range for table {table.shape}")
    data = table.data[ids]

    def vjp(g):
        gt = np.zeros(table.shape, dtype=table.dtype)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _make("embedding", data, (table,), vjp)


def gather_last(a: Tensor, indices: np.ndarray) -> Tensor:
    """out[..., ] = a[..., indices[...]]; indices shaped like a minus last axis."""
    indices = np.asarray(indices)
    if indices.shape != a.shape[:-1]:
        raise ShapeError(
            f"gather_last: indices {indices.shape} must match {a.shape[:-1]}")
    data = np.take_along_axis(a.data, indices[..., None], axis=-1)[..., 0]

    def vjp(g):
        ga = np.zeros(a.shape, dtype=a.dtype)
        np.put_along_axis(ga, indices[..., None], g[..., None], axis=-1)
        return (ga,)

    return _make("gather", data, (a,), vjp)


def dropout(a: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when rate == 0 or not training."""
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng")
    mask = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    data = a.data * mask

    def vjp(g):
        return (g * mask,)

    return _make("dropout", data, (a,), vjp)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked tensor reachable from ``loss``.

    ``loss`` must be a scalar (size 1). Nodes are visited exactly once in
    reverse topological order.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not require grad")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(g, dtype=parent.dtype)
            else:
                parent.grad = parent.grad + np.asarray(g, dtype=parent.dtype)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimizers

def _check_finite(grads: Sequence[np.ndarray]) -> None:
    for i, g in enumerate(grads):
        if g is None:
            raise NonFiniteGradientError(f"parameter {i} has no gradient")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient in parameter {i}; step refused")


def sgd_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], lr: float) -> None:
    """p <- p - lr * g, in place."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    _check_finite(grads)
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"sgd_step: param {p.shape} vs grad {g.shape}")
        p.data -= np.asarray(lr, dtype=p.dtype) * g


def adam_state(params: Sequence[Tensor]) -> dict:
    return {
        "t": 0,
        "m": [np.zeros(p.shape, dtype=p.dtype) for p in params],
        "v": [np.zeros(p.shape, dtype=p.dtype) for p in params],
    }


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: dict,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard Adam moment recursion with bias correction, in place."""
    _check_finite(grads)
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param {p.shape} vs grad {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        mhat = m / bc1
        vhat = v / bc2
        p.data -= np.asarray(lr, dtype=p.dtype) * mhat / (np.sqrt(vhat) + eps)


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
                 dtype=DEFAULT_DTYPE) -> Tensor:
    """Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True, dtype=dtype)
