"""Dense tensors with tape-based reverse-mode differentiation.

Every value flowing through the model is a :class:`Tensor` wrapping a numpy
array laid out as ``[batch, length, channels]``.  Operations record a backward
closure and a monotonically increasing sequence number, so :func:`backward`
can replay the recorded ops in exact reverse execution order.
"""

from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError, DimensionError, NumericError, UsageError

_SEQ = itertools.count()
_GRAD_ENABLED = True
_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation mode)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_seq")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if arr.ndim > 3:
            raise DimensionError(f"tensors are rank 0-3, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"
        self._seq = next(_SEQ)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_non_scalar(self.shape)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def _raise_non_scalar(shape):
    raise UsageError(f"item() needs a single-element tensor, got shape {shape}")


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _make(op: str, value: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor(value)
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def custom_op(op: str, value: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Register a user-defined primitive.

    ``backward(g)`` must return one gradient array (or None) per parent.
    """
    return _make(op, np.asarray(value), parents, backward)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    if a.ndim != b.ndim and min(a.ndim, b.ndim) > 1:
        raise DimensionError(f"{op}: cannot broadcast {sa} with {sb} (rank mismatch)")
    lo = sa if a.ndim <= b.ndim else sb
    hi = sb if a.ndim <= b.ndim else sa
    lo = (1,) * (len(hi) - len(lo)) + tuple(lo)
    for x, y in zip(lo, hi):
        if x != y and 1 not in (x, y):
            raise DimensionError(f"{op}: cannot broadcast {sa} with {sb}")


# ---------------------------------------------------------------------------
# elementwise binary ops
# ---------------------------------------------------------------------------


def _binary(op, a, b, fwd, da, db):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _check_broadcast(op, a.data, b.data)
    av, bv = a.data, b.data
    value = fwd(av, bv)

    def backward(g):
        return (
            _unbroadcast(da(g, av, bv), av.shape) if a.requires_grad else None,
            _unbroadcast(db(g, av, bv), bv.shape) if b.requires_grad else None,
        )

    return _make(op, value, (a, b), backward)


def add(a, b) -> Tensor:
    return _binary("add", a, b, np.add, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Tensor:
    return _binary("sub", a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> Tensor:
    return _binary("mul", a, b, np.multiply, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Tensor:
    return _binary(
        "div", a, b, np.divide, lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y)
    )


# ---------------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------------


def _unary(op, x: Tensor, value: np.ndarray, dfn) -> Tensor:
    xv = x.data

    def backward(g):
        return (dfn(g, xv, value),)

    return _make(op, value, (x,), backward)


def exp(x: Tensor) -> Tensor:
    return _unary("exp", x, np.exp(x.data), lambda g, x_, y: g * y)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log of non-positive value")
    return _unary("log", x, np.log(x.data), lambda g, x_, y: g / x_)


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NumericError("sqrt of negative value")
    return _unary("sqrt", x, np.sqrt(x.data), lambda g, x_, y: g * 0.5 / y)


def power(x: Tensor, p: float) -> Tensor:
    """``x ** p`` for a constant real exponent (x > 0 unless p is an integer)."""
    return _unary("power", x, np.power(x.data, p), lambda g, x_, y: g * p * np.power(x_, p - 1))


def tanh(x: Tensor) -> Tensor:
    return _unary("tanh", x, np.tanh(x.data), lambda g, x_, y: g * (1.0 - y * y))


def sigmoid(x: Tensor) -> Tensor:
    return _unary("sigmoid", x, expit(x.data), lambda g, x_, y: g * y * (1.0 - y))


def softplus(x: Tensor) -> Tensor:
    return _unary("softplus", x, np.logaddexp(0.0, x.data), lambda g, x_, y: g * expit(x_))


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    xv = x.data
    cdf = 0.5 * (1.0 + erf(xv / _SQRT_2))
    value = xv * cdf

    def backward(g):
        return (g * (cdf + xv * _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)),)

    return _make("gelu", value.astype(xv.dtype, copy=False), (x,), backward)


def silu(x: Tensor) -> Tensor:
    return mul(x, sigmoid(x))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    xv = x.data
    inside = (xv >= lo) & (xv <= hi)
    return _unary("clamp", x, np.clip(xv, lo, hi), lambda g, x_, y: g * inside)


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    value = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", np.asarray(value), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def mean_pool(x: Tensor) -> Tensor:
    """Average over the length axis: ``[B, L, C] -> [B, 1, C]``."""
    return mean(x, axis=-2, keepdims=True)


def avg_pool_channels(x: Tensor) -> Tensor:
    """Average over the channel axis: ``[B, L, C] -> [B, L, 1]``."""
    return mean(x, axis=-1, keepdims=True)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return _make("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise DimensionError(f"transpose needs rank >= 2, got {x.shape}")
    return _make("transpose", np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reverse(x: Tensor, axis: int = -2) -> Tensor:
    """Flip along ``axis`` (default: the length axis)."""
    return _make("reverse", np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis).copy(),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    value = np.concatenate([x.data for x in xs], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple(p if x.requires_grad else None for p, x in zip(parts, xs))

    return _make("concat", value, xs, backward)


def take(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``[start:stop]`` along ``axis``."""
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[idx] = g
        return (full,)

    return _make("take", x.data[idx].copy(), (x,), backward)


def split(x: Tensor, n: int, axis: int = -1) -> list[Tensor]:
    size = x.shape[axis]
    if size % n:
        raise DimensionError(f"cannot split extent {size} into {n} equal parts")
    step = size // n
    return [take(x, i * step, (i + 1) * step, axis=axis) for i in range(n)]


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; batch axes broadcast."""
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    value = np.matmul(av, bv)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape)
        if b.requires_grad:
            if av.ndim == 3 and bv.ndim == 2:
                gb = np.tensordot(av, g, axes=([0, 1], [0, 1]))
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape)
        return ga, gb

    return _make("matmul", value, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


def softmax_lastdim(x: Tensor, scale: float = 1.0) -> Tensor:
    """Row softmax of ``scale * x`` over the last axis, max-subtracted."""
    if np.any(np.isnan(x.data)):
        raise NumericError("softmax input contains NaN")
    if x.shape[-1] < 1:
        raise DimensionError("softmax over an empty axis")
    z = x.data * scale
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (scale * y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _make("softmax", y, (x,), backward)


softmax = softmax_lastdim


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    value = z - lse

    def backward(g):
        p = np.exp(value)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _make("log_softmax", value, (x,), backward)


# ---------------------------------------------------------------------------
# sequence ops
# ---------------------------------------------------------------------------


def _shifted_stack(xp: np.ndarray, k: int, length: int, dilation: int) -> np.ndarray:
    # [B, L, k*C] with tap-major ordering
    return np.concatenate([xp[:, j * dilation : j * dilation + length, :] for j in range(k)], axis=-1)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Zero-padded "same" 1-D convolution along the length axis.

    ``x`` is ``[B, L, C_in]``, ``kernel`` is ``[k, C_in, C_out]`` with odd k.
    """
    k, c_in, c_out = kernel.shape
    if k % 2 == 0:
        raise ConfigError(f"conv1d kernel size must be odd, got {k}")
    if x.ndim != 3 or x.shape[-1] != c_in:
        raise DimensionError(f"conv1d input {x.shape} incompatible with kernel {kernel.shape}")
    bsz, length, _ = x.shape
    pad = dilation * (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    cols = _shifted_stack(xp, k, length, dilation)
    w2 = kernel.data.reshape(k * c_in, c_out)
    value = cols @ w2

    def backward(g):
        gx = gk = None
        if kernel.requires_grad:
            gk = np.tensordot(cols, g, axes=([0, 1], [0, 1])).reshape(k, c_in, c_out)
        if x.requires_grad:
            gcols = g @ w2.T
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * dilation : j * dilation + length, :] += gcols[:, :, j * c_in : (j + 1) * c_in]
            gx = gxp[:, pad : pad + length, :]
        return gx, gk

    out = _make("conv1d", value, (x, kernel), backward)
    return out if bias is None else add(out, bias)


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-sample depthwise "same" convolution.

    ``x`` is ``[B, L, C]``; ``kernel`` is ``[B, k, C]`` (or ``[k, C]`` shared
    across the batch) holding one k-tap filter per channel.
    """
    shared = kernel.ndim == 2
    kv = kernel.data[None] if shared else kernel.data
    bsz, length, ch = x.shape
    k = kv.shape[1]
    if k % 2 == 0 or kv.shape[2] != ch:
        raise DimensionError(f"depthwise kernel {kernel.shape} incompatible with input {x.shape}")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    value = np.zeros_like(x.data)
    for j in range(k):
        value = value + xp[:, j : j + length, :] * kv[:, j : j + 1, :]

    def backward(g):
        gx = gk = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j : j + length, :] += g * kv[:, j : j + 1, :]
            gx = gxp[:, pad : pad + length, :]
        if kernel.requires_grad:
            gk = np.stack([np.sum(g * xp[:, j : j + length, :], axis=1) for j in range(k)], axis=1)
            if shared:
                gk = gk.sum(axis=0)
        return gx, gk

    return _make("depthwise_conv1d", value, (x, kernel), backward)


def linear_scan(a: Tensor, x: Tensor) -> Tensor:
    """First-order linear recurrence ``h_t = a_t * h_{t-1} + x_t`` along length.

    Both operands are ``[B, L, N]``; ``h_{-1} = 0``.  Cost is linear in L.
    """
    if a.shape != x.shape or a.ndim != 3:
        raise DimensionError(f"linear_scan operands must match as [B, L, N]: {a.shape} vs {x.shape}")
    av, xv = a.data, x.data
    length = av.shape[1]
    h = np.empty_like(xv)
    state = np.zeros_like(xv[:, 0, :])
    for t in range(length):
        state = av[:, t, :] * state + xv[:, t, :]
        h[:, t, :] = state

    def backward(g):
        gx = np.empty_like(g)
        carry = np.zeros_like(g[:, 0, :])
        for t in range(length - 1, -1, -1):
            carry = g[:, t, :] + (av[:, t + 1, :] * carry if t + 1 < length else 0.0)
            gx[:, t, :] = carry
        ga = None
        if a.requires_grad:
            prev = np.concatenate([np.zeros_like(h[:, :1, :]), h[:, :-1, :]], axis=1)
            ga = gx * prev
        return ga, (gx if x.requires_grad else None)

    return _make("linear_scan", h, (a, x), backward)


def outer_lastdim(x: Tensor, y: Tensor) -> Tensor:
    """Per-position outer product ``[B,L,D] x [B,L,N] -> [B,L,D*N]`` (D-major)."""
    if x.shape[:-1] != y.shape[:-1]:
        raise DimensionError(f"outer_lastdim leading extents differ: {x.shape} vs {y.shape}")
    d, n = x.shape[-1], y.shape[-1]
    xv, yv = x.data, y.data
    value = (xv[..., :, None] * yv[..., None, :]).reshape(*xv.shape[:-1], d * n)

    def backward(g):
        g4 = g.reshape(*g.shape[:-1], d, n)
        gx = np.einsum("...dn,...n->...d", g4, yv) if x.requires_grad else None
        gy = np.einsum("...dn,...d->...n", g4, xv) if y.requires_grad else None
        return gx, gy

    return _make("outer_lastdim", value, (x, y), backward)


def group_contract(h: Tensor, c: Tensor) -> Tensor:
    """Inverse of :func:`outer_lastdim`: ``y[..., d] = sum_n h[..., d*N+n] * c[..., n]``."""
    n = c.shape[-1]
    if h.shape[-1] % n or h.shape[:-1] != c.shape[:-1]:
        raise DimensionError(f"group_contract extents incompatible: {h.shape} vs {c.shape}")
    d = h.shape[-1] // n
    hv = h.data.reshape(*h.shape[:-1], d, n)
    cv = c.data
    value = np.einsum("...dn,...n->...d", hv, cv)

    def backward(g):
        gh = (g[..., :, None] * cv[..., None, :]).reshape(h.shape) if h.requires_grad else None
        gc = np.einsum("...dn,...d->...n", hv, g) if c.requires_grad else None
        return gh, gc

    return _make("group_contract", value, (h, c), backward)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def normalize_lastdim(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Pre-affine layer normalization over the channel axis."""
    xv = x.data
    mu = xv.mean(axis=-1, keepdims=True)
    xc = xv - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _make("layer_norm", y, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    y = normalize_lastdim(x, eps)
    if gain is not None:
        y = mul(y, gain)
    if bias is not None:
        y = add(y, bias)
    return y


_POINTWISE = {
    "sigmoid": sigmoid,
    "gelu": gelu,
    "mul": mul,
    "add": add,
    "mean_pool": mean_pool,
    "avg_pool_channels": avg_pool_channels,
}


def pointwise(name: str, *xs) -> Tensor:
    """Dispatch one of the named elementwise/pooling primitives."""
    try:
        fn = _POINTWISE[name]
    except KeyError:
        raise UsageError(f"unknown pointwise op {name!r}") from None
    return fn(*xs)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


@dataclass
class Graph:
    """Recorded ops reachable from a loss, in execution order."""

    ops: list[Tensor] = field(default_factory=list)
    leaves: list[Tensor] = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Graph":
        seen: set[int] = set()
        ops, leaves = [], []
        stack = [root]
        while stack:
            node = stack.pop()
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            if node.is_leaf:
                leaves.append(node)
            else:
                ops.append(node)
                stack.extend(node._parents)
        ops.sort(key=lambda t: t._seq)
        leaves.sort(key=lambda t: t._seq)
        return cls(ops, leaves)

    def backward(self, root: Tensor) -> None:
        if root.is_leaf:
            _accumulate(root, np.ones_like(root.data))
            return
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for node in reversed(self.ops):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.is_leaf:
                    _accumulate(parent, pg)
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg


def _accumulate(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
    leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> Graph:
    """Accumulate ``d loss / d leaf`` into every reachable leaf's ``grad``.

    Params listed in ``params`` that the loss does not reach get a zero grad.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    graph = Graph.trace(loss)
    graph.backward(loss)
    for p in params or ():
        if p.grad is None:
            p.zero_grad()
    return graph


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    n_samples: int | None = 64,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` recomputes the scalar loss from the current values of ``params``.
    Coordinates are sampled uniformly across all params (all of them when
    ``n_samples`` is None).  Error per coordinate is
    ``|analytic - numeric| / (|analytic| + 1e-12)``.
    """
    if not 1e-7 <= h <= 1e-3:
        raise UsageError(f"finite-difference step must lie in [1e-7, 1e-3], got {h}")
    for p in params:
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    backward(loss, params)
    analytic = [p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if n_samples is not None and n_samples < len(coords):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    worst = 0.0
    with no_grad():
        for i, j in coords:
            params[i].data = np.ascontiguousarray(params[i].data)
            flat = params[i].data.reshape(-1)
            orig = flat[j]
            flat[j] = orig + h
            fp = f().item()
            flat[j] = orig - h
            fm = f().item()
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError("loss is not finite under perturbation")
            numeric = (fp - fm) / (2.0 * h)
            a = analytic[i].reshape(-1)[j]
            worst = max(worst, abs(a - numeric) / (abs(a) + 1e-12))
    for p in params:
        p.grad = None
    return float(worst)
