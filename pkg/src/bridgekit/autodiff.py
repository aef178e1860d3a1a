"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray plus (when gradients are enabled and an input
requires them) the parent tensors and a vector-Jacobian callback.  Every
callback is written in terms of engine primitives, so the backward pass can
itself be recorded and differentiated: ``grad(..., create_graph=True)``
supports the second-order terms needed by gradient penalties.

Only what the reference networks use is implemented: broadcasting
arithmetic, matmul, shape ops, reductions, smooth nonlinearities, 3x3/1x1
convolution building blocks (unfold/fold), and 2x nearest up/down sampling.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import expit

_GRAD_STACK = [True]


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    _GRAD_STACK.append(False)
    try:
        yield
    finally:
        _GRAD_STACK.pop()


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "vjp")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = data if isinstance(data, np.ndarray) and data.dtype == np.float64 \
            else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    """Leaf tensor tracked by the graph."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents, vjp) -> Tensor:
    if _GRAD_STACK[-1] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, vjp=vjp)
    return Tensor(data)


def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Reduce a broadcasted cotangent back to ``shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, (a, b) in enumerate(zip(g.shape, shape)) if b == 1 and a != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(mul(g, b), a.shape),
                            _unbroadcast(mul(g, a), b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(div(g, b), a.shape),
                            _unbroadcast(mul(g, div(mul(a, -1.0), mul(b, b))), b.shape)))


def power(a, p) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    return _node(a.data ** p, (a,),
                 lambda g: (mul(g, mul(power(a, p - 1.0), p)),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = _unbroadcast(matmul(g, mT(b)), a.shape)
        gb = _unbroadcast(matmul(mT(a), g), b.shape)
        return ga, gb

    return _node(a.data @ b.data, (a, b), vjp)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (reshape(g, x.shape),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(x.data.transpose(axes), (x,), lambda g: (transpose(g, inv),))


def mT(x) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
    return transpose(x, axes)


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    return _node(np.broadcast_to(x.data, shape).copy(), (x,),
                 lambda g: (_unbroadcast(g, x.shape),))


def concat(parts, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        return tuple(slice_axis(g, axis, int(offsets[i]), int(offsets[i + 1]))
                     for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), vjp)


def slice_axis(x, axis: int, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    idx = tuple(slice(None) if i != axis else slice(start, stop) for i in range(x.ndim))
    full = x.shape[axis]
    return _node(x.data[idx].copy(), (x,),
                 lambda g: (embed_axis(g, axis, start, full),))


def embed_axis(x, axis: int, start: int, full: int) -> Tensor:
    """Adjoint of :func:`slice_axis`: place ``x`` in a zero block of size
    ``full`` along ``axis`` at offset ``start``."""
    x = as_tensor(x)
    shape = list(x.shape)
    width = shape[axis]
    shape[axis] = full
    out = np.zeros(shape, dtype=np.float64)
    idx = tuple(slice(None) if i != axis else slice(start, start + width)
                for i in range(x.ndim))
    out[idx] = x.data
    return _node(out, (x,), lambda g: (slice_axis(g, axis, start, start + width),))


# ---------------------------------------------------------------------------
# reductions


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axis, int):
        axes = (axis % x.ndim,)
    else:
        axes = tuple(a % x.ndim for a in axis)

    def vjp(g):
        if not keepdims:
            kd_shape = tuple(1 if i in axes else s for i, s in enumerate(x.shape))
            g = reshape(g, kd_shape)
        return (broadcast_to(g, x.shape),)

    return _node(x.data.sum(axis=axes, keepdims=keepdims), (x,), vjp)


def tmean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a % x.ndim] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# nonlinearities


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = _node(np.exp(x.data), (x,), None)
    out.vjp = lambda g: (mul(g, out),)
    return out


def log(x) -> Tensor:
    x = as_tensor(x)
    return _node(np.log(x.data), (x,), lambda g: (div(g, x),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = _node(np.sqrt(x.data), (x,), None)
    out.vjp = lambda g: (mul(g, div(as_tensor(0.5), out)),)
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = _node(np.tanh(x.data), (x,), None)
    out.vjp = lambda g: (mul(g, add(1.0, mul(mul(out, out), -1.0))),)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _node(expit(x.data), (x,), None)
    out.vjp = lambda g: (mul(g, mul(out, add(1.0, mul(out, -1.0)))),)
    return out


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    x = as_tensor(x)
    return _node(np.logaddexp(0.0, x.data), (x,), lambda g: (mul(g, sigmoid(x)),))


def silu(x) -> Tensor:
    return mul(x, sigmoid(x))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)  # subgradient 0 at 0
    return _node(np.abs(x.data), (x,), lambda g: (mul(g, sign),))


# ---------------------------------------------------------------------------
# convolution building blocks (stride 1, square kernel)


def _unfold_data(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    B, C, H, W = x.shape
    hp, wp = H + 2 * pad, W + 2 * pad
    if pad:
        xp = np.zeros((B, C, hp, wp), dtype=np.float64)
        xp[:, :, pad:pad + H, pad:pad + W] = x
    else:
        xp = x
    oh, ow = hp - k + 1, wp - k + 1
    sb, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(B, oh, ow, C, k, k), strides=(sb, sh, sw, sc, sh, sw))
    # single gather-copy straight into the (positions, patch) layout
    return windows.reshape(B, oh * ow, C * k * k)


def _fold_data(cols: np.ndarray, xshape, k: int, pad: int) -> np.ndarray:
    B, C, H, W = xshape
    oh, ow = H + 2 * pad - k + 1, W + 2 * pad - k + 1
    blocks = cols.reshape(B, oh, ow, C, k, k)
    # accumulate channel-last (contiguous write slices), transpose once
    out = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out[:, i:i + oh, j:j + ow, :] += blocks[:, :, :, :, i, j]
    return np.ascontiguousarray(
        out[:, pad:pad + H, pad:pad + W, :].transpose(0, 3, 1, 2))


def unfold(x, k: int, pad: int) -> Tensor:
    """Extract k x k patches (stride 1) as (B, positions, C*k*k)."""
    x = as_tensor(x)
    return _node(_unfold_data(x.data, k, pad), (x,),
                 lambda g: (fold(g, x.shape, k, pad),))


def fold(cols, xshape, k: int, pad: int) -> Tensor:
    """Adjoint of :func:`unfold`: scatter-add patches back to (B, C, H, W)."""
    cols = as_tensor(cols)
    xshape = tuple(xshape)
    return _node(_fold_data(cols.data, xshape, k, pad), (cols,),
                 lambda g: (unfold(g, k, pad),))


def conv2d(x, w, b=None, pad: int | None = None) -> Tensor:
    """Stride-1 convolution; ``w`` is (out_ch, in_ch, k, k), same padding by
    default for odd k."""
    w = as_tensor(w)
    oc, ic, k, _ = w.shape
    if pad is None:
        pad = k // 2
    x = as_tensor(x)
    B, C, H, W = x.shape
    cols = unfold(x, k, pad)                      # (B, P, C*k*k)
    wmat = reshape(w, (oc, ic * k * k))
    out = matmul(cols, mT(wmat))                  # (B, P, oc)
    oh, ow = H + 2 * pad - k + 1, W + 2 * pad - k + 1
    out = transpose(reshape(out, (B, oh, ow, oc)), (0, 3, 1, 2))
    if b is not None:
        out = add(out, reshape(as_tensor(b), (1, oc, 1, 1)))
    return out


def upsample2(x) -> Tensor:
    """Nearest-neighbor 2x upsampling."""
    x = as_tensor(x)
    data = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)
    return _node(data, (x,), lambda g: (sumpool2(g),))


def sumpool2(x) -> Tensor:
    """2x2 sum pooling (adjoint of :func:`upsample2`)."""
    x = as_tensor(x)
    B, C, H, W = x.shape
    data = x.data.reshape(B, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))
    return _node(data, (x,), lambda g: (upsample2(g),))


def avgpool2(x) -> Tensor:
    return mul(sumpool2(x), 0.25)


# ---------------------------------------------------------------------------
# backward


def grad(output: Tensor, wrt, create_graph: bool = False) -> list[Tensor]:
    """Cotangents of a scalar ``output`` with respect to each tensor in ``wrt``.

    With ``create_graph`` the returned tensors are themselves differentiable
    (the backward pass is recorded), enabling gradient-of-gradient terms.
    """
    if output.size != 1:
        raise ValueError(f"grad needs a scalar output, got shape {output.shape}")
    for w in wrt:
        if not w.requires_grad:
            raise ValueError("all wrt tensors must require gradients")

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))

    cot: dict[int, Tensor] = {id(output): Tensor(np.ones_like(output.data))}

    def run():
        for node in reversed(topo):
            g = cot.get(id(node))
            if g is None or node.vjp is None:
                continue
            for p, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                acc = cot.get(id(p))
                cot[id(p)] = pg if acc is None else add(acc, pg)

    if create_graph:
        run()
    else:
        with no_grad():
            run()

    return [cot.get(id(w), Tensor(np.zeros_like(w.data))) for w in wrt]
