"""Differentiable kernels.

Every function takes tensors (or array-likes, treated as constants) and
returns a :class:`Tensor`. Backward closures return one gradient per parent.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from . import backend
from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, opname):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_node(a.data * b.data, (a, b), bw, "mul")


def scale(x, s: float) -> Tensor:
    x = as_tensor(x)
    s = float(s)
    return make_node(x.data * s, (x,), lambda g: (g * s,), "scale")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            if a.ndim == 2 and b.ndim > 2 and b.shape[:-2] == g.shape[:-2]:
                # shared left operand: fold the batch into one GEMM
                gt = np.swapaxes(g, -1, -2).reshape(-1, g.shape[-2])
                ga = gt.T @ np.swapaxes(b.data, -1, -2).reshape(-1, b.shape[-2])
            else:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                # shared right operand (e.g. a linear layer): one flattened GEMM
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return make_node(out, (a, b), bw, "matmul")


def graph_aggregate(x, A) -> Tensor:
    """Mix node features: ``x (B, C, T, V) @ A`` with ``A`` shared ``(V, V)`` or per-sample ``(B, V, V)``.

    Same result as :func:`matmul` with broadcasting, but laid out as one GEMM
    (shared) or B GEMMs (per-sample) instead of B*C small ones.
    """
    x, A = as_tensor(x), as_tensor(A)
    if x.ndim != 4 or A.ndim not in (2, 3) or A.shape[-2:] != (x.shape[3], x.shape[3]):
        raise ShapeError(f"graph_aggregate: features {x.shape} do not match adjacency {A.shape}")
    B, C, T, V = x.shape
    shared = A.ndim == 2
    if not shared and A.shape[0] != B:
        raise ShapeError(f"graph_aggregate: batch {B} does not match adjacency {A.shape}")
    xf = x.data.reshape(B * C * T, V) if shared else x.data.reshape(B, C * T, V)
    out = np.matmul(xf, A.data).reshape(B, C, T, V)

    def bw(g):
        gf = g.reshape(xf.shape)
        gx = np.matmul(gf, np.swapaxes(A.data, -1, -2)).reshape(x.shape) if x.requires_grad else None
        gA = None
        if A.requires_grad:
            gA = xf.T @ gf if shared else np.matmul(xf.transpose(0, 2, 1), gf)
        return gx, gA

    return make_node(out, (x, A), bw, "graph_aggregate")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the exact identity at inference or when ``p == 0``."""
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
    if rng is None:
        raise ConfigError("dropout in training mode needs an explicit rng")
    mask = (rng.random(x.shape, dtype=np.float32) >= p) * (1.0 / (1.0 - p))
    return make_node(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(out, (x,), bw, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_node(out, (x,), bw, "mean")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def concat(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tuple(xs), bw, "concat")


def repeat(x, repeats: int, axis: int) -> Tensor:
    """Nearest-neighbour upsampling: each slice along ``axis`` is repeated."""
    x = as_tensor(x)
    if repeats == 1:
        return x
    out = np.repeat(x.data, repeats, axis=axis)
    ax = axis % x.ndim

    def bw(g):
        shp = x.shape[:ax] + (x.shape[ax], repeats) + x.shape[ax + 1:]
        return (g.reshape(shp).sum(axis=ax + 1),)

    return make_node(out, (x,), bw, "repeat")


def softmax(x, axis=-1) -> Tensor:
    """Max-shifted softmax. Entries equal to ``-inf`` get probability zero."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_node(y, (x,), bw, "softmax")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the affine ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv / d * (d * gh - gh.sum(axis=-1, keepdims=True)
                            - xhat * (gh * xhat).sum(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gamma.shape), _unbroadcast(g, beta.shape)

    return make_node(out, (x, gamma, beta), bw, "layer_norm")


def conv_out_len(t: int, k: int, stride: int, padding: int) -> int:
    return (t + 2 * padding - k) // stride + 1


def temporal_conv1d(x, w, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Convolve along the time axis, independently for every graph node.

    Args:
        x: ``(C_in, T, V)`` or ``(B, C_in, T, V)``.
        w: ``(C_out, C_in, k)`` with odd ``k``.
        bias: optional ``(C_out,)``.

    Returns:
        ``(B, C_out, T', V)`` (batch axis dropped again for 3-D input) with
        ``T' = (T + 2*padding - k) // stride + 1``.
    """
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or w.ndim != 3 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"temporal_conv1d: input {x.shape} does not match kernel {w.shape}")
    c_out, c_in, k = w.shape
    if k % 2 == 0:
        raise ConfigError(f"temporal kernel size must be odd, got {k}")
    if stride < 1 or padding < 0:
        raise ConfigError(f"invalid stride {stride} / padding {padding}")
    B, _, T, V = x.shape
    t_out = conv_out_len(T, k, stride, padding)
    if t_out < 1:
        raise ConfigError(f"temporal_conv1d: output length {t_out} < 1 (T={T}, k={k}, stride={stride})")
    parents = [x, w]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"temporal_conv1d: bias {bias.shape} does not match {c_out} channels")
        parents.append(bias)

    kern = backend.kernels
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (0, 0)))
    xp = np.ascontiguousarray(xp)
    t_pad = xp.shape[2]
    if k == 1 and stride == 1:
        cols = xp
    else:
        cols = kern.im2col_time(xp, k, stride, t_out)
    cols2 = cols.reshape(B, c_in * k, t_out * V)
    w2 = w.data.reshape(c_out, c_in * k)
    out = np.matmul(w2, cols2)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(B, c_out, t_out, V)

    def bw(g):
        g2 = g.reshape(B, c_out, t_out * V)
        gx = gw = gb = None
        if x.requires_grad:
            gcols = np.ascontiguousarray(np.matmul(w2.T, g2))
            if k == 1 and stride == 1:
                gxp = gcols.reshape(B, c_in, t_pad, V)
            else:
                gxp = kern.col2im_time(gcols.reshape(B, c_in, k, t_out, V), t_pad, stride)
            gx = gxp[:, :, padding:padding + T, :] if padding else gxp
        if w.requires_grad:
            gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    y = make_node(out, tuple(parents), bw, "temporal_conv1d")
    if squeeze:
        y = reshape(y, y.shape[1:])
    return y


def mse(a, b) -> Tensor:
    """Mean of squared element-wise differences."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def bw(g):
        gd = g * (2.0 / n) * diff
        return gd, -gd

    return make_node(np.mean(diff * diff), (a, b), bw, "mse")


def mse_per_sample(a, b) -> np.ndarray:
    """Per-leading-index MSE as a plain array (no tape)."""
    a = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    b = b.data if isinstance(b, Tensor) else np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    d = (a - b).reshape(a.shape[0], -1)
    return np.mean(d * d, axis=1)
