"""
Differentiable operations. Each op computes its forward value with numpy and
records a closure that maps the output gradient onto its inputs.
"""

__package__ = 'onlinevis.tensorcore'

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from ..misc.errors import ContractError, DimensionError, NumericError
from .tensor import Tensor, TensorLike, as_tensor


Axis = Union[int, Tuple[int, ...], None]


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's original shape"""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad.reshape(shape)


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


### Elementwise arithmetic

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)
    return Tensor.from_op(a.data + b.data, (a, b), backward_fn, 'add')


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)
    return Tensor.from_op(a.data - b.data, (a, b), backward_fn, 'sub')


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)
    return Tensor.from_op(a.data * b.data, (a, b), backward_fn, 'mul')


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward_fn(g):
        return unbroadcast(g / b.data, a.shape), unbroadcast(-g * a.data / (b.data * b.data), b.shape)
    return Tensor.from_op(a.data / b.data, (a, b), backward_fn, 'div')


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), 'neg')


def power(a: TensorLike, exponent: float) -> Tensor:
    a = as_tensor(a)

    def backward_fn(g):
        return (g * exponent * np.power(a.data, exponent - 1),)
    return Tensor.from_op(np.power(a.data, exponent), (a,), backward_fn, 'power')


def exp(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), 'exp')


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), 'log')


def sqrt(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * 0.5 / out,), 'sqrt')


def abs(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), 'abs')


def sigmoid(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1 - out),), 'sigmoid')


def logit(a: TensorLike, eps: float=1e-6) -> Tensor:
    """Inverse sigmoid, with the input clamped to [eps, 1-eps] first"""
    a = as_tensor(a)
    clamped = np.clip(a.data, eps, 1 - eps)
    inside = (a.data >= eps) & (a.data <= 1 - eps)

    def backward_fn(g):
        return (g * inside / (clamped * (1 - clamped)),)
    return Tensor.from_op(special.logit(clamped), (a,), backward_fn, 'logit')


def relu(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.maximum(a.data, 0), (a,), lambda g: (g * (a.data > 0),), 'relu')


def maximum(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data

    def backward_fn(g):
        return unbroadcast(g * pick_a, a.shape), unbroadcast(g * ~pick_a, b.shape)
    return Tensor.from_op(np.where(pick_a, a.data, b.data), (a, b), backward_fn, 'maximum')


def minimum(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data

    def backward_fn(g):
        return unbroadcast(g * pick_a, a.shape), unbroadcast(g * ~pick_a, b.shape)
    return Tensor.from_op(np.where(pick_a, a.data, b.data), (a, b), backward_fn, 'minimum')


def clip(a: TensorLike, low: Optional[float]=None, high: Optional[float]=None) -> Tensor:
    a = as_tensor(a)
    inside = np.ones(a.shape, dtype=bool)
    if low is not None:
        inside &= a.data >= low
    if high is not None:
        inside &= a.data <= high
    return Tensor.from_op(np.clip(a.data, low, high), (a,), lambda g: (g * inside,), 'clip')


### Linear algebra

def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Batched matrix product over the last two axes, broadcasting leading axes"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f'matmul shape mismatch: {a.shape} @ {b.shape}')

    def backward_fn(g):
        grad_a = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        grad_b = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return grad_a, grad_b
    return Tensor.from_op(a.data @ b.data, (a, b), backward_fn, 'matmul')


### Reductions and shape manipulation

def sum(a: TensorLike, axis: Axis=None, keepdims: bool=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)
    return Tensor.from_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward_fn, 'sum')


def mean(a: TensorLike, axis: Axis=None, keepdims: bool=False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return div(sum(a, axis=axes, keepdims=keepdims), max(count, 1))


def reshape(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), 'reshape')


def transpose(a: TensorLike, axes: Optional[Sequence[int]]=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), 'transpose')


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice, type(None))) or p is Ellipsis for p in parts)


def getitem(a: TensorLike, index) -> Tensor:
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    basic = _is_basic_index(index)

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)
    return Tensor.from_op(a.data[index], (a,), backward_fn, 'getitem')


def concat(tensors: Sequence[TensorLike], axis: int=0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError('concat() needs at least one tensor')
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))
    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward_fn, 'concat')


def stack(tensors: Sequence[TensorLike], axis: int=0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise ContractError('stack() needs at least one tensor')
    shapes = {t.shape for t in tensors}
    if len(shapes) > 1:
        raise DimensionError(f'stack() needs equal shapes, got {sorted(shapes)}')

    def backward_fn(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[i] for i in range(len(tensors)))
    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tensors, backward_fn, 'stack')


def broadcast_to(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    out = np.broadcast_to(a.data, tuple(shape)).copy()
    return Tensor.from_op(out, (a,), lambda g: (unbroadcast(g, a.shape),), 'broadcast_to')


### Normalization

def softmax(a: TensorLike, axis: int=-1) -> Tensor:
    a = as_tensor(a)
    if not np.isfinite(a.data).all():
        raise NumericError(f'softmax received non-finite input of shape {a.shape}', part='softmax')
    out = special.softmax(a.data, axis=axis)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return Tensor.from_op(out, (a,), backward_fn, 'softmax')


def log_softmax(a: TensorLike, axis: int=-1) -> Tensor:
    a = as_tensor(a)
    if not np.isfinite(a.data).all():
        raise NumericError(f'log_softmax received non-finite input of shape {a.shape}', part='log_softmax')
    out = special.log_softmax(a.data, axis=axis)

    def backward_fn(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)
    return Tensor.from_op(out, (a,), backward_fn, 'log_softmax')


def layer_norm(x: TensorLike, weight: TensorLike, bias: TensorLike, eps: float=1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift"""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    x_hat = (x.data - mu) * inv_std

    def backward_fn(g):
        g_hat = g * weight.data
        grad_x = inv_std * (g_hat - g_hat.mean(axis=-1, keepdims=True) - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True))
        return grad_x, unbroadcast(g * x_hat, weight.shape), unbroadcast(g, bias.shape)
    return Tensor.from_op(x_hat * weight.data + bias.data, (x, weight, bias), backward_fn, 'layer_norm')


def l2_normalize(a: TensorLike, axis: int=-1, eps: float=1e-12) -> Tensor:
    a = as_tensor(a)
    return div(a, sqrt(add(sum(mul(a, a), axis=axis, keepdims=True), eps)))


### Losses with a fused backward

def bce_with_logits(logits: TensorLike, targets: TensorLike) -> Tensor:
    """Elementwise binary cross-entropy on logits: max(x,0) - x*t + log(1 + exp(-|x|))"""
    logits, targets = as_tensor(logits), as_tensor(targets)
    x, t = logits.data, targets.data
    out = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))

    def backward_fn(g):
        return unbroadcast(g * (special.expit(x) - t), logits.shape), unbroadcast(-g * x, targets.shape)
    return Tensor.from_op(out, (logits, targets), backward_fn, 'bce_with_logits')


### Convolution and resampling

def conv2d(x: TensorLike, weight: TensorLike, bias: Optional[TensorLike]=None, stride: int=1, padding: int=0) -> Tensor:
    """x: B×Cin×H×W, weight: Cout×Cin×k×k -> B×Cout×Ho×Wo"""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f'conv2d shape mismatch: input {x.shape}, weight {weight.shape}')
    k = weight.shape[2]
    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.einsum('bchwij,ocij->bohw', windows, weight.data, optimize=True)
    inputs: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        inputs = (x, weight, bias)

    def backward_fn(g):
        grad_w = np.einsum('bohw,bchwij->ocij', g, windows, optimize=True) if weight.requires_grad else None
        grad_x = None
        if x.requires_grad:
            grad_padded = np.zeros_like(padded)
            for i in range(k):
                for j in range(k):
                    grad_padded[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += np.einsum(
                        'bohw,oc->bchw', g, weight.data[:, :, i, j], optimize=True,
                    )
            grad_x = grad_padded[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]]
        grads = (grad_x, grad_w)
        if bias is not None:
            grads = grads + (g.sum(axis=(0, 2, 3)),)
        return grads
    return Tensor.from_op(out, inputs, backward_fn, 'conv2d')


def upsample_nearest(x: TensorLike, factor: int) -> Tensor:
    """B×C×H×W -> B×C×(H·f)×(W·f) by pixel repetition"""
    x = as_tensor(x)
    if factor == 1:
        return x
    b, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward_fn(g):
        return (g.reshape(b, c, h, factor, w, factor).sum(axis=(3, 5)),)
    return Tensor.from_op(out, (x,), backward_fn, 'upsample_nearest')


def bilinear_sample_pixels(feat: TensorLike, loc: TensorLike) -> Tensor:
    """
    Sample feat (B×C×H×W) at fractional pixel coordinates loc (B×P×2, x then y),
    where integer coordinates are texel centers. Out-of-map neighbours read as zero.
    Returns B×P×C.
    """
    feat, loc = as_tensor(feat), as_tensor(loc)
    if feat.ndim != 4 or loc.ndim != 3 or loc.shape[-1] != 2 or loc.shape[0] != feat.shape[0]:
        raise DimensionError(f'bilinear_sample shape mismatch: feat {feat.shape}, loc {loc.shape}')
    batch, _, height, width = feat.shape
    table = feat.data.transpose(0, 2, 3, 1)     # B×H×W×C
    px, py = loc.data[..., 0], loc.data[..., 1]
    x0, y0 = np.floor(px), np.floor(py)
    fx, fy = px - x0, py - y0
    b_idx = np.arange(batch)[:, None]

    corners = []
    for dy, wy, dwy in ((0, 1 - fy, -1.0), (1, fy, 1.0)):
        for dx, wx, dwx in ((0, 1 - fx, -1.0), (1, fx, 1.0)):
            xi = (x0 + dx).astype(np.int64)
            yi = (y0 + dy).astype(np.int64)
            valid = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
            xc, yc = np.clip(xi, 0, width - 1), np.clip(yi, 0, height - 1)
            values = table[b_idx, yc, xc] * valid[..., None]
            corners.append((yc, xc, valid, values, wx * wy, dwx * wy, dwy * wx))

    out = np.zeros(loc.shape[:2] + (feat.shape[1],), dtype=table.dtype)
    for _, _, _, values, weight, _, _ in corners:
        out += weight[..., None] * values

    def backward_fn(g):
        grad_feat = None
        if feat.requires_grad:
            grad_table = np.zeros_like(table)
            for yc, xc, valid, _, weight, _, _ in corners:
                np.add.at(grad_table, (b_idx, yc, xc), g * (weight * valid)[..., None])
            grad_feat = grad_table.transpose(0, 3, 1, 2)
        grad_loc = None
        if loc.requires_grad:
            grad_loc = np.zeros_like(loc.data)
            for _, _, _, values, _, dw_dx, dw_dy in corners:
                along = (g * values).sum(axis=-1)
                grad_loc[..., 0] += along * dw_dx
                grad_loc[..., 1] += along * dw_dy
        return grad_feat, grad_loc
    return Tensor.from_op(out, (feat, loc), backward_fn, 'bilinear_sample')


def bilinear_sample(feat: TensorLike, pts: TensorLike) -> Tensor:
    """Sample feat (C×H×W) at normalized points pts (P×2 in [0,1]²) -> P×C"""
    feat, pts = as_tensor(feat), as_tensor(pts)
    if feat.ndim != 3:
        raise DimensionError(f'bilinear_sample expects C×H×W features, got {feat.shape}')
    _, height, width = feat.shape
    loc = sub(mul(pts, np.array([width, height])), 0.5)
    sampled = bilinear_sample_pixels(reshape(feat, (1,) + feat.shape), reshape(loc, (1,) + loc.shape))
    return reshape(sampled, sampled.shape[1:])
