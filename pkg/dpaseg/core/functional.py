"""
Differentiable operations on `Tensor`

Feature maps are C x H x W (one frame, no batch axis); attention operands are
2-D matrices. Shape violations raise `DimensionError` naming the shapes.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError
from .tensor import Function, Tensor

L2_EPS = 1e-12


# Elementwise and structural ops

class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray):
        return grad, grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray):
        return grad * self.b, grad * self.a


class Scale(Function):
    def forward(self, x: np.ndarray, factor: float) -> np.ndarray:
        self.factor = factor
        return x * factor

    def backward(self, grad: np.ndarray):
        return (grad * self.factor,)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad: np.ndarray):
        return (grad * self.mask,)


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x.T)

    def backward(self, grad: np.ndarray):
        return (np.ascontiguousarray(grad.T),)


class SumAll(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return np.array(x.sum())

    def backward(self, grad: np.ndarray):
        return (np.full(self.in_shape, float(grad)),)


class MeanAll(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return np.array(x.mean())

    def backward(self, grad: np.ndarray):
        return (np.full(self.in_shape, float(grad) / np.prod(self.in_shape)),)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray):
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class Slice(Function):
    def forward(self, x: np.ndarray, start: int, stop: int, axis: int) -> np.ndarray:
        self.in_shape, self.start, self.stop, self.axis = x.shape, start, stop, axis
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, stop)
        self.index = tuple(index)
        return x[self.index].copy()

    def backward(self, grad: np.ndarray):
        full = np.zeros(self.in_shape)
        full[self.index] = grad
        return (full,)


# Linear algebra and normalisation

class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad: np.ndarray):
        return grad @ self.b.T, self.a.T @ grad


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int) -> np.ndarray:
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class L2Normalize(Function):
    def forward(self, x: np.ndarray, axis: int, eps: float) -> np.ndarray:
        self.axis = axis
        norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))
        self.live = norm >= eps
        self.safe_norm = np.where(self.live, norm, 1.0)
        self.out = np.where(self.live, x / self.safe_norm, 0.0)
        return self.out

    def backward(self, grad: np.ndarray):
        y = self.out
        dx = (grad - y * (grad * y).sum(axis=self.axis, keepdims=True)) / self.safe_norm
        return (np.where(self.live, dx, 0.0),)


# Spatial ops on C x H x W maps

class Conv2d(Function):
    """Same-padded stride-1 convolution, optionally dilated"""

    def forward(
        self,
        x: np.ndarray,
        weight: np.ndarray,
        bias: Optional[np.ndarray] = None,
        dilation: int = 1,
    ) -> np.ndarray:
        c_out, c_in, k, _ = weight.shape
        _, h, w = x.shape
        pad = dilation * (k // 2)
        padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
        cols = np.empty((c_in, k, k, h, w))
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = padded[:, i * dilation:i * dilation + h, j * dilation:j * dilation + w]
        self.cols = cols.reshape(c_in * k * k, h * w)
        self.weight = weight
        self.geometry = (c_in, k, h, w, pad, dilation)
        out = weight.reshape(c_out, -1) @ self.cols
        if bias is not None:
            out = out + bias[:, None]
        return out.reshape(c_out, h, w)

    def backward(self, grad: np.ndarray):
        c_in, k, h, w, pad, dilation = self.geometry
        c_out = grad.shape[0]
        g = grad.reshape(c_out, h * w)
        d_weight = (g @ self.cols.T).reshape(self.weight.shape)
        d_cols = (self.weight.reshape(c_out, -1).T @ g).reshape(c_in, k, k, h, w)
        d_padded = np.zeros((c_in, h + 2 * pad, w + 2 * pad))
        for i in range(k):
            for j in range(k):
                d_padded[:, i * dilation:i * dilation + h, j * dilation:j * dilation + w] += d_cols[:, i, j]
        d_x = d_padded[:, pad:pad + h, pad:pad + w]
        grads = [d_x, d_weight]
        if len(self.parents) == 3:
            grads.append(g.sum(axis=1))
        return tuple(grads)


class Upsample2x(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, grad: np.ndarray):
        c, h2, w2 = grad.shape
        return (grad.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4)),)


class AvgPool2x(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        c, h, w = x.shape
        return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))

    def backward(self, grad: np.ndarray):
        return (grad.repeat(2, axis=1).repeat(2, axis=2) / 4.0,)


class SpatialMean(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.in_shape = x.shape
        return x.mean(axis=(1, 2), keepdims=True)

    def backward(self, grad: np.ndarray):
        _, h, w = self.in_shape
        return (np.broadcast_to(grad / (h * w), self.in_shape).copy(),)


class ExpandSpatial(Function):
    def forward(self, x: np.ndarray, height: int, width: int) -> np.ndarray:
        return np.broadcast_to(x, (x.shape[0], height, width)).copy()

    def backward(self, grad: np.ndarray):
        return (grad.sum(axis=(1, 2), keepdims=True),)


class CrossEntropy(Function):
    """Mean per-pixel two-class cross entropy against a binary mask"""

    def forward(self, logits: np.ndarray, target: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=0, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=0, keepdims=True))
        log_probs = shifted - log_norm
        self.probs = np.exp(log_probs)
        self.onehot = np.stack([target == 0, target == 1]).astype(np.float64)
        self.n_pixels = target.size
        return np.array(-(log_probs * self.onehot).sum() / self.n_pixels)

    def backward(self, grad: np.ndarray):
        return (float(grad) * (self.probs - self.onehot) / self.n_pixels,)


# Public functional API

def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DimensionError(message)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"add: shapes {a.shape} and {b.shape} differ")
    return Add.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"mul: shapes {a.shape} and {b.shape} differ")
    return Mul.apply(a, b)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    _require(int(np.prod(shape)) == x.size, f"reshape: cannot view {x.shape} as {shape}")
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor) -> Tensor:
    _require(x.ndim == 2, f"transpose: expected a matrix, got shape {x.shape}")
    return Transpose.apply(x)


def sum_all(x: Tensor) -> Tensor:
    return SumAll.apply(x)


def mean_all(x: Tensor) -> Tensor:
    return MeanAll.apply(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require(
        a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
        f"matmul: inner extents of {a.shape} and {b.shape} do not match",
    )
    return MatMul.apply(a, b)


def softmax(x: Tensor, axis: int) -> Tensor:
    _require(0 <= axis < x.ndim, f"softmax: axis {axis} out of range for shape {x.shape}")
    return Softmax.apply(x, axis=axis)


def l2_normalize(x: Tensor, axis: int = 0, eps: float = L2_EPS) -> Tensor:
    """Unit-normalise every slice along `axis`; slices with norm < eps become zero"""
    _require(0 <= axis < x.ndim, f"l2_normalize: axis {axis} out of range for shape {x.shape}")
    return L2Normalize.apply(x, axis=axis, eps=eps)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    _require(len(tensors) > 0, "concat: nothing to concatenate")
    first = tensors[0].shape
    for t in tensors[1:]:
        side_a = first[:axis] + first[axis + 1:]
        side_b = t.shape[:axis] + t.shape[axis + 1:]
        _require(
            len(t.shape) == len(first) and side_a == side_b,
            f"concat: side extents of {first} and {t.shape} differ on axis {axis}",
        )
    return Concat.apply(*tensors, axis=axis)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    _require(0 <= start < stop <= x.shape[axis], f"slice: [{start}:{stop}] outside {x.shape} on axis {axis}")
    return Slice.apply(x, start=start, stop=stop, axis=axis)


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> List[Tensor]:
    _require(sum(sizes) == x.shape[axis], f"split: sizes {list(sizes)} do not cover {x.shape} on axis {axis}")
    parts, start = [], 0
    for size in sizes:
        parts.append(slice_axis(x, start, start + size, axis))
        start += size
    return parts


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, dilation: int = 1) -> Tensor:
    _require(x.ndim == 3, f"conv2d: expected C x H x W input, got {x.shape}")
    _require(
        weight.ndim == 4 and weight.shape[2] == weight.shape[3] and weight.shape[2] % 2 == 1,
        f"conv2d: weight must be C_out x C_in x k x k with odd k, got {weight.shape}",
    )
    _require(
        weight.shape[1] == x.shape[0],
        f"conv2d: weight {weight.shape} expects {weight.shape[1]} channels, input is {x.shape}",
    )
    if bias is None:
        return Conv2d.apply(x, weight, dilation=dilation)
    _require(bias.shape == (weight.shape[0],), f"conv2d: bias {bias.shape} does not match weight {weight.shape}")
    return Conv2d.apply(x, weight, bias, dilation=dilation)


def upsample2x(x: Tensor) -> Tensor:
    _require(x.ndim == 3, f"upsample2x: expected C x H x W, got {x.shape}")
    return Upsample2x.apply(x)


def avg_pool2x(x: Tensor) -> Tensor:
    _require(
        x.ndim == 3 and x.shape[1] % 2 == 0 and x.shape[2] % 2 == 0,
        f"avg_pool2x: expected C x H x W with even H, W, got {x.shape}",
    )
    return AvgPool2x.apply(x)


def spatial_mean(x: Tensor) -> Tensor:
    _require(x.ndim == 3, f"spatial_mean: expected C x H x W, got {x.shape}")
    return SpatialMean.apply(x)


def expand_spatial(x: Tensor, height: int, width: int) -> Tensor:
    _require(x.ndim == 3 and x.shape[1:] == (1, 1), f"expand_spatial: expected C x 1 x 1, got {x.shape}")
    return ExpandSpatial.apply(x, height=height, width=width)


def cross_entropy(logits: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target)
    _require(
        logits.ndim == 3 and logits.shape[0] == 2 and logits.shape[1:] == target.shape,
        f"cross_entropy: logits {logits.shape} do not match mask {target.shape}",
    )
    return CrossEntropy.apply(logits, target=target)
