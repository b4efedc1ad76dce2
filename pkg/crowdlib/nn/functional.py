"""
Structured neural operations with forward and backward rules.

Convolution is cross-correlation (no kernel flip) computed by gathering one
shifted view of the padded input per kernel offset and contracting the views with
the weights group by group. Pooling and bilinear resampling are separable: both are
a row matrix and a column matrix applied on either side of every channel.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from crowdlib.nn.exceptions import ChannelMismatchError, ExtentError, InvalidKernelError
from crowdlib.nn.module import Mode
from crowdlib.nn.specs import BatchNormSpec, Conv2dSpec
from crowdlib.tensors.exceptions import ShapeMismatchError
from crowdlib.tensors.tensor import Function, Tensor, no_grad

logger = logging.getLogger(__name__)


def _require_image(x: Tensor, op: str) -> None:
    if x.ndim != 3:
        raise ShapeMismatchError(f"{op} expects a C x H x W tensor, got {x.shape}. ")


def _gather(x: np.ndarray, kernel: int, dilation: int, padding: int) -> np.ndarray:
    """C x k x k x H x W stack of the padded input shifted by every kernel offset."""
    channels, height, width = x.shape
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    columns = np.empty((channels, kernel, kernel, height, width), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            top, left = i * dilation, j * dilation
            columns[:, i, j] = padded[:, top : top + height, left : left + width]
    return columns


def _scatter(
    columns: np.ndarray, dilation: int, padding: int, shape: Tuple[int, ...]
) -> np.ndarray:
    channels, kernel, _, height, width = columns.shape
    padded = np.zeros(
        (channels, height + 2 * padding, width + 2 * padding), dtype=columns.dtype
    )
    for i in range(kernel):
        for j in range(kernel):
            top, left = i * dilation, j * dilation
            padded[:, top : top + height, left : left + width] += columns[:, i, j]
    return padded[:, padding : padding + shape[1], padding : padding + shape[2]]


class Conv2d(Function):
    def forward(
        self,
        x: np.ndarray,
        weight: np.ndarray,
        *bias: np.ndarray,
        groups: int = 1,
        dilation: int = 1,
        padding: int = 0,
    ) -> np.ndarray:
        channels, height, width = x.shape
        out_channels, _, kernel, _ = weight.shape
        self.groups, self.dilation, self.padding = groups, dilation, padding
        self.columns = _gather(x, kernel, dilation, padding).reshape(
            groups, -1, height * width
        )
        self.weight = weight.reshape(groups, out_channels // groups, -1)
        out = np.matmul(self.weight, self.columns).reshape(out_channels, height, width)
        if bias:
            out = out + bias[0][:, None, None]
        return out

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        x, weight = self.inputs[0], self.inputs[1]
        out_channels, height, width = grad.shape
        flat = grad.reshape(self.groups, out_channels // self.groups, height * width)
        grad_weight = np.matmul(flat, self.columns.transpose(0, 2, 1)).reshape(
            weight.shape
        )
        grad_x = None
        if x.requires_grad:
            kernel = weight.shape[2]
            grad_columns = np.matmul(self.weight.transpose(0, 2, 1), flat).reshape(
                x.shape[0], kernel, kernel, height, width
            )
            grad_x = _scatter(grad_columns, self.dilation, self.padding, x.shape)
        grads: Tuple[Optional[np.ndarray], ...] = (grad_x, grad_weight)
        if len(self.inputs) == 3:
            grads += (grad.sum(axis=(1, 2)),)
        return grads


def conv2d(x: Tensor, spec: Conv2dSpec) -> Tensor:
    """Grouped "same" convolution; spatial extents are preserved."""
    _require_image(x, "conv2d")
    if x.shape[0] != spec.in_channels:
        raise ChannelMismatchError(
            f"conv2d expects {spec.in_channels} input channels, got {x.shape[0]}. "
        )
    inputs = (x, spec.weight) if spec.bias is None else (x, spec.weight, spec.bias)
    return Conv2d.apply(
        *inputs, groups=spec.groups, dilation=spec.dilation, padding=spec.padding
    )


class Conv1dChannel(Function):
    def forward(self, s: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        pad = (len(kernel) - 1) // 2
        self.windows = sliding_window_view(np.pad(s, pad), len(kernel))
        return self.windows @ kernel

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s, kernel = self.inputs
        k = kernel.shape[0]
        pad = (k - 1) // 2
        padded = np.zeros(s.shape[0] + 2 * pad, dtype=grad.dtype)
        for j in range(k):
            padded[j : j + s.shape[0]] += kernel.data[j] * grad
        return padded[pad : pad + s.shape[0]], self.windows.T @ grad


def conv1d_channel(s: Tensor, kernel: Tensor) -> Tensor:
    """Zero-padded 1-D convolution along the channel axis with shared weights."""
    if kernel.ndim != 1 or kernel.shape[0] % 2 == 0:
        raise InvalidKernelError(
            f"channel kernel must have odd length, got shape {kernel.shape}. "
        )
    if s.ndim != 1:
        raise ShapeMismatchError(f"conv1d_channel expects a vector, got {s.shape}. ")
    return Conv1dChannel.apply(s, kernel)


class BatchNormTrain(Function):
    """Normalization by the per-channel spatial statistics of the input."""

    def forward(
        self,
        x: np.ndarray,
        gamma: np.ndarray,
        beta: np.ndarray,
        epsilon: float = 1e-5,
    ) -> np.ndarray:
        mean = x.mean(axis=(1, 2), keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=(1, 2), keepdims=True)
        self.inv_std = 1 / np.sqrt(var + epsilon)
        self.normalized = centered * self.inv_std
        return gamma[:, None, None] * self.normalized + beta[:, None, None]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        gamma = self.inputs[1].data
        count = grad.shape[1] * grad.shape[2]
        grad_normalized = grad * gamma[:, None, None]
        grad_x = (
            self.inv_std
            / count
            * (
                count * grad_normalized
                - grad_normalized.sum(axis=(1, 2), keepdims=True)
                - self.normalized
                * (grad_normalized * self.normalized).sum(axis=(1, 2), keepdims=True)
            )
        )
        grad_gamma = (grad * self.normalized).sum(axis=(1, 2))
        grad_beta = grad.sum(axis=(1, 2))
        return grad_x, grad_gamma, grad_beta


def batch_norm2d(x: Tensor, spec: BatchNormSpec, mode: Mode) -> Tensor:
    """
    Train mode normalizes by the spatial statistics of `x` (batch size is 1) and
    moves the running buffers towards them by `momentum`; the running variance uses
    the unbiased estimate. Eval mode uses the running buffers only.
    """
    _require_image(x, "batch_norm2d")
    if x.shape[0] != spec.channels:
        raise ChannelMismatchError(
            f"batch_norm2d expects {spec.channels} channels, got {x.shape[0]}. "
        )
    if mode is Mode.EVAL:
        scale = spec.gamma / (spec.running_var + spec.epsilon).sqrt()
        shift = spec.beta - spec.running_mean * scale
        return x * scale.reshape(spec.channels, 1, 1) + shift.reshape(
            spec.channels, 1, 1
        )

    out = BatchNormTrain.apply(x, spec.gamma, spec.beta, epsilon=spec.epsilon)
    count = x.shape[1] * x.shape[2]
    data = x.data.astype(np.float64)
    mean = data.mean(axis=(1, 2))
    var = data.var(axis=(1, 2))
    if count > 1:
        var = var * count / (count - 1)
    momentum = spec.momentum
    spec.running_mean.update_((1 - momentum) * spec.running_mean.data + momentum * mean)
    spec.running_var.update_((1 - momentum) * spec.running_var.data + momentum * var)
    return out


def pooling_matrix(size_in: int, size_out: int) -> np.ndarray:
    """Row i averages input window [floor(i*n/m), ceil((i+1)*n/m))."""
    matrix = np.zeros((size_out, size_in))
    for i in range(size_out):
        start = (i * size_in) // size_out
        stop = -((-(i + 1) * size_in) // size_out)
        matrix[i, start:stop] = 1 / (stop - start)
    return matrix


def interpolation_matrix(size_in: int, size_out: int) -> np.ndarray:
    """Linear interpolation at half-pixel centers, clamped to the edge samples."""
    matrix = np.zeros((size_out, size_in))
    for i in range(size_out):
        source = (i + 0.5) * size_in / size_out - 0.5
        source = min(max(source, 0.0), size_in - 1.0)
        low = int(np.floor(source))
        high = min(low + 1, size_in - 1)
        fraction = source - low
        matrix[i, low] += 1 - fraction
        matrix[i, high] += fraction
    return matrix


class SeparableResample(Function):
    """out[c] = rows @ x[c] @ cols^T"""

    def forward(
        self,
        x: np.ndarray,
        rows: Optional[np.ndarray] = None,
        cols: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        assert rows is not None and cols is not None
        self.rows = rows.astype(x.dtype)
        self.cols = cols.astype(x.dtype)
        return np.matmul(np.matmul(self.rows, x), self.cols.T)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (np.matmul(np.matmul(self.rows.T, grad), self.cols),)


def adaptive_avg_pool(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _require_image(x, "adaptive_avg_pool")
    _, height, width = x.shape
    if not (1 <= out_h <= height and 1 <= out_w <= width):
        raise ExtentError(
            f"cannot pool {height}x{width} to {out_h}x{out_w}; output extents must "
            "lie in [1, input extent]. "
        )
    return SeparableResample.apply(
        x, rows=pooling_matrix(height, out_h), cols=pooling_matrix(width, out_w)
    )


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _require_image(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ExtentError(f"resize extents must be positive, got {out_h}x{out_w}. ")
    _, height, width = x.shape
    return SeparableResample.apply(
        x,
        rows=interpolation_matrix(height, out_h),
        cols=interpolation_matrix(width, out_w),
    )


def resize_array(array: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a raw C x H x W array outside of any computation tape."""
    with no_grad():
        return bilinear_resize(Tensor(array), out_h, out_w).numpy()


class ConcatChannels(Function):
    def forward(self, *arrays: np.ndarray) -> np.ndarray:
        return np.concatenate(arrays, axis=0)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, ...]:
        bounds = np.cumsum([t.shape[0] for t in self.inputs])[:-1]
        return tuple(np.split(grad, bounds, axis=0))


def concat_channels(*tensors: Tensor) -> Tensor:
    """Stack along the channel axis; earlier tensors take the lower channels."""
    for tensor in tensors:
        _require_image(tensor, "concat_channels")
    extents = {tensor.shape[1:] for tensor in tensors}
    if len(extents) > 1:
        raise ExtentError(
            f"concat_channels needs equal spatial extents, got {sorted(extents)}. "
        )
    return ConcatChannels.apply(*tensors)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    _require_image(x, "slice_channels")
    if not 0 <= start < stop <= x.shape[0]:
        raise ExtentError(
            f"channel slice [{start}, {stop}) is invalid for {x.shape[0]} channels. "
        )
    return x[start:stop]


class MaxPool2(Function):
    """2x2 stride-2 window maxima; ties go to the first element in row-major order."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        channels, height, width = x.shape
        windows = (
            x.reshape(channels, height // 2, 2, width // 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(channels, height // 2, width // 2, 4)
        )
        self.argmax = windows.argmax(axis=-1)[..., None]
        return np.take_along_axis(windows, self.argmax, axis=-1)[..., 0]

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        channels, half_h, half_w = grad.shape
        windows = np.zeros((channels, half_h, half_w, 4), dtype=grad.dtype)
        np.put_along_axis(windows, self.argmax, grad[..., None], axis=-1)
        return (
            windows.reshape(channels, half_h, half_w, 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(channels, 2 * half_h, 2 * half_w),
        )


def max_pool2(x: Tensor) -> Tensor:
    _require_image(x, "max_pool2")
    _, height, width = x.shape
    if height % 2 or width % 2:
        raise ExtentError(f"max_pool2 needs even extents, got {height}x{width}. ")
    return MaxPool2.apply(x)
