"""
Elementwise, reduction and indexing operations of the tensor engine.

Reductions accumulate sequentially in row-major order over the reduced axes
(`sequential_sum`), so results are bit-reproducible and independent of numpy's
pairwise summation.
"""
from typing import Any, Literal, Optional, Sequence, Tuple, TypeAlias

import numpy as np

from crowdlib.tensors.tensor import Function, Tensor, broadcast_shape
from crowdlib.tensors.exceptions import (
    InvalidAxisError,
    InvalidEpsilonError,
    ShapeMismatchError,
    UnknownOperationError,
)

ElementwiseKind: TypeAlias = Literal[
    "add", "sub", "mul", "div", "neg", "relu", "tanh", "abs", "sqrt"
]
ReduceKind: TypeAlias = Literal["sum", "l2_norm"]


def sequential_sum(
    array: np.ndarray, axes: Sequence[int], keepdims: bool = False
) -> np.ndarray:
    """Sum over `axes`, accumulating one element at a time in row-major order."""
    axes = tuple(sorted(axes))
    if not axes:
        return array.copy()
    kept = [axis for axis in range(array.ndim) if axis not in axes]
    moved = np.transpose(array, kept + list(axes))
    flat = moved.reshape(moved.shape[: len(kept)] + (-1,))
    total = np.cumsum(flat, axis=-1)[..., -1]
    if keepdims:
        total = total.reshape(
            [1 if axis in axes else array.shape[axis] for axis in range(array.ndim)]
        )
    return np.asarray(total)


def normalize_axes(axes: Optional[Sequence[int]], rank: int) -> Tuple[int, ...]:
    """Resolve negative indices; `None` means every axis."""
    if axes is None:
        return tuple(range(rank))
    resolved = []
    for axis in axes:
        if not -rank <= axis < rank:
            raise InvalidAxisError(f"axis {axis} is invalid for a rank-{rank} tensor. ")
        resolved.append(axis % rank)
    return tuple(sorted(set(resolved)))


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.inputs
        return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.inputs
        return self.unbroadcast(grad, a.shape), self.unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a * b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.inputs
        return (
            self.unbroadcast(grad * b.data, a.shape),
            self.unbroadcast(grad * a.data, b.shape),
        )


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a / b

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        a, b = self.inputs
        return (
            self.unbroadcast(grad / b.data, a.shape),
            self.unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (-grad,)


class Relu(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (self.inputs[0].data > 0),)


class Tanh(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.tanh(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * (1 - self.y * self.y),)


class Abs(Function):
    # subgradient sign(0) = 0
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.abs(x)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad * np.sign(self.inputs[0].data),)


class Sqrt(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.y = np.sqrt(x)
        return self.y

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        safe = np.where(self.y > 0, self.y, 1)
        return (np.where(self.y > 0, grad / (2 * safe), 0),)


_UNARY: dict[str, type[Function]] = {
    "neg": Neg,
    "relu": Relu,
    "tanh": Tanh,
    "abs": Abs,
    "sqrt": Sqrt,
}
_BINARY: dict[str, type[Function]] = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}


def elementwise(kind: ElementwiseKind, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    Apply an elementwise operation. Binary kinds broadcast `a` and `b` along
    size-1 axes; a mismatch raises `ShapeMismatchError` with both shapes.
    """
    if kind in _BINARY:
        if b is None:
            raise ShapeMismatchError(f"{kind} needs two operands. ")
        broadcast_shape(a.shape, b.shape)
        return _BINARY[kind].apply(a, b)
    if kind in _UNARY:
        return _UNARY[kind].apply(a)
    raise UnknownOperationError(f"unknown elementwise kind {kind!r}. ")


class Copy(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.copy()

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad,)


class Sum(Function):
    def forward(
        self, x: np.ndarray, axes: Tuple[int, ...] = (), keepdims: bool = False
    ) -> np.ndarray:
        self.axes = axes
        return sequential_sum(x, axes, keepdims)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        shape = self.inputs[0].shape
        kept = [1 if axis in self.axes else shape[axis] for axis in range(len(shape))]
        return (np.broadcast_to(grad.reshape(kept), shape).copy(),)


class L2Norm(Function):
    """{[sum of x^2 over axes] + epsilon}^(1/2)"""

    def forward(
        self,
        x: np.ndarray,
        axes: Tuple[int, ...] = (),
        epsilon: float = 0.0,
        keepdims: bool = False,
    ) -> np.ndarray:
        self.axes = axes
        self.norm = np.sqrt(sequential_sum(x * x, axes, keepdims=True) + epsilon)
        if keepdims:
            return self.norm
        return self.norm.reshape(
            [n for axis, n in enumerate(x.shape) if axis not in axes]
        )

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        x = self.inputs[0].data
        grad = grad.reshape(self.norm.shape)
        safe = np.where(self.norm > 0, self.norm, 1)
        return (np.where(self.norm > 0, grad * x / safe, 0),)


def reduce(
    kind: ReduceKind,
    x: Tensor,
    axes: Optional[Sequence[int]] = None,
    epsilon: float = 0.0,
    keepdims: bool = False,
) -> Tensor:
    """
    Reduce `x` over `axes` (`None` = all). An empty axis set returns a copy.
    `l2_norm` adds `epsilon` under the square root.
    """
    if epsilon < 0:
        raise InvalidEpsilonError(f"epsilon must be nonnegative, got {epsilon}. ")
    resolved = normalize_axes(axes, x.ndim)
    if not resolved:
        return Copy.apply(x)
    if kind == "sum":
        return Sum.apply(x, axes=resolved, keepdims=keepdims)
    if kind == "l2_norm":
        return L2Norm.apply(x, axes=resolved, epsilon=epsilon, keepdims=keepdims)
    raise UnknownOperationError(f"unknown reduction kind {kind!r}. ")


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeMismatchError(f"cannot reshape {x.shape} into {shape}. ")

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        return (grad.reshape(self.inputs[0].shape),)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any = None) -> np.ndarray:
        self.index = index
        return np.array(x[index])

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        out = np.zeros_like(self.inputs[0].data)
        np.add.at(out, self.index, grad)
        return (out,)
