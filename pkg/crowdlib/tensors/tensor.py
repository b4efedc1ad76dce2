"""
Dense tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a read-only numpy array. Every differentiable operation is a
`Function` subclass; applying it to tensors that require gradients records the
function instance on the thread's `ComputationTape`. `backward` replays the
recorded functions in reverse order and consumes the tape.

The engine runs in float32 by default. `precision("float64")` switches every
tensor created inside the block to float64 (used by gradient checks).
"""
import logging
import threading
from abc import ABCMeta, abstractmethod
from contextlib import contextmanager
from typing import (
    Any,
    Iterator,
    Literal,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    TypeAlias,
    Union,
)

import numpy as np
from typing_extensions import Self

from crowdlib.tensors.exceptions import (
    ShapeMismatchError,
    NonFiniteError,
    NonScalarBackwardError,
    TapeConsumedError,
    PrecisionError,
    LeafUpdateError,
)

logger = logging.getLogger(__name__)

# operations an implicit tape may hold before a warning is logged
IMPLICIT_TAPE_LIMIT = 10_000

ArrayLike: TypeAlias = Union[np.ndarray, float, int, Sequence[Any]]
Operand: TypeAlias = Union["Tensor", float, int]
PrecisionName: TypeAlias = Literal["float32", "float64"]

_PRECISIONS: dict[str, type] = {"float32": np.float32, "float64": np.float64}
_dtype: type = np.float32


def get_dtype() -> type:
    """Floating point type of tensors created now."""
    return _dtype


def set_precision(name: PrecisionName) -> None:
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise PrecisionError(f"unknown precision {name!r}; use float32 or float64. ")


@contextmanager
def precision(name: PrecisionName) -> Iterator[None]:
    """Run the enclosed block with the engine switched to the given precision."""
    global _dtype
    previous = _dtype
    set_precision(name)
    try:
        yield
    finally:
        _dtype = previous


class _EngineState(threading.local):
    def __init__(self) -> None:
        self.grad_enabled = True
        self.tape: Optional["ComputationTape"] = None


_state = _EngineState()


@contextmanager
def no_grad() -> Iterator[None]:
    """Operations inside the block record nothing and return constants."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class ComputationTape:
    """
    Ordered record of the operations executed by one thread.

    A tape is single-use: a completed `backward` releases its entries and marks it
    consumed. Using it as a context manager makes it the thread's active tape for
    the enclosed block.
    """

    def __init__(self, warn_after: Optional[int] = None) -> None:
        self.entries: list["Function"] = []
        self.consumed = False
        self.warn_after = warn_after
        self._previous: Optional[ComputationTape] = None

    def record(self, function: "Function") -> None:
        if self.consumed:
            raise TapeConsumedError(
                f"cannot record {type(function).__name__} on a consumed tape. "
            )
        self.entries.append(function)
        if self.warn_after is not None and len(self.entries) == self.warn_after:
            logger.warning(
                "%d operations recorded outside a ComputationTape block and not yet "
                "consumed by backward; use no_grad() for inference",
                self.warn_after,
            )

    def release(self) -> None:
        self.entries.clear()
        self.consumed = True

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> Self:
        self._previous = _state.tape
        _state.tape = self
        return self

    def __exit__(self, *exc_info: Any) -> None:
        _state.tape = self._previous
        self._previous = None


def current_tape() -> ComputationTape:
    """
    The active tape of this thread; a fresh one replaces a consumed tape. An
    implicit tape warns once it holds IMPLICIT_TAPE_LIMIT operations.
    """
    if _state.tape is None or _state.tape.consumed:
        _state.tape = ComputationTape(warn_after=IMPLICIT_TAPE_LIMIT)
    return _state.tape


class Function(metaclass=ABCMeta):
    """
    Base class of differentiable operations.

    `forward` receives the numpy arrays of the input tensors (plus static keyword
    arguments) and may keep whatever it needs for `backward` on `self`.
    `backward` receives the gradient with respect to the output and returns one
    gradient (or None) per input.
    """

    def __init__(self, *inputs: "Tensor") -> None:
        self.inputs = inputs
        self.output: Optional[Tensor] = None

    @abstractmethod
    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        ...

    @abstractmethod
    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        ...

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        function = cls(*inputs)
        data = np.asarray(function.forward(*(t.data for t in inputs), **kwargs))
        data = data.astype(_dtype, copy=False)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(
                f"{cls.__name__} produced non-finite values for input shapes "
                f"{[t.shape for t in inputs]}. "
            )
        requires_grad = _state.grad_enabled and any(t.requires_grad for t in inputs)
        output = Tensor._wrap(data, requires_grad=requires_grad)
        if requires_grad:
            tape = current_tape()
            tape.record(function)
            function.output = output
            output.creator = function
            output.tape = tape
        return output

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum `grad` over the axes that were broadcast to reach its shape."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    """
    Per-axis size-1 broadcasting; the shorter shape is first prefixed with 1s.

    Raises `ShapeMismatchError` reporting both shapes.
    """
    rank = max(len(a), len(b))
    padded_a = (1,) * (rank - len(a)) + tuple(a)
    padded_b = (1,) * (rank - len(b)) + tuple(b)
    shape = []
    for m, n in zip(padded_a, padded_b):
        if m != n and m != 1 and n != 1:
            raise ShapeMismatchError(f"cannot broadcast shapes {a} and {b}. ")
        shape.append(max(m, n))
    return tuple(shape)


class Tensor:
    """
    Dense N-dimensional float array with an optional gradient slot.

    Tensor data is read-only. Leaves (parameters and buffers) may be replaced in
    place with `update_`; every other tensor is the immutable result of a forward
    operation.
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        array = np.array(data, dtype=_dtype)
        self._init(array, requires_grad, name)

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor._init(array, requires_grad, None)
        return tensor

    def _init(self, array: np.ndarray, requires_grad: bool, name: Optional[str]) -> None:
        if any(extent < 1 for extent in array.shape):
            raise ShapeMismatchError(
                f"tensor extents must be positive, got shape {array.shape}. "
            )
        array.flags.writeable = False
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[Tensor] = None
        self.creator: Optional[Function] = None
        self.tape: Optional[ComputationTape] = None

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.zeros(shape), requires_grad=requires_grad)

    @classmethod
    def ones(cls, *shape: int, requires_grad: bool = False) -> "Tensor":
        return cls(np.ones(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def item(self) -> float:
        if self.size != 1:
            raise NonScalarBackwardError(
                f"item() needs a single element, tensor has shape {self.shape}. "
            )
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """A writable copy of the data."""
        return self.data.copy()

    def update_(self, data: ArrayLike) -> None:
        """Replace the data of a leaf tensor (optimizer steps, running statistics)."""
        if self.creator is not None:
            raise LeafUpdateError(
                f"cannot update {self.name or 'tensor'} produced by "
                f"{type(self.creator).__name__}. "
            )
        array = np.array(data, dtype=self.dtype)
        if array.shape != self.shape:
            raise ShapeMismatchError(
                f"cannot update tensor of shape {self.shape} with shape {array.shape}. "
            )
        array.flags.writeable = False
        self.data = array

    def backward(self) -> dict[str, "Tensor"]:
        return backward(self)

    def __add__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("add", self, _as_tensor(other))

    def __radd__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("add", _as_tensor(other), self)

    def __sub__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("sub", self, _as_tensor(other))

    def __rsub__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("sub", _as_tensor(other), self)

    def __mul__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("mul", self, _as_tensor(other))

    def __rmul__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("mul", _as_tensor(other), self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("div", self, _as_tensor(other))

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return _ops.elementwise("div", _as_tensor(other), self)

    def __neg__(self) -> "Tensor":
        return _ops.elementwise("neg", self)

    def __getitem__(self, index: Any) -> "Tensor":
        return _ops.GetItem.apply(self, index=index)

    def relu(self) -> "Tensor":
        return _ops.elementwise("relu", self)

    def tanh(self) -> "Tensor":
        return _ops.elementwise("tanh", self)

    def abs(self) -> "Tensor":
        return _ops.elementwise("abs", self)

    def sqrt(self) -> "Tensor":
        return _ops.elementwise("sqrt", self)

    def sum(
        self, axes: Optional[Sequence[int]] = None, keepdims: bool = False
    ) -> "Tensor":
        return _ops.reduce("sum", self, axes=axes, keepdims=keepdims)

    def l2_norm(
        self,
        axes: Optional[Sequence[int]] = None,
        epsilon: float = 0.0,
        keepdims: bool = False,
    ) -> "Tensor":
        return _ops.reduce("l2_norm", self, axes=axes, epsilon=epsilon, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return _ops.Reshape.apply(self, shape=shape)

    def __len__(self) -> int:
        return self.shape[0] if self.ndim else 1

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype}, "
            f"requires_grad={self.requires_grad}{label})"
        )


def _as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def backward(
    loss: Tensor, leaves: Optional[Mapping[str, Tensor]] = None
) -> dict[str, Tensor]:
    """
    Back-propagate from a single-element `loss` through its tape.

    Every requires-grad leaf reachable from `loss` gets its `grad` set. Returns a
    name -> gradient map: for the given `leaves` (unreachable ones get zeros), or
    else for every reached leaf, keyed by its name (or `leaf<i>` when unnamed).
    """
    if loss.size != 1:
        raise NonScalarBackwardError(
            f"backward needs a single-element loss, got shape {loss.shape}. "
        )
    reached: dict[int, Tensor] = {}
    leaf_grads: dict[int, np.ndarray] = {}
    if loss.creator is None:
        if loss.requires_grad:
            reached[id(loss)] = loss
            leaf_grads[id(loss)] = np.ones_like(loss.data)
    else:
        tape = loss.tape
        if tape is None or tape.consumed:
            raise TapeConsumedError(
                "backward was already run on the tape that produced this loss. "
            )
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for function in reversed(tape.entries):
            output = function.output
            grad = grads.pop(id(output), None)
            if grad is None:
                continue
            input_grads = function.backward(grad)
            for tensor, input_grad in zip(function.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if tensor.creator is None:
                    reached[id(tensor)] = tensor
                    target = leaf_grads
                else:
                    target = grads
                key = id(tensor)
                if key in target:
                    target[key] = target[key] + input_grad
                else:
                    target[key] = input_grad
        tape.release()
        logger.debug("backward reached %d leaves", len(reached))

    for key, tensor in reached.items():
        tensor.grad = Tensor._wrap(np.asarray(leaf_grads[key], dtype=tensor.dtype))

    if leaves is None:
        return {
            (tensor.name or f"leaf{i}"): tensor.grad  # type: ignore[misc]
            for i, tensor in enumerate(reached.values())
        }
    result: dict[str, Tensor] = {}
    for name, tensor in leaves.items():
        if id(tensor) not in reached or tensor.grad is None:
            tensor.grad = Tensor._wrap(np.zeros_like(tensor.data))
        result[name] = tensor.grad
    return result


from crowdlib.tensors import functions as _ops  # noqa: E402
