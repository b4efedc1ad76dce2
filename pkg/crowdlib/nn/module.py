from abc import ABCMeta, abstractmethod
from enum import Enum
from typing import Iterator, Mapping, TypeVar, Union

import numpy as np
from typing_extensions import Self

from crowdlib.nn.exceptions import StateMismatchError
from crowdlib.tensors.tensor import Tensor
from crowdlib.utils.protocols import Layer, implements


class Mode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


class ModelParams(dict[str, Tensor]):
    """
    Named, ordered collection of tensors (insertion order is the serialization
    order).
    """

    def count(self) -> int:
        """Total number of scalar values."""
        return sum(tensor.size for tensor in self.values())

    def prefixed(self, prefix: str) -> "ModelParams":
        return ModelParams((f"{prefix}.{name}", t) for name, t in self.items())


M = TypeVar("M", bound="Module")


@implements(Layer)
class Module(metaclass=ABCMeta):
    """
    Base class of layers. Subclasses register their trainable tensors, buffers and
    sub-modules in construction order, which fixes the order of `parameters()`,
    `buffers()` and `state()`.
    """

    def __init__(self) -> None:
        self._parameters: dict[str, Tensor] = {}
        self._buffers: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}
        self.mode = Mode.TRAIN

    def add_parameter(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        tensor.name = name
        self._parameters[name] = tensor
        return tensor

    def add_buffer(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = False
        tensor.name = name
        self._buffers[name] = tensor
        return tensor

    def add_module(self, name: str, module: M) -> M:
        self._children[name] = module
        return module

    @abstractmethod
    def forward(self, x: Tensor) -> Tensor:
        ...

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def _walk(self, kind: str, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        own = self._parameters if kind == "parameters" else self._buffers
        for name, tensor in own.items():
            yield prefix + name, tensor
        for child_name, child in self._children.items():
            yield from child._walk(kind, f"{prefix}{child_name}.")

    def parameters(self) -> ModelParams:
        return ModelParams(self._walk("parameters"))

    def buffers(self) -> ModelParams:
        return ModelParams(self._walk("buffers"))

    def state(self) -> ModelParams:
        """Parameters followed by buffers."""
        state = self.parameters()
        state.update(self.buffers())
        return state

    def load_state(self, state: Mapping[str, Union[Tensor, np.ndarray]]) -> None:
        """
        Copy `state` into this module's tensors. Names must match exactly (order is
        irrelevant); the first mismatch in module order is reported.
        """
        own = self.state()
        for name, tensor in own.items():
            if name not in state:
                raise StateMismatchError(f"missing tensor {name!r} in state. ")
            value = state[name]
            shape = value.shape
            if tuple(shape) != tensor.shape:
                raise StateMismatchError(
                    f"tensor {name!r} has shape {tuple(shape)}, expected {tensor.shape}. "
                )
        unexpected = [name for name in state if name not in own]
        if unexpected:
            raise StateMismatchError(f"unexpected tensor {unexpected[0]!r} in state. ")
        for name, tensor in own.items():
            value = state[name]
            tensor.update_(value.data if isinstance(value, Tensor) else value)

    def parameter_count(self) -> int:
        return self.parameters().count()

    def set_mode(self, mode: Mode) -> Self:
        self.mode = mode
        for child in self._children.values():
            child.set_mode(mode)
        return self

    def train(self) -> Self:
        return self.set_mode(Mode.TRAIN)

    def eval(self) -> Self:
        return self.set_mode(Mode.EVAL)
