from typing import Iterable, Protocol, TypeVar, TYPE_CHECKING

if TYPE_CHECKING:
    from crowdlib.nn.module import ModelParams
    from crowdlib.tensors.tensor import Tensor
    from crowdlib.verification.registry import CheckResult


P = TypeVar("P")


def implements(protocol: Protocol):
    """
    Decorate a class to enable mypy to check if it implements the given protocol.
    """

    def wrapper(cls):
        cls._ = _protocol_implementation_check(protocol)
        return cls

    return wrapper


def _protocol_implementation_check(protocol: P):
    def wrapper(self) -> P:
        return self

    return wrapper


class Layer(Protocol):
    """
    A differentiable building block: maps a tensor to a tensor and owns a named,
    ordered set of trainable tensors.
    """

    def __call__(self, x: "Tensor") -> "Tensor":
        ...

    def parameters(self) -> "ModelParams":
        ...


class VerificationSuite(Protocol):
    """A named group of numeric checks run by `pscnet verify`."""

    def __call__(self) -> Iterable["CheckResult"]:
        ...
