"""
Hyper-parameters and weights of the structured layers.

Weights are initialized from a uniform distribution with bound sqrt(6 / fan_in)
(ReLU gain), drawn from the caller's seeded generator. Biases start at zero.
"""
from dataclasses import dataclass
from math import sqrt
from typing import Optional

import numpy as np

from crowdlib.nn.exceptions import InvalidGroupsError, InvalidKernelError
from crowdlib.tensors.exceptions import ShapeMismatchError
from crowdlib.tensors.tensor import Tensor


@dataclass
class Conv2dSpec:
    """
    Grouped "same" convolution: weight has shape out x (in/G) x k x k and group g
    reads only input channels [g*in/G, (g+1)*in/G).
    """

    in_channels: int
    out_channels: int
    kernel: int
    weight: Tensor
    groups: int = 1
    dilation: int = 1
    bias: Optional[Tensor] = None

    def __post_init__(self) -> None:
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidKernelError(
                f"kernel must be a positive odd extent, got {self.kernel}. "
            )
        if (
            self.groups < 1
            or self.in_channels % self.groups
            or self.out_channels % self.groups
        ):
            raise InvalidGroupsError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}. "
            )
        if self.dilation < 1:
            raise InvalidKernelError(f"dilation must be positive, got {self.dilation}. ")
        expected = (
            self.out_channels,
            self.in_channels // self.groups,
            self.kernel,
            self.kernel,
        )
        if self.weight.shape != expected:
            raise ShapeMismatchError(
                f"conv weight has shape {self.weight.shape}, expected {expected}. "
            )
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ShapeMismatchError(
                f"conv bias has shape {self.bias.shape}, "
                f"expected {(self.out_channels,)}. "
            )

    @property
    def padding(self) -> int:
        return (self.kernel - 1) * self.dilation // 2

    @property
    def parameter_count(self) -> int:
        count = self.out_channels * (self.in_channels // self.groups) * self.kernel**2
        if self.bias is not None:
            count += self.out_channels
        return count

    @classmethod
    def create(
        cls,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        groups: int = 1,
        dilation: int = 1,
        bias: bool = True,
    ) -> "Conv2dSpec":
        if groups < 1 or in_channels % groups or out_channels % groups:
            raise InvalidGroupsError(
                f"groups={groups} must divide in_channels={in_channels} "
                f"and out_channels={out_channels}. "
            )
        fan_in = (in_channels // groups) * kernel * kernel
        bound = sqrt(6 / fan_in)
        shape = (out_channels, in_channels // groups, kernel, kernel)
        weight = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)
        bias_tensor = None
        if bias:
            bias_tensor = Tensor(np.zeros(out_channels), requires_grad=True)
        return cls(
            in_channels=in_channels,
            out_channels=out_channels,
            kernel=kernel,
            weight=weight,
            groups=groups,
            dilation=dilation,
            bias=bias_tensor,
        )


@dataclass
class BatchNormSpec:
    channels: int
    gamma: Tensor
    beta: Tensor
    running_mean: Tensor
    running_var: Tensor
    epsilon: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(
        cls, channels: int, epsilon: float = 1e-5, momentum: float = 0.1
    ) -> "BatchNormSpec":
        return cls(
            channels=channels,
            gamma=Tensor(np.ones(channels), requires_grad=True),
            beta=Tensor(np.zeros(channels), requires_grad=True),
            running_mean=Tensor(np.zeros(channels)),
            running_var=Tensor(np.ones(channels)),
            epsilon=epsilon,
            momentum=momentum,
        )
