"""
Pyramidal scale module: a local and a global PyConv block run side by side and
their outputs are stacked along the channel axis.
"""
import logging
from typing import Sequence

import numpy as np

from crowdlib.nn import functional as F
from crowdlib.nn.layers import ConvBnRelu
from crowdlib.nn.module import Module
from crowdlib.tensors.tensor import Tensor

logger = logging.getLogger(__name__)


def clamp_groups(nominal: int, channels: int) -> int:
    """Largest divisor of `channels` not exceeding `nominal`."""
    for groups in range(min(nominal, channels), 0, -1):
        if channels % groups == 0:
            return groups
    return 1


def pyconv_parameter_count(
    in_channels: int, width: int, kernels: Sequence[int], groups: Sequence[int]
) -> int:
    """Closed form for entry + branches + fuse, batch-norm scale and shift included."""
    branch = width // len(kernels)
    count = in_channels * width + 2 * width
    for kernel, nominal in zip(kernels, groups):
        g = clamp_groups(nominal, branch)
        count += branch * (width // g) * kernel * kernel + 2 * branch
    return count + width * width + 2 * width


class PyConvBlock(Module):
    """
    1x1 entry conv to width P, parallel grouped convs of decreasing kernel size
    (each producing P / len(kernels) channels), then a 1x1 fuse conv. Every conv is
    bias-free and followed by batch normalization and ReLU.
    """

    def __init__(
        self,
        in_channels: int,
        width: int,
        kernels: Sequence[int],
        groups: Sequence[int],
        rng: np.random.Generator,
        bn_epsilon: float = 1e-5,
        bn_momentum: float = 0.1,
    ) -> None:
        super().__init__()
        self.width = width
        bn = dict(bn_epsilon=bn_epsilon, bn_momentum=bn_momentum)
        self.entry = self.add_module(
            "entry", ConvBnRelu(in_channels, width, 1, rng, **bn)
        )
        branch = width // len(kernels)
        self.branches = []
        for kernel, nominal in zip(kernels, groups):
            g = clamp_groups(nominal, branch)
            if g != nominal:
                logger.debug("kernel %d branch: groups %d -> %d", kernel, nominal, g)
            self.branches.append(
                self.add_module(
                    f"branch{kernel}",
                    ConvBnRelu(width, branch, kernel, rng, groups=g, **bn),
                )
            )
        self.fuse = self.add_module("fuse", ConvBnRelu(width, width, 1, rng, **bn))

    def branch_outputs(self, x: Tensor) -> list[Tensor]:
        """Per-branch activations before fusion."""
        entry = self.entry(x)
        return [branch(entry) for branch in self.branches]

    def forward(self, x: Tensor) -> Tensor:
        return self.fuse(F.concat_channels(*self.branch_outputs(x)))


class GlobalPyConv(Module):
    """PyConv block applied to an adaptively pooled copy of the input, resized back."""

    def __init__(self, block: PyConvBlock, pool_size: int = 9) -> None:
        super().__init__()
        self.pool_size = pool_size
        self.block = self.add_module("block", block)

    def forward(self, x: Tensor) -> Tensor:
        _, height, width = x.shape
        pooled = F.adaptive_avg_pool(
            x, min(self.pool_size, height), min(self.pool_size, width)
        )
        return F.bilinear_resize(self.block(pooled), height, width)


class PyramidalScaleModule(Module):
    def __init__(
        self,
        in_channels: int,
        width: int,
        rng: np.random.Generator,
        kernels: Sequence[int] = (9, 7, 5, 3),
        groups: Sequence[int] = (16, 8, 4, 1),
        pool_size: int = 9,
        bn_epsilon: float = 1e-5,
        bn_momentum: float = 0.1,
    ) -> None:
        super().__init__()
        self.width = width

        def block() -> PyConvBlock:
            return PyConvBlock(
                in_channels, width, kernels, groups, rng, bn_epsilon, bn_momentum
            )

        self.local = self.add_module("local", block())
        self.global_ = self.add_module("global", GlobalPyConv(block(), pool_size))

    @property
    def out_channels(self) -> int:
        return 2 * self.width

    def forward(self, x: Tensor) -> Tensor:
        """Channels [0, P) come from the local block, [P, 2P) from the global one."""
        return F.concat_channels(self.local(x), self.global_(x))
