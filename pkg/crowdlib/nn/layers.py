from typing import Optional, Sequence

import numpy as np

from crowdlib.nn import functional as F
from crowdlib.nn.module import Module
from crowdlib.nn.specs import BatchNormSpec, Conv2dSpec
from crowdlib.tensors.tensor import Tensor


class Conv2dLayer(Module):
    def __init__(self, spec: Conv2dSpec) -> None:
        super().__init__()
        self.spec = spec
        self.add_parameter("weight", spec.weight)
        if spec.bias is not None:
            self.add_parameter("bias", spec.bias)

    @classmethod
    def create(
        cls,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        groups: int = 1,
        bias: bool = True,
    ) -> "Conv2dLayer":
        return cls(
            Conv2dSpec.create(
                in_channels, out_channels, kernel, rng, groups=groups, bias=bias
            )
        )

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.spec)


class BatchNorm2dLayer(Module):
    def __init__(self, spec: BatchNormSpec) -> None:
        super().__init__()
        self.spec = spec
        self.add_parameter("gamma", spec.gamma)
        self.add_parameter("beta", spec.beta)
        self.add_buffer("running_mean", spec.running_mean)
        self.add_buffer("running_var", spec.running_var)

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm2d(x, self.spec, self.mode)


class ConvBnRelu(Module):
    """Bias-free convolution followed by batch normalization and ReLU."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        groups: int = 1,
        bn_epsilon: float = 1e-5,
        bn_momentum: float = 0.1,
    ) -> None:
        super().__init__()
        self.conv = self.add_module(
            "conv",
            Conv2dLayer.create(
                in_channels, out_channels, kernel, rng, groups=groups, bias=False
            ),
        )
        self.bn = self.add_module(
            "bn",
            BatchNorm2dLayer(
                BatchNormSpec.create(out_channels, bn_epsilon, bn_momentum)
            ),
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x)).relu()


class Sequential(Module):
    """Children applied in order, named by their position unless names are given."""

    def __init__(
        self, layers: Sequence[Module], names: Optional[Sequence[str]] = None
    ) -> None:
        super().__init__()
        names = names or [str(i) for i in range(len(layers))]
        self.layers = [self.add_module(name, layer) for name, layer in zip(names, layers)]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x
