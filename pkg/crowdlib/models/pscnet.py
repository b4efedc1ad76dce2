import logging
from dataclasses import dataclass
from math import ceil
from typing import Optional

import numpy as np

from crowdlib.models.backbone import VggBackbone
from crowdlib.models.config import PscnetConfig
from crowdlib.models.gcm import GlobalContextModule
from crowdlib.models.psm import PyramidalScaleModule
from crowdlib.nn import functional as F
from crowdlib.nn.layers import Conv2dLayer
from crowdlib.nn.module import Module
from crowdlib.tensors.functions import sequential_sum
from crowdlib.tensors.tensor import Tensor, no_grad
from crowdlib.utils.seeding import make_rng

logger = logging.getLogger(__name__)

INPUT_STRIDE = 16

# independent initialization streams per component
BACKBONE_STREAM, PSM_STREAM, GCM_STREAM, HEAD_STREAM = range(4)


class DensityHead(Module):
    """conv3x3 + ReLU, conv3x3 + ReLU, conv1x1 to one channel, absolute value."""

    def __init__(
        self,
        in_channels: int,
        widths: tuple[int, int],
        rng: np.random.Generator,
    ) -> None:
        super().__init__()
        first, second = widths
        self.conv1 = self.add_module(
            "conv1", Conv2dLayer.create(in_channels, first, 3, rng)
        )
        self.conv2 = self.add_module("conv2", Conv2dLayer.create(first, second, 3, rng))
        self.out = self.add_module("out", Conv2dLayer.create(second, 1, 1, rng))

    def forward(self, x: Tensor) -> Tensor:
        x = self.conv1(x).relu()
        x = self.conv2(x).relu()
        return self.out(x).abs()


class Pscnet(Module):
    """
    Backbone (stride 16), x2 bilinear upsample, pyramidal scale module, global
    context gate and regression head; the output is a 1 x H/8 x W/8 density map.
    """

    def __init__(self, config: PscnetConfig) -> None:
        super().__init__()
        self.config = config
        seed = config.seed
        self.backbone = self.add_module(
            "backbone", VggBackbone(config.backbone, make_rng(seed, BACKBONE_STREAM))
        )
        channels = self.backbone.out_channels
        self.psm: Optional[PyramidalScaleModule] = None
        if config.use_psm:
            self.psm = self.add_module(
                "psm",
                PyramidalScaleModule(
                    channels,
                    config.pyramid_width,
                    make_rng(seed, PSM_STREAM),
                    kernels=config.psm_kernels,
                    groups=config.psm_groups,
                    pool_size=config.psm_pool_size,
                    bn_epsilon=config.bn_epsilon,
                    bn_momentum=config.bn_momentum,
                ),
            )
            channels = self.psm.out_channels
        self.gcm: Optional[GlobalContextModule] = None
        if config.use_gcm:
            self.gcm = self.add_module(
                "gcm",
                GlobalContextModule(
                    channels,
                    make_rng(seed, GCM_STREAM),
                    kernel_size=config.gcm_kernel,
                    epsilon=config.gcm_epsilon,
                    gate=config.gcm_gate,
                ),
            )
        self.head = self.add_module(
            "head",
            DensityHead(channels, config.head_widths, make_rng(seed, HEAD_STREAM)),
        )

    def forward(self, x: Tensor) -> Tensor:
        features = self.backbone(x)
        _, height, width = features.shape
        features = F.bilinear_resize(features, 2 * height, 2 * width)
        if self.psm is not None:
            features = self.psm(features)
        if self.gcm is not None:
            features = self.gcm(features)
        return self.head(features)

    def predict(self, image: np.ndarray) -> Tensor:
        """Density of an image of any size, cropped back to its own extents."""
        padded = pad_to_stride(image, np.zeros((0, 2)))
        with no_grad():
            density = self(Tensor(padded.image))
        return padded.crop(density, self.config.output_stride)


def predicted_count(density: Tensor) -> float:
    """Sum of all density cells, accumulated sequentially in row-major order."""
    return float(sequential_sum(density.data, tuple(range(density.ndim))))


@dataclass(frozen=True)
class PaddedInput:
    """Image zero-padded on the right and bottom, with its original extents."""

    image: np.ndarray
    points: np.ndarray
    height: int
    width: int

    @property
    def is_padded(self) -> bool:
        return self.image.shape[1:] != (self.height, self.width)

    def density_extents(self, output_stride: int = 8) -> tuple[int, int]:
        return ceil(self.height / output_stride), ceil(self.width / output_stride)

    def crop(self, density: Tensor, output_stride: int = 8) -> Tensor:
        """Density cells covering the original image; padded-only cells dropped."""
        rows, cols = self.density_extents(output_stride)
        if density.shape[1:] == (rows, cols):
            return density
        return density[:, :rows, :cols]

    def pad_band_mass(self, density: Tensor, output_stride: int = 8) -> float:
        """Predicted mass in cells that cover padding only."""
        return predicted_count(density) - predicted_count(
            self.crop(density, output_stride)
        )


def pad_to_stride(
    image: np.ndarray, points: np.ndarray, stride: int = INPUT_STRIDE
) -> PaddedInput:
    _, height, width = image.shape
    padded_h, padded_w = -(-height // stride) * stride, -(-width // stride) * stride
    if (padded_h, padded_w) != (height, width):
        image = np.pad(image, ((0, 0), (0, padded_h - height), (0, padded_w - width)))
    return PaddedInput(image=image, points=points, height=height, width=width)
