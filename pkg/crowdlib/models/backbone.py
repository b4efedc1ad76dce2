import logging
from pathlib import Path
from typing import Union

import numpy as np

from crowdlib.models.config import BackboneConfig
from crowdlib.models.exceptions import StrideAlignmentError, WeightFileError
from crowdlib.nn import functional as F
from crowdlib.nn.exceptions import StateMismatchError
from crowdlib.nn.layers import Conv2dLayer
from crowdlib.nn.module import ModelParams, Module
from crowdlib.tensors.tensor import Tensor
from crowdlib.training.checkpoint import read_checkpoint

logger = logging.getLogger(__name__)

EXTERNAL_PREFIX = "backbone."


class VggBackbone(Module):
    """
    VGG19 feature extractor without the classifier and the last pooling stage:
    conv3x3 + ReLU layers in blocks, max pooling between blocks, output stride 16.
    """

    def __init__(self, config: BackboneConfig, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.blocks: list[list[Conv2dLayer]] = []
        in_channels = 3
        for block, depth in enumerate(config.block_depths):
            out_channels = config.channels(block)
            layers = []
            for layer in range(depth):
                conv = Conv2dLayer.create(in_channels, out_channels, 3, rng)
                layers.append(self.add_module(f"conv{block + 1}_{layer + 1}", conv))
                in_channels = out_channels
            self.blocks.append(layers)

    @property
    def out_channels(self) -> int:
        return self.config.out_channels

    def check_extents(self, height: int, width: int) -> None:
        stride = self.config.stride
        if height % stride or width % stride:
            pad_h, pad_w = -height % stride, -width % stride
            raise StrideAlignmentError(
                f"input {height}x{width} is not a multiple of {stride}; pad by "
                f"{pad_h} rows and {pad_w} columns. "
            )

    def forward(self, x: Tensor) -> Tensor:
        self.check_extents(x.shape[1], x.shape[2])
        last = len(self.blocks) - 1
        for block, layers in enumerate(self.blocks):
            for conv in layers:
                x = conv(x).relu()
            if block < last:
                x = F.max_pool2(x)
        return x


def load_external_weights(
    path: Union[str, Path], backbone: VggBackbone
) -> ModelParams:
    """
    Replace the backbone parameters with the tensors of a checkpoint file. Names
    may carry a "backbone." prefix, as in full-model checkpoints; tensors of other
    components are ignored.
    """
    tensors = read_checkpoint(path)
    own = tensors
    if any(name.startswith(EXTERNAL_PREFIX) for name in tensors):
        own = {
            name[len(EXTERNAL_PREFIX) :]: array
            for name, array in tensors.items()
            if name.startswith(EXTERNAL_PREFIX)
        }
    try:
        backbone.load_state(own)
    except StateMismatchError as error:
        raise WeightFileError(f"{path}: {error.message}") from None
    logger.info("loaded %d backbone tensors from %s", len(own), path)
    return backbone.parameters()
