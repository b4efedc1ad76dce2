from enum import Enum
from fractions import Fraction
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CHANNEL_QUANTUM = 16


def scale_channels(base: int, width_scale: float) -> int:
    """Nearest multiple of 16 to `base * width_scale`, at least 16."""
    scaled = CHANNEL_QUANTUM * round(base * width_scale / CHANNEL_QUANTUM)
    return max(CHANNEL_QUANTUM, scaled)


def parse_width_scale(value: Any) -> Any:
    """Accept rationals written as "1/8" next to plain numbers."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"width_scale {value!r} is not a number or ratio")
    return value


class GcmGate(str, Enum):
    RESIDUAL = "residual"
    LITERAL = "literal"


class BackboneConfig(BaseModel):
    """
    Truncated VGG19 layout: blocks of {2,2,4,4,4} 3x3 convs (each followed by ReLU)
    with 2x2 max pooling after the first four blocks, output stride 16.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    width_scale: float = Field(default=1.0, gt=0, le=1)
    block_depths: tuple[int, ...] = (2, 2, 4, 4, 4)
    block_channels: tuple[int, ...] = (64, 128, 256, 512, 512)

    @field_validator("width_scale", mode="before")
    @classmethod
    def parse_ratio(cls, value: Any) -> Any:
        return parse_width_scale(value)

    @model_validator(mode="after")
    def check_layout(self) -> "BackboneConfig":
        if len(self.block_depths) != len(self.block_channels):
            raise ValueError("block_depths and block_channels differ in length")
        return self

    @property
    def stride(self) -> int:
        return 2 ** (len(self.block_depths) - 1)

    def channels(self, block: int) -> int:
        return scale_channels(self.block_channels[block], self.width_scale)

    @property
    def out_channels(self) -> int:
        return self.channels(len(self.block_channels) - 1)


class PscnetConfig(BaseModel):
    """Architecture of the density estimator; `seed` fixes every initialization."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    backbone: BackboneConfig = BackboneConfig()
    psm_width: Optional[int] = Field(default=None, gt=0)
    psm_kernels: tuple[int, ...] = (9, 7, 5, 3)
    psm_groups: tuple[int, ...] = (16, 8, 4, 1)
    psm_pool_size: int = Field(default=9, gt=0)
    use_psm: bool = True
    use_gcm: bool = True
    gcm_gate: GcmGate = GcmGate.RESIDUAL
    gcm_kernel: int = 3
    gcm_epsilon: float = Field(default=1e-4, ge=0)
    head_channels: tuple[int, int] = (256, 128)
    bn_epsilon: float = Field(default=1e-5, gt=0)
    bn_momentum: float = Field(default=0.1, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_pyramid(self) -> "PscnetConfig":
        if len(self.psm_kernels) != len(self.psm_groups):
            raise ValueError("psm_kernels and psm_groups differ in length")
        if any(k < 1 or k % 2 == 0 for k in self.psm_kernels):
            raise ValueError(f"psm_kernels must be odd, got {self.psm_kernels}")
        if self.gcm_kernel < 1 or self.gcm_kernel % 2 == 0:
            raise ValueError(f"gcm_kernel must be odd, got {self.gcm_kernel}")
        if self.pyramid_width % len(self.psm_kernels):
            raise ValueError(
                f"psm width {self.pyramid_width} is not divisible into "
                f"{len(self.psm_kernels)} branches"
            )
        return self

    @classmethod
    def toy(cls, seed: int = 0, **overrides: Any) -> "PscnetConfig":
        """Width-scale 1/8 model used for desk-scale runs."""
        return cls(backbone=BackboneConfig(width_scale=0.125), seed=seed, **overrides)

    @property
    def width_scale(self) -> float:
        return self.backbone.width_scale

    @property
    def pyramid_width(self) -> int:
        """P, the channel width of each PyConv block."""
        if self.psm_width is not None:
            return self.psm_width
        return scale_channels(512, self.width_scale)

    @property
    def head_widths(self) -> tuple[int, int]:
        first, second = self.head_channels
        return (
            scale_channels(first, self.width_scale),
            scale_channels(second, self.width_scale),
        )

    @property
    def output_stride(self) -> int:
        return self.backbone.stride // 2
