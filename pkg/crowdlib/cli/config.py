"""
Run configuration files: sectioned key=value text.

    [model]  width_scale, gcm_gate, use_psm, use_gcm
    [loss]   sigma, bg_margin_ratio, lambda, use_background, pixel_mse
    [train]  crop_size, lr, epochs, seed, val_fraction, max_steps, val_every
    [data]   max_shorter_side

Every key is optional. Unknown sections and keys are rejected with their line
number.
"""
import configparser
import logging
import re
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from crowdlib.cli.exceptions import ConfigError
from crowdlib.data.config import DataConfig
from crowdlib.models.config import BackboneConfig, GcmGate, PscnetConfig, parse_width_scale
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.training.trainer import TrainConfig

logger = logging.getLogger(__name__)

_FILE_KEYS = {
    "model": {"width_scale", "gcm_gate", "use_psm", "use_gcm"},
    "loss": {"sigma", "bg_margin_ratio", "lambda", "use_background", "pixel_mse"},
    "train": {
        "crop_size",
        "lr",
        "epochs",
        "seed",
        "val_fraction",
        "max_steps",
        "val_every",
    },
    "data": {"max_shorter_side"},
}


class ModelSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    width_scale: float = Field(default=1.0, gt=0, le=1)
    gcm_gate: GcmGate = GcmGate.RESIDUAL
    use_psm: bool = True
    use_gcm: bool = True

    @field_validator("width_scale", mode="before")
    @classmethod
    def parse_ratio(cls, value: Any) -> Any:
        return parse_width_scale(value)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelSection = ModelSection()
    loss: SupervisionConfig = SupervisionConfig()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()

    def to_pscnet(self) -> PscnetConfig:
        return PscnetConfig(
            backbone=BackboneConfig(width_scale=self.model.width_scale),
            gcm_gate=self.model.gcm_gate,
            use_psm=self.model.use_psm,
            use_gcm=self.model.use_gcm,
            seed=self.train.seed,
        )

    def to_supervision(self) -> SupervisionConfig:
        return self.loss

    def to_training(self, threads: int = 1, progress: bool = False) -> TrainConfig:
        return self.train.model_copy(update={"threads": threads, "progress": progress})


def _line_of(text: str, section: str, key: Optional[str] = None) -> int:
    """1-based line of a section header, or of `key` inside that section (0 if absent)."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if key is not None and current == section:
            match = re.match(r"\s*([^=:\s]+)\s*[=:]", line)
            if match and match.group(1).lower() == key:
                return number
    return 0


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), default_section="\0"
    )
    try:
        parser.read_string(text, source=source)
    except configparser.Error as error:
        line = getattr(error, "lineno", None)
        if line is None and getattr(error, "errors", None):
            line = error.errors[0][0]
        where = f"line {line}" if line is not None else source
        raise ConfigError(f"{source}: {where}: {error.message.splitlines()[0]}. ")

    sections: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _FILE_KEYS:
            line = _line_of(text, section)
            raise ConfigError(f"{source}: line {line}: unknown section [{section}]. ")
        for key, value in parser.items(section):
            if key not in _FILE_KEYS[section]:
                line = _line_of(text, section, key)
                raise ConfigError(
                    f"{source}: line {line}: unknown key {key!r} in [{section}]. "
                )
        sections[section] = dict(parser.items(section))

    try:
        return RunConfig.model_validate(sections)
    except ValidationError as error:
        first = error.errors()[0]
        section, key = (str(part) for part in (tuple(first["loc"]) + ("", ""))[:2])
        line = _line_of(text, section, key)
        raise ConfigError(
            f"{source}: line {line}: invalid value for {key!r} in [{section}]: "
            f"{first['msg']}. "
        ) from None


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    if path is None:
        logger.warning("no --config given; using default settings")
        return RunConfig()
    path = Path(path)
    return parse_run_config(path.read_text(encoding="utf-8"), source=str(path))
