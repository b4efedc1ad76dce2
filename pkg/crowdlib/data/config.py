from pydantic import BaseModel, ConfigDict, Field


class DataConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # images whose shorter side exceeds this are downscaled on load
    max_shorter_side: int = Field(default=2048, ge=16)
