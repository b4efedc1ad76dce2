from pydantic import BaseModel, ConfigDict, Field


class SupervisionConfig(BaseModel):
    """
    Point supervision settings. Distances are in input pixels; the background
    margin is `bg_margin_ratio` times the shorter side of the training crop.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    sigma: float = Field(default=8.0, gt=0)
    bg_margin_ratio: float = Field(default=0.15, gt=0)
    use_background: bool = True
    lambda_: float = Field(default=0.1, ge=0, alias="lambda")
    pixel_mse: bool = False
    output_stride: int = Field(default=8, gt=0)

    def background_margin(self, height: int, width: int) -> float:
        return self.bg_margin_ratio * min(height, width)
