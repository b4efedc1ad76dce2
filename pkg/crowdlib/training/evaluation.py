"""
Counting metrics: MAE = mean |C_hat - C| and RMSE = sqrt(mean |C_hat - C|^2)
over the evaluated images. Sums use exactly rounded accumulation, so the
aggregates do not depend on scene order.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from crowdlib.data.scene import AnnotatedScene
from crowdlib.models.pscnet import Pscnet, predicted_count
from crowdlib.training.exceptions import EmptyEvaluationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalEntry:
    scene_id: str
    predicted: float
    ground_truth: float

    @property
    def error(self) -> float:
        return abs(self.predicted - self.ground_truth)


@dataclass(frozen=True)
class EvalReport:
    entries: tuple[EvalEntry, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise EmptyEvaluationError("no scenes to evaluate. ")

    @classmethod
    def from_counts(
        cls,
        predicted: Sequence[float],
        ground_truth: Sequence[float],
        ids: Optional[Sequence[str]] = None,
    ) -> "EvalReport":
        if ids is None:
            ids = [str(i) for i in range(len(predicted))]
        return cls(
            tuple(
                EvalEntry(scene_id, float(p), float(g))
                for scene_id, p, g in zip(ids, predicted, ground_truth)
            )
        )

    @property
    def k(self) -> int:
        return len(self.entries)

    @property
    def mae(self) -> float:
        return math.fsum(entry.error for entry in self.entries) / self.k

    @property
    def rmse(self) -> float:
        return math.sqrt(math.fsum(entry.error**2 for entry in self.entries) / self.k)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "mae": self.mae, "rmse": self.rmse})

    def table(self) -> str:
        width = max(8, max(len(entry.scene_id) for entry in self.entries))
        lines = [f"{'scene':<{width}}  {'predicted':>10}  {'truth':>8}  {'error':>8}"]
        for entry in self.entries:
            lines.append(
                f"{entry.scene_id:<{width}}  {entry.predicted:>10.4f}  "
                f"{entry.ground_truth:>8.0f}  {entry.error:>8.4f}"
            )
        lines.append(f"K={self.k}  MAE={self.mae:.4f}  RMSE={self.rmse:.4f}")
        return "\n".join(lines)


def evaluate(
    scenes: Sequence[AnnotatedScene], model: Pscnet, threads: int = 1
) -> EvalReport:
    """Full-image counts of every scene; the model is switched to eval mode."""
    if not scenes:
        raise EmptyEvaluationError("no scenes to evaluate. ")
    model.eval()

    def count(scene: AnnotatedScene) -> float:
        return predicted_count(model.predict(scene.image))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        predicted = list(pool.map(count, scenes))
    report = EvalReport.from_counts(
        predicted, [scene.count for scene in scenes], [scene.id for scene in scenes]
    )
    logger.debug("evaluated %d scenes: mae=%.4f rmse=%.4f", report.k, report.mae, report.rmse)
    return report


def mean_count_baseline(
    ground_truth: Sequence[float], constant: Optional[float] = None
) -> EvalReport:
    """Report of a predictor that outputs `constant` (the mean count by default)."""
    if not ground_truth:
        raise EmptyEvaluationError("no scenes to evaluate. ")
    if constant is None:
        constant = math.fsum(ground_truth) / len(ground_truth)
    return EvalReport.from_counts([constant] * len(ground_truth), ground_truth)
