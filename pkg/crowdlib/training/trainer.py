"""
Single-image Adam training with periodic validation.

Each step augments one training scene, pads it to the input stride, predicts a
density map, builds the point posterior on the crop's output grid and applies
one Adam update to the supervised objective. The epoch order and every step's
augmentation are drawn from streams keyed by (seed, epoch, position), so runs
are reproducible regardless of how many threads prepare the samples.
"""
import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from crowdlib.data.scene import AnnotatedScene
from crowdlib.data.transforms import augment, validation_split
from crowdlib.models.config import PscnetConfig
from crowdlib.models.pscnet import INPUT_STRIDE, Pscnet, pad_to_stride
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.losses import LossTerms, supervised_terms
from crowdlib.supervision.posterior import build_posterior, grid_coordinates
from crowdlib.tensors.exceptions import NonFiniteError
from crowdlib.tensors.tensor import ComputationTape, Tensor, backward
from crowdlib.training.checkpoint import encode_checkpoint
from crowdlib.training.evaluation import EvalReport, evaluate
from crowdlib.training.exceptions import InsufficientDataError, NonFiniteLossError
from crowdlib.training.optimizer import LEARNING_RATE, TrainState, adam_step
from crowdlib.utils.seeding import make_rng

logger = logging.getLogger(__name__)

ORDER_STREAM = 10
AUGMENT_STREAM = 11

T = TypeVar("T")
R = TypeVar("R")


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    crop_size: int = Field(default=256, gt=0)
    lr: float = Field(default=LEARNING_RATE, gt=0)
    epochs: int = Field(default=1, ge=1)
    seed: int = 0
    val_fraction: float = Field(default=0.1, ge=0, lt=1)
    max_steps: Optional[int] = Field(default=None, ge=1)
    # validation interval in epochs
    val_every: int = Field(default=1, ge=1)
    threads: int = Field(default=1, ge=1)
    progress: bool = False

    @field_validator("crop_size")
    @classmethod
    def check_crop_size(cls, value: int) -> int:
        if value % INPUT_STRIDE:
            raise ValueError(f"crop_size must be a multiple of {INPUT_STRIDE}")
        return value


@dataclass
class TrainResult:
    model: Pscnet
    state: TrainState
    best_state: bytes
    last_state: bytes
    log_lines: list[str] = field(default_factory=list)


def format_log_line(
    step: int, losses: tuple[float, float, float], report: Optional[EvalReport] = None
) -> str:
    bayes, count, total = losses
    line = f"step={step} bayes={bayes:.6f} count={count:.6f} total={total:.6f}"
    if report is not None:
        line += f" val_mae={report.mae:.6f} val_rmse={report.rmse:.6f}"
    return line


def prefetch(fn: Callable[[T], R], items: Iterable[T], workers: int) -> Iterator[R]:
    """`map(fn, items)` computed up to 2 * workers items ahead, in order."""
    if workers <= 1:
        yield from map(fn, items)
        return
    source = iter(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque(pool.submit(fn, item) for item in islice(source, 2 * workers))
        while pending:
            result = pending.popleft().result()
            for item in islice(source, 1):
                pending.append(pool.submit(fn, item))
            yield result


def training_step(
    model: Pscnet, sample: AnnotatedScene, supervision: SupervisionConfig
) -> tuple[LossTerms, dict[str, Tensor]]:
    """Forward and backward pass on one augmented sample."""
    padded = pad_to_stride(sample.image, sample.points)
    stride = model.config.output_stride
    with ComputationTape():
        density = padded.crop(model(Tensor(padded.image)), stride)
        _, rows, cols = density.shape
        posterior = build_posterior(
            sample.points,
            grid_coordinates(rows, cols, stride),
            supervision,
            margin=supervision.background_margin(sample.height, sample.width),
        )
        terms = supervised_terms(density, posterior, sample.points, supervision)
        gradients = backward(terms.total, model.parameters())
    return terms, gradients


def train(
    scenes: Sequence[AnnotatedScene],
    model_config: PscnetConfig,
    supervision: SupervisionConfig,
    config: TrainConfig,
    log_path: Optional[Union[str, Path]] = None,
    model: Optional[Pscnet] = None,
) -> TrainResult:
    if len(scenes) < 2:
        raise InsufficientDataError(f"training needs at least 2 scenes, got {len(scenes)}. ")
    train_ids, val_ids = validation_split(
        [scene.id for scene in scenes], config.val_fraction, config.seed
    )
    held_out = set(val_ids)
    train_scenes = [scene for scene in scenes if scene.id not in held_out]
    val_scenes = [scene for scene in scenes if scene.id in held_out]
    logger.info(
        "training on %d scenes, validating on %d", len(train_scenes), len(val_scenes)
    )

    if model is None:
        model = Pscnet(model_config)
    model.train()
    state = TrainState.create(model.parameters())
    total_steps = config.epochs * len(train_scenes)
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)

    lines: list[str] = []
    log_file = open(log_path, "a", encoding="utf-8") if log_path is not None else None
    best_state: Optional[bytes] = None
    progress = tqdm(total=total_steps, disable=not config.progress, unit="step")
    try:
        for epoch in range(config.epochs):
            state.epoch = epoch
            order = make_rng(config.seed, ORDER_STREAM, epoch).permutation(len(train_scenes))
            remaining = total_steps - state.step
            schedule = [
                (position, train_scenes[int(index)])
                for position, index in enumerate(order[:remaining])
            ]

            def prepare(item: tuple[int, AnnotatedScene]) -> AnnotatedScene:
                position, scene = item
                rng = make_rng(config.seed, AUGMENT_STREAM, epoch, position)
                return augment(scene, config.crop_size, rng)

            samples = prefetch(prepare, schedule, config.threads)
            for (position, scene), sample in zip(schedule, samples):
                try:
                    terms, gradients = training_step(model, sample, supervision)
                except NonFiniteError as error:
                    raise NonFiniteLossError(
                        f"step {state.step + 1}, scene {scene.id!r}: {error.message}"
                    )
                losses = terms.values()
                if not np.all(np.isfinite(losses)):
                    raise NonFiniteLossError(
                        f"step {state.step + 1}, scene {scene.id!r}: loss {losses}. "
                    )
                state = adam_step(state, gradients, lr=config.lr)
                progress.update(1)

                report = None
                epoch_done = position == len(schedule) - 1
                if epoch_done and val_scenes and (epoch + 1) % config.val_every == 0:
                    report = evaluate(val_scenes, model, config.threads)
                    model.train()
                    if state.record_validation(report.mae):
                        best_state = encode_checkpoint(model.state())
                line = format_log_line(state.step, losses, report)
                lines.append(line)
                logger.info(line)
                if log_file is not None:
                    log_file.write(line + "\n")
                    log_file.flush()
            if state.step >= total_steps:
                break
    finally:
        progress.close()
        if log_file is not None:
            log_file.close()

    last_state = encode_checkpoint(model.state())
    if best_state is None:
        best_state = last_state
    return TrainResult(model, state, best_state, last_state, lines)
