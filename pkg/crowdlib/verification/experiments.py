"""
Seeded training experiments on synthetic scenes with the toy model.

The overfit and generalization suites train for minutes and are skipped by
`pscnet verify --quick`; the loss-weight and determinism suites are short.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import Iterator

from crowdlib.data.scene import AnnotatedScene
from crowdlib.data.synthetic import synth_scenes
from crowdlib.models.config import PscnetConfig
from crowdlib.models.pscnet import Pscnet
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.training.evaluation import EvalReport, evaluate, mean_count_baseline
from crowdlib.training.optimizer import TrainState, adam_step
from crowdlib.training.trainer import TrainConfig, train, training_step
from crowdlib.verification.registry import CheckResult, holds, register_suite, within

logger = logging.getLogger(__name__)

OVERFIT_SEED = 11
OVERFIT_SCENES = 8
OVERFIT_SIZE = 128
OVERFIT_STEPS = 300
OVERFIT_LR = 1e-3
OVERFIT_MAE = 1.0

DESCENT_STEPS = 10
DESCENT_LR = 1e-4

GENERALIZATION_SIZE = 64
GENERALIZATION_TRAIN = 64
GENERALIZATION_TEST = 16
GENERALIZATION_EPOCHS = 6

LAMBDAS = (0.0, 0.1, 1.0)


def overfit_scenes() -> list[AnnotatedScene]:
    return synth_scenes(OVERFIT_SCENES, OVERFIT_SIZE, seed=OVERFIT_SEED)


def overfit_run() -> EvalReport:
    """Training-set counts after 300 Adam steps on 8 scenes of 128 x 128."""
    scenes = overfit_scenes()
    config = TrainConfig(
        crop_size=OVERFIT_SIZE,
        epochs=-(-OVERFIT_STEPS // OVERFIT_SCENES),
        max_steps=OVERFIT_STEPS,
        lr=OVERFIT_LR,
        val_fraction=0.0,
    )
    result = train(scenes, PscnetConfig.toy(seed=0), SupervisionConfig(), config)
    report = evaluate(scenes, result.model)
    logger.info("overfit: training MAE %.4f after %d steps", report.mae, result.state.step)
    return report


def bayesian_descent(steps: int = DESCENT_STEPS, lr: float = DESCENT_LR) -> list[float]:
    """
    Bayesian loss before each of `steps` Adam updates on the first overfit scene,
    without the counting term or the background column.
    """
    scene = overfit_scenes()[0]
    model = Pscnet(PscnetConfig.toy(seed=0))
    supervision = SupervisionConfig(lambda_=0.0, use_background=False)
    state = TrainState.create(model.parameters())
    losses = []
    for _ in range(steps):
        terms, gradients = training_step(model, scene, supervision)
        losses.append(terms.bayes.item())
        state = adam_step(state, gradients, lr=lr)
    return losses


def generalization_run() -> tuple[EvalReport, EvalReport]:
    """Held-out report of the trained model and of the mean-count predictor."""
    train_scenes = synth_scenes(GENERALIZATION_TRAIN, GENERALIZATION_SIZE, seed=21)
    test_scenes = synth_scenes(GENERALIZATION_TEST, GENERALIZATION_SIZE, seed=22)
    config = TrainConfig(
        crop_size=GENERALIZATION_SIZE,
        epochs=GENERALIZATION_EPOCHS,
        lr=OVERFIT_LR,
        val_fraction=0.0,
    )
    result = train(train_scenes, PscnetConfig.toy(seed=0), SupervisionConfig(), config)
    report = evaluate(test_scenes, result.model)
    baseline = mean_count_baseline([scene.count for scene in test_scenes])
    logger.info("generalization: MAE %.4f, mean-count MAE %.4f", report.mae, baseline.mae)
    return report, baseline


@dataclass(frozen=True)
class FirstStepLosses:
    lambda_: float
    bayes: float
    count: float
    total: float


def lambda_sweep(steps: int = 2) -> list[FirstStepLosses]:
    """Loss decomposition of the first logged step for every counting weight."""
    scenes = synth_scenes(3, 32, seed=2)
    config = TrainConfig(crop_size=32, val_fraction=0.0, max_steps=steps, lr=1e-3)
    sweep = []
    for lambda_ in LAMBDAS:
        result = train(
            scenes, PscnetConfig.toy(seed=0), SupervisionConfig(lambda_=lambda_), config
        )
        fields = dict(
            part.split("=", 1) for part in result.log_lines[0].split() if "=" in part
        )
        sweep.append(
            FirstStepLosses(
                lambda_, float(fields["bayes"]), float(fields["count"]), float(fields["total"])
            )
        )
    return sweep


def repeated_runs(runs: int = 2) -> list[tuple[bytes, bytes, bytes]]:
    """Best checkpoint, last checkpoint and log file of identical seeded runs."""
    scenes = synth_scenes(4, 32, seed=7)
    config = TrainConfig(crop_size=32, epochs=2, val_fraction=0.25, lr=1e-4)
    outputs = []
    with TemporaryDirectory() as tmp:
        for run in range(runs):
            log = Path(tmp) / f"run{run}.log"
            result = train(scenes, PscnetConfig.toy(seed=0), SupervisionConfig(), config, log)
            outputs.append((result.best_state, result.last_state, log.read_bytes()))
    return outputs


@register_suite("experiments.overfit", group="experiments", slow=True)
def overfit() -> Iterator[CheckResult]:
    losses = bayesian_descent()
    rises = sum(later >= earlier for earlier, later in zip(losses, losses[1:]))
    yield holds(
        f"bayesian loss falls at each of {DESCENT_STEPS} steps",
        rises == 0,
        " ".join(f"{loss:.6g}" for loss in losses),
        "strictly decreasing",
    )
    report = overfit_run()
    yield holds(
        f"training MAE after {OVERFIT_STEPS} steps",
        report.mae < OVERFIT_MAE,
        f"{report.mae:.4f}",
        f"< {OVERFIT_MAE:g}",
    )


@register_suite("experiments.generalization", group="experiments", slow=True)
def generalization() -> Iterator[CheckResult]:
    report, baseline = generalization_run()
    yield holds(
        "held-out MAE against the mean-count predictor",
        report.mae < baseline.mae,
        f"{report.mae:.4f}",
        f"< {baseline.mae:.4f}",
    )


@register_suite("experiments.lambda", group="experiments")
def counting_weight() -> Iterator[CheckResult]:
    sweep = lambda_sweep()
    for losses in sweep:
        yield within(
            f"total at lambda={losses.lambda_:g}",
            losses.total,
            losses.bayes + losses.lambda_ * losses.count,
            1e-5,
        )
    totals = {losses.total for losses in sweep}
    yield holds(
        "distinct totals", len(totals) == len(sweep), str(sorted(totals)), f"{len(sweep)} values"
    )


@register_suite("experiments.determinism", group="experiments")
def determinism() -> Iterator[CheckResult]:
    first, second = repeated_runs()
    for label, a, b in zip(("best checkpoint", "last checkpoint", "log"), first, second):
        yield holds(
            f"{label} of two seeded runs",
            a == b,
            "identical" if a == b else "different",
            "identical",
        )
