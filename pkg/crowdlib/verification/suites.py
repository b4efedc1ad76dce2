"""
Acceptance suites run by `pscnet verify`.

Importing this module registers every suite. Suites are deterministic: each draws
its inputs from a stream of `VERIFY_SEED`.
"""
import itertools
import math
from typing import Callable, Iterator

import numpy as np

from crowdlib.models.config import PscnetConfig
from crowdlib.models.gcm import gcm_embed, gcm_transform
from crowdlib.models.pscnet import Pscnet
from crowdlib.nn import functional as F
from crowdlib.nn.module import Mode
from crowdlib.nn.specs import BatchNormSpec, Conv2dSpec
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.losses import bayesian_loss, count_expectations, overall_loss
from crowdlib.supervision.posterior import build_posterior, grid_coordinates
from crowdlib.tensors.gradcheck import grad_check
from crowdlib.tensors.tensor import Tensor, no_grad, precision
from crowdlib.training.evaluation import EvalReport
from crowdlib.utils.seeding import make_rng
from crowdlib.verification import oracles
from crowdlib.verification.registry import CheckResult, below, holds, register_suite, within

VERIFY_SEED = 2024

OP_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-4
ORACLE_TOLERANCE = 1e-6
LOSS_CASES = 50
SHAPE_EXTENTS = (64, 128, 256)

Objective = Callable[[Tensor], Tensor]


def _signed(rng: np.random.Generator, shape, low: float = 0.1) -> np.ndarray:
    """Uniform magnitudes in [low, 1] with random signs, away from kinks at zero."""
    return rng.uniform(low, 1.0, shape) * rng.choice([-1.0, 1.0], shape)


def _weighted(op: Callable[[Tensor], Tensor], shape, rng: np.random.Generator) -> Objective:
    weights = Tensor(rng.uniform(-1, 1, shape))
    return lambda x: (op(x) * weights).sum()


def _op_cases() -> Iterator[tuple[str, Objective, np.ndarray]]:
    rng = make_rng(VERIFY_SEED, 0)
    other = Tensor(_signed(rng, (3, 4)))
    row = Tensor(_signed(rng, (4,)))
    yield "add", _weighted(lambda x: x + row, (3, 4), rng), _signed(rng, (3, 4))
    yield "sub", _weighted(lambda x: other - x, (3, 4), rng), _signed(rng, (3, 4))
    yield "mul", _weighted(lambda x: x * other * x, (3, 4), rng), _signed(rng, (3, 4))
    yield "div", _weighted(lambda x: other / x, (3, 4), rng), _signed(rng, (3, 4), 0.5)
    yield "neg", _weighted(lambda x: -x, (3, 4), rng), _signed(rng, (3, 4))
    yield "relu", _weighted(lambda x: x.relu(), (3, 4), rng), _signed(rng, (3, 4))
    yield "tanh", _weighted(lambda x: x.tanh(), (3, 4), rng), _signed(rng, (3, 4))
    yield "abs", _weighted(lambda x: x.abs(), (3, 4), rng), _signed(rng, (3, 4))
    yield "sqrt", _weighted(lambda x: x.sqrt(), (3, 4), rng), rng.uniform(0.5, 2, (3, 4))
    yield "sum", _weighted(lambda x: x.sum(axes=[1]), (2,), rng), _signed(rng, (2, 3, 4)).reshape(2, 12)
    yield "l2_norm", _weighted(
        lambda x: x.l2_norm(axes=[1, 2], epsilon=1e-4), (3,), rng
    ), _signed(rng, (3, 4, 4))

    weight = Tensor(rng.uniform(-1, 1, (4, 2, 3, 3)))
    bias = Tensor(rng.uniform(-1, 1, 4))
    grouped = Conv2dSpec(4, 4, 3, weight, groups=2, bias=bias)
    yield "conv2d_input", _weighted(
        lambda x: F.conv2d(x, grouped), (4, 5, 5), rng
    ), rng.uniform(-1, 1, (4, 5, 5))
    image = Tensor(rng.uniform(-1, 1, (4, 5, 5)))
    yield "conv2d_weight", _weighted(
        lambda w: F.conv2d(image, Conv2dSpec(4, 4, 3, w, groups=2)), (4, 5, 5), rng
    ), rng.uniform(-1, 1, (4, 2, 3, 3))
    kernel = Tensor(rng.uniform(-1, 1, 3))
    yield "conv1d", _weighted(
        lambda s: F.conv1d_channel(s, kernel), (8,), rng
    ), rng.uniform(-1, 1, 8)
    yield "bilinear", _weighted(
        lambda x: F.bilinear_resize(x, 7, 9), (2, 7, 9), rng
    ), rng.uniform(-1, 1, (2, 4, 5))
    yield "avg_pool", _weighted(
        lambda x: F.adaptive_avg_pool(x, 3, 2), (2, 3, 2), rng
    ), rng.uniform(-1, 1, (2, 7, 5))
    norm = BatchNormSpec.create(3)
    norm.gamma.update_(rng.uniform(0.5, 1.5, 3))
    yield "batch_norm", _weighted(
        lambda x: F.batch_norm2d(x, norm, Mode.TRAIN), (3, 4, 4), rng
    ), rng.uniform(-1, 1, (3, 4, 4))
    yield "max_pool", _weighted(F.max_pool2, (2, 2, 3), rng), rng.uniform(-1, 1, (2, 4, 6))
    tail = Tensor(rng.uniform(-1, 1, (1, 3, 3)))
    yield "concat_slice", _weighted(
        lambda x: F.slice_channels(F.concat_channels(x, tail), 1, 3), (2, 3, 3), rng
    ), rng.uniform(-1, 1, (2, 3, 3))
    yield "reshape", _weighted(lambda x: x.reshape(6, 2), (6, 2), rng), rng.uniform(-1, 1, (3, 4))


@register_suite("gradients.ops", group="gradients")
def operation_gradients() -> Iterator[CheckResult]:
    with precision("float64"):
        for name, f, x in _op_cases():
            yield below(f"grad_check[{name}]", grad_check(f, Tensor(x)), OP_TOLERANCE)


def _toy_loss_problem(size: int = 32) -> tuple[Pscnet, Objective, np.ndarray]:
    rng = make_rng(VERIFY_SEED, 1)
    model = Pscnet(PscnetConfig.toy(seed=VERIFY_SEED))
    points = rng.uniform(0, size, (2, 2))
    stride = model.config.output_stride
    cells = size // stride
    posterior = build_posterior(
        points, grid_coordinates(cells, cells, stride), SupervisionConfig()
    )
    def loss(x: Tensor) -> Tensor:
        return overall_loss(model(x), posterior, len(points), 0.1)

    return model, loss, rng.uniform(0, 1, (3, size, size))


@register_suite("gradients.model", group="gradients")
def model_gradients() -> Iterator[CheckResult]:
    with precision("float64"):
        _, loss, image = _toy_loss_problem()
        error = grad_check(loss, Tensor(image), h=1e-5, components=24, seed=VERIFY_SEED)
    yield below("grad_check[toy model + loss]", error, MODEL_TOLERANCE)


@register_suite("conv.grouped", group="conv")
def grouped_convolution() -> Iterator[CheckResult]:
    rng = make_rng(VERIFY_SEED, 2)
    with precision("float64"):
        for groups in (1, 2, 4, 8):
            kernel = Tensor(rng.uniform(-1, 1, (8, 8 // groups, 3, 3)))
            spec = Conv2dSpec(
                8, 8, 3, kernel, groups=groups, bias=Tensor(rng.uniform(-1, 1, 8))
            )
            x = rng.uniform(-1, 1, (8, 6, 6))
            out = F.conv2d(Tensor(x), spec).data
            weight, bias = spec.weight.data, spec.bias.data
            per_in, per_out = 8 // groups, 8 // groups
            reference = np.concatenate(
                [
                    oracles.direct_conv(
                        x[g * per_in : (g + 1) * per_in],
                        weight[g * per_out : (g + 1) * per_out],
                        bias[g * per_out : (g + 1) * per_out],
                    )
                    for g in range(groups)
                ]
            )
            yield within(
                f"groups={groups} vs per-group dense",
                float(np.abs(out - reference).max()),
                0.0,
                ORACLE_TOLERANCE,
            )


@register_suite("conv.channel1d", group="conv")
def channel_convolution() -> Iterator[CheckResult]:
    rng = make_rng(VERIFY_SEED, 3)
    with precision("float64"):
        for channels in (4, 16, 64):
            signal, kernel = rng.uniform(-1, 1, channels), rng.uniform(-1, 1, 3)
            out = F.conv1d_channel(Tensor(signal), Tensor(kernel)).data
            error = float(np.abs(out - oracles.sliding_conv1d(signal, kernel)).max())
            yield within(f"conv1d C={channels} vs sliding window", error, 0.0, 1e-7)


@register_suite("gcm.identity", group="gcm")
def zero_initialized_gate() -> Iterator[CheckResult]:
    image = Tensor(make_rng(VERIFY_SEED, 4).uniform(0, 1, (3, 64, 64)))
    with no_grad():
        gated = Pscnet(PscnetConfig.toy(seed=VERIFY_SEED)).eval()(image)
        plain = Pscnet(PscnetConfig.toy(seed=VERIFY_SEED, use_gcm=False)).eval()(image)
    identical = gated.data.tobytes() == plain.data.tobytes()
    mismatch = int(np.count_nonzero(gated.data != plain.data))
    yield holds(
        "zero-init gate leaves the model unchanged", identical, f"{mismatch} differing cells", "0"
    )


@register_suite("gcm.normalization", group="gcm")
def channel_normalization() -> Iterator[CheckResult]:
    rng = make_rng(VERIFY_SEED, 5)
    epsilon = 1e-4
    with precision("float64"):
        for channels in (4, 32, 128):
            s = Tensor(rng.uniform(0, 3, channels))
            kernel = Tensor(rng.uniform(-1, 1, 3))
            excited = F.conv1d_channel(s, kernel).data
            energy = float(np.sum(excited**2))
            s_tilde = gcm_transform(s, kernel, epsilon).data
            yield within(
                f"sum s~^2 for C={channels}",
                float(np.sum(s_tilde**2)),
                channels * energy / (energy + epsilon),
                ORACLE_TOLERANCE,
            )


@register_suite("gcm.embedding", group="gcm")
def context_embedding() -> Iterator[CheckResult]:
    rng = make_rng(VERIFY_SEED, 6)
    with precision("float64"):
        x = rng.uniform(-1, 1, (6, 5, 7))
        alpha = rng.uniform(0.5, 2, 6)
        out = gcm_embed(Tensor(x), Tensor(alpha), 1e-4).data
    error = float(np.abs(out - oracles.channel_l2(x, alpha, 1e-4)).max())
    yield within("channel L2 embedding vs loop", error, 0.0, 1e-7)


def _loss_cases() -> Iterator[tuple[int, np.ndarray, np.ndarray, np.ndarray, SupervisionConfig]]:
    for case in range(LOSS_CASES):
        rng = make_rng(VERIFY_SEED, 7, case)
        rows, cols = (int(n) for n in rng.integers(1, 9, 2))
        points = rng.uniform(0, 8 * min(rows, cols), (int(rng.integers(0, 6)), 2))
        density = rng.uniform(0, 0.5, (1, rows, cols))
        config = SupervisionConfig(
            sigma=(2.0, 8.0, 32.0)[case % 3], use_background=case % 2 == 0
        )
        yield case, points, grid_coordinates(rows, cols), density, config


@register_suite("loss.posterior", group="loss")
def posterior_oracle() -> Iterator[CheckResult]:
    worst, worst_rows = 0.0, 0.0
    for _, points, grid, density, config in _loss_cases():
        _, rows, cols = density.shape
        margin = config.background_margin(8 * rows, 8 * cols)
        posterior = build_posterior(points, grid, config)
        reference = oracles.loop_posterior(
            points, grid, config.sigma, margin, config.use_background
        )
        worst = max(worst, float(np.abs(posterior.probabilities - reference).max()))
        worst_rows = max(worst_rows, float(np.abs(posterior.row_sums() - 1).max()))
    yield within(f"posterior vs loop over {LOSS_CASES} cases", worst, 0.0, ORACLE_TOLERANCE)
    yield within("row sums", worst_rows, 0.0, ORACLE_TOLERANCE)


@register_suite("loss.bayesian", group="loss")
def bayesian_oracle() -> Iterator[CheckResult]:
    worst_loss, worst_mass = 0.0, 0.0
    with precision("float64"):
        for _, points, grid, density, config in _loss_cases():
            posterior = build_posterior(points, grid, config)
            loss = bayesian_loss(Tensor(density), posterior).item()
            reference = oracles.loop_bayesian_loss(
                density, posterior.probabilities, config.use_background
            )
            worst_loss = max(worst_loss, abs(loss - reference))
            expected = count_expectations(Tensor(density), posterior).data
            worst_mass = max(worst_mass, abs(float(expected.sum()) - float(density.sum())))
    yield within(f"bayesian loss vs loop over {LOSS_CASES} cases", worst_loss, 0.0, ORACLE_TOLERANCE)
    yield within("mass conservation", worst_mass, 0.0, ORACLE_TOLERANCE)


@register_suite("shapes.density", group="shapes")
def density_shapes() -> Iterator[CheckResult]:
    model = Pscnet(PscnetConfig.toy(seed=VERIFY_SEED)).eval()
    rng = make_rng(VERIFY_SEED, 8)
    for height, width in itertools.product(SHAPE_EXTENTS, repeat=2):
        with no_grad():
            density = model(Tensor(rng.uniform(0, 1, (3, height, width))))
        expected = (1, height // 8, width // 8)
        yield holds(
            f"density of {height}x{width}",
            density.shape == expected and bool(np.all(density.data >= 0)),
            f"{density.shape} min {float(density.data.min()):.3g}",
            f"{expected} nonnegative",
        )


@register_suite("metrics.fixture", group="metrics")
def metric_fixture() -> Iterator[CheckResult]:
    report = EvalReport.from_counts([10, 20], [12, 16])
    yield within("MAE of [10, 20] vs [12, 16]", report.mae, 3.0, 1e-4)
    yield within("RMSE of [10, 20] vs [12, 16]", report.rmse, math.sqrt(10), 1e-4)


@register_suite("metrics.properties", group="metrics")
def metric_properties() -> Iterator[CheckResult]:
    violations, drift = 0, 0.0
    for case in range(100):
        rng = make_rng(VERIFY_SEED, 9, case)
        k = int(rng.integers(1, 20))
        predicted, truth = rng.uniform(0, 100, k), rng.integers(0, 100, k)
        report = EvalReport.from_counts(predicted, truth)
        if report.mae > report.rmse:
            violations += 1
        order = rng.permutation(k)
        shuffled = EvalReport.from_counts(predicted[order], truth[order])
        drift = max(drift, abs(shuffled.mae - report.mae), abs(shuffled.rmse - report.rmse))
    yield holds("MAE <= RMSE on 100 reports", violations == 0, f"{violations} violations", "0")
    yield within("order independence", drift, 0.0, 1e-9)
