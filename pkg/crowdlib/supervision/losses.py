"""
Count supervision from point annotations.

The Bayesian term compares each annotation's expected count
E[c_n] = sum_m p(n | x_m) d_m with 1 (and the background's with 0) under the L1
distance; the counting term is |sum(d) - N|; the training objective is
bayes + lambda * count.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from crowdlib.data.splat import gaussian_splat
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.exceptions import PosteriorShapeError
from crowdlib.supervision.posterior import BACKGROUND, PosteriorMatrix
from crowdlib.tensors.tensor import Function, Tensor

logger = logging.getLogger(__name__)


class Expectation(Function):
    """probabilities^T @ flattened density"""

    def forward(
        self, density: np.ndarray, probabilities: Optional[np.ndarray] = None
    ) -> np.ndarray:
        assert probabilities is not None
        self.probabilities = probabilities.astype(density.dtype)
        return self.probabilities.T @ density.reshape(-1)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray]:
        shape = self.inputs[0].shape
        return ((self.probabilities @ grad).reshape(shape),)


def count_expectations(density: Tensor, posterior: PosteriorMatrix) -> Tensor:
    """Expected counts per column: background first, then one per annotation."""
    if density.size != posterior.num_cells:
        raise PosteriorShapeError(
            f"posterior has {posterior.num_cells} rows but the density has "
            f"{density.size} cells {density.shape}. "
        )
    return Expectation.apply(density, probabilities=posterior.probabilities)


def bayesian_loss(density: Tensor, posterior: PosteriorMatrix) -> Tensor:
    expected = count_expectations(density, posterior)
    target = np.ones(posterior.num_points + 1)
    target[BACKGROUND] = 0.0
    deviation = (Tensor(target) - expected).abs()
    if posterior.num_points and not posterior.use_background:
        deviation = deviation[1:]
    return deviation.sum()


def counting_loss(predicted: Tensor, ground_truth: float) -> Tensor:
    """|predicted - ground_truth| (batch size 1, so no averaging)."""
    return (predicted - float(ground_truth)).abs()


@dataclass(frozen=True)
class LossTerms:
    """
    Components of one training objective. Under the pixel-wise baseline `bayes`
    holds the squared-error term.
    """

    bayes: Tensor
    count: Tensor
    total: Tensor

    def values(self) -> tuple[float, float, float]:
        return self.bayes.item(), self.count.item(), self.total.item()


def loss_terms(
    density: Tensor, posterior: PosteriorMatrix, gt_count: float, lambda_: float
) -> LossTerms:
    bayes = bayesian_loss(density, posterior)
    count = counting_loss(density.sum(), gt_count)
    if lambda_ == 0:
        return LossTerms(bayes, count, bayes)
    return LossTerms(bayes, count, bayes + count * lambda_)


def overall_loss(
    density: Tensor, posterior: PosteriorMatrix, gt_count: float, lambda_: float
) -> Tensor:
    """bayesian_loss + lambda * counting_loss; lambda = 0 returns the Bayesian term."""
    return loss_terms(density, posterior, gt_count, lambda_).total


def pixel_mse_loss(
    density: Tensor, points: np.ndarray, sigma: float, output_stride: int = 8
) -> Tensor:
    """
    Squared error against a Gaussian-splat target rendered on the density grid
    (points and sigma scaled down by the output stride).
    """
    _, rows, cols = density.shape
    target = gaussian_splat(
        np.asarray(points, dtype=np.float64).reshape(-1, 2) / output_stride,
        rows,
        cols,
        sigma / output_stride,
    )
    residual = density - Tensor(target.values[None])
    return (residual * residual).sum()


def supervised_terms(
    density: Tensor,
    posterior: PosteriorMatrix,
    points: np.ndarray,
    config: SupervisionConfig,
) -> LossTerms:
    """Training objective selected by `config`."""
    if not config.pixel_mse:
        return loss_terms(density, posterior, len(points), config.lambda_)
    pixel = pixel_mse_loss(density, points, config.sigma, config.output_stride)
    count = counting_loss(density.sum(), len(points))
    return LossTerms(pixel, count, pixel)
