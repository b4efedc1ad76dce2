import math
from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose
from parameterized import parameterized

from crowdlib.data.splat import gaussian_splat
from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.exceptions import PosteriorShapeError
from crowdlib.supervision.losses import (
    bayesian_loss,
    count_expectations,
    counting_loss,
    loss_terms,
    overall_loss,
    pixel_mse_loss,
    supervised_terms,
)
from crowdlib.supervision.posterior import build_posterior, grid_coordinates
from crowdlib.tensors.gradcheck import grad_check
from crowdlib.tensors.tensor import Tensor, precision


def _case(seed: int, use_background: bool = True, n_points: int = 3, sigma: float = 8.0):
    rng = np.random.default_rng(seed)
    density = rng.uniform(0, 0.1, (1, 8, 8))
    points = rng.uniform(0, 64, (n_points, 2))
    config = SupervisionConfig(sigma=sigma, use_background=use_background)
    return density, points, build_posterior(points, grid_coordinates(8, 8), config)


def loop_bayesian_loss(density, probabilities, use_background):
    flat = density.reshape(-1)
    cells, columns = probabilities.shape
    expected = [sum(probabilities[m, n] * flat[m] for m in range(cells)) for n in range(columns)]
    loss = sum(abs(1.0 - e) for e in expected[1:])
    if use_background or columns == 1:
        loss += abs(expected[0])
    return loss


class TestBayesianLoss(TestCase):
    def test_perfect_assignment_is_zero(self):
        config = SupervisionConfig(use_background=False)
        posterior = build_posterior(np.array([[4.0, 4.0]]), grid_coordinates(1, 1), config)
        self.assertEqual(bayesian_loss(Tensor(np.ones((1, 1, 1))), posterior).item(), 0.0)

    def test_empty_scene_loss_is_total_mass(self):
        density = np.full((1, 4, 4), 0.25)
        posterior = build_posterior(np.zeros((0, 2)), grid_coordinates(4, 4), SupervisionConfig())
        self.assertAlmostEqual(bayesian_loss(Tensor(density), posterior).item(), 4.0, places=5)

    @parameterized.expand(
        [(f"seed{seed}_{'bg' if bg else 'nobg'}_s{int(s)}", seed, bg, s)
         for seed in range(3) for bg in (True, False) for s in (2.0, 8.0, 32.0)]
    )
    def test_matches_loop_oracle(self, _, seed, use_background, sigma):
        density, _, posterior = _case(seed, use_background, sigma=sigma)
        with precision("float64"):
            loss = bayesian_loss(Tensor(density), posterior).item()
        expected = loop_bayesian_loss(density, posterior.probabilities, use_background)
        self.assertAlmostEqual(loss, expected, delta=1e-6)

    def test_mass_conservation(self):
        density, _, posterior = _case(4)
        with precision("float64"):
            expected = count_expectations(Tensor(density), posterior)
        self.assertAlmostEqual(float(expected.data.sum()), float(density.sum()), delta=1e-6)

    def test_non_negative(self):
        for seed in range(5):
            density, _, posterior = _case(seed)
            self.assertGreaterEqual(bayesian_loss(Tensor(density), posterior).item(), 0.0)

    def test_shape_mismatch(self):
        _, _, posterior = _case(0)
        with self.assertRaises(PosteriorShapeError):
            bayesian_loss(Tensor(np.zeros((1, 4, 4))), posterior)


class TestCountingLoss(TestCase):
    @parameterized.expand([(10.0, 7.0, 3.0), (7.0, 7.0, 0.0), (2.5, 4.0, 1.5)])
    def test_examples(self, predicted, ground_truth, expected):
        self.assertEqual(counting_loss(Tensor(predicted), ground_truth).item(), expected)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for a, b in rng.uniform(0, 50, (10, 2)):
            self.assertEqual(
                counting_loss(Tensor(a), b).item(), counting_loss(Tensor(b), a).item()
            )


class TestOverallLoss(TestCase):
    def test_lambda_zero_is_bayesian_loss(self):
        density, points, posterior = _case(1)
        bayes = bayesian_loss(Tensor(density), posterior).item()
        total = overall_loss(Tensor(density), posterior, len(points), 0.0).item()
        self.assertEqual(total, bayes)

    def test_linear_combination(self):
        with precision("float64"):
            config = SupervisionConfig(sigma=1.0, use_background=False)
            points = np.array([[4.0, 4.0], [12.0, 4.0]])
            posterior = build_posterior(points, grid_coordinates(1, 2), config)
            density = Tensor(np.full((1, 1, 2), 2.5))
            terms = loss_terms(density, posterior, 2, 1.0)
        bayes, count, total = terms.values()
        self.assertAlmostEqual(bayes, 3.0, places=6)
        self.assertAlmostEqual(count, 3.0, places=6)
        self.assertAlmostEqual(total, 6.0, places=6)

    def test_default_lambda_weighting(self):
        density, points, posterior = _case(2)
        bayes, count, total = loss_terms(Tensor(density), posterior, len(points), 0.1).values()
        self.assertAlmostEqual(total, bayes + 0.1 * count, places=5)

    @parameterized.expand([("background", True), ("no_background", False)])
    def test_gradient_matches_finite_differences(self, _, use_background):
        rng = np.random.default_rng(7)
        points = rng.uniform(0, 64, (3, 2))
        # small mass keeps every expectation away from the l1 kinks
        density = rng.uniform(0, 0.02, (1, 8, 8))
        config = SupervisionConfig(use_background=use_background)
        posterior = build_posterior(points, grid_coordinates(8, 8), config)
        with precision("float64"):
            error = grad_check(
                lambda d: overall_loss(d, posterior, len(points), 0.1), Tensor(density)
            )
        self.assertLess(error, 1e-5)


class TestPixelMse(TestCase):
    def test_zero_for_matching_target(self):
        points = np.array([[20.0, 28.0], [40.0, 12.0]])
        target = gaussian_splat(points / 8, 8, 8, 1.0).values
        self.assertAlmostEqual(
            pixel_mse_loss(Tensor(target[None]), points, 8.0).item(), 0.0, places=10
        )

    def test_empty_scene_is_sum_of_squares(self):
        density = np.full((1, 2, 2), 0.5)
        self.assertAlmostEqual(pixel_mse_loss(Tensor(density), np.zeros((0, 2)), 8.0).item(), 1.0)

    def test_selected_by_config(self):
        density, points, posterior = _case(3)
        config = SupervisionConfig(pixel_mse=True)
        terms = supervised_terms(Tensor(density), posterior, points, config)
        self.assertEqual(terms.total.item(), terms.bayes.item())
        self.assertAlmostEqual(
            terms.total.item(), pixel_mse_loss(Tensor(density), points, 8.0).item()
        )

    def test_bayesian_by_default(self):
        density, points, posterior = _case(3)
        terms = supervised_terms(Tensor(density), posterior, points, SupervisionConfig())
        expected = overall_loss(Tensor(density), posterior, len(points), 0.1)
        self.assertEqual(terms.total.item(), expected.item())


if __name__ == "__main__":
    main()
