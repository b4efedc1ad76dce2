import math
from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from parameterized import parameterized
from pydantic import ValidationError

from crowdlib.supervision.config import SupervisionConfig
from crowdlib.supervision.exceptions import InvalidBandwidthError
from crowdlib.supervision.posterior import build_posterior, grid_coordinates


def loop_posterior(points, grid, sigma, margin, use_background):
    rows = []
    for x_m, y_m in grid:
        distances = [math.hypot(x_m - x_n, y_m - y_n) for x_n, y_n in points]
        logits = [-(d * d) / (2 * sigma * sigma) for d in distances]
        if use_background:
            nearest = min(distances)
            background = -((nearest - margin) ** 2) / (2 * sigma * sigma)
        else:
            background = -math.inf
        logits = [background] + logits
        peak = max(logits)
        weights = [math.exp(value - peak) for value in logits]
        total = sum(weights)
        rows.append([w / total for w in weights])
    return np.array(rows)


class TestGridCoordinates(TestCase):
    def test_single_cell(self):
        assert_array_equal(grid_coordinates(1, 1), [[4.0, 4.0]])

    def test_two_by_two(self):
        centers = {tuple(c) for c in grid_coordinates(2, 2)}
        self.assertEqual(centers, {(4.0, 4.0), (12.0, 4.0), (4.0, 12.0), (12.0, 12.0)})

    def test_row_major_order(self):
        grid = grid_coordinates(2, 3)
        assert_array_equal(grid[1], [12.0, 4.0])
        assert_array_equal(grid[3], [4.0, 12.0])


class TestBuildPosterior(TestCase):
    def test_single_point_without_background(self):
        config = SupervisionConfig(use_background=False)
        posterior = build_posterior(np.array([[4.0, 4.0]]), grid_coordinates(1, 1), config)
        assert_array_equal(posterior.probabilities, [[0.0, 1.0]])

    def test_equidistant_points_split_evenly(self):
        config = SupervisionConfig(use_background=False)
        points = np.array([[0.0, 4.0], [8.0, 4.0]])
        posterior = build_posterior(points, grid_coordinates(1, 1), config)
        assert_allclose(posterior.probabilities[0, 1:], [0.5, 0.5], atol=1e-12)

    def test_empty_scene_is_all_background(self):
        posterior = build_posterior(
            np.zeros((0, 2)), grid_coordinates(3, 4), SupervisionConfig()
        )
        assert_array_equal(posterior.probabilities, np.ones((12, 1)))
        self.assertEqual(posterior.num_points, 0)

    @parameterized.expand(
        [
            ("sigma2_background", 2.0, True),
            ("sigma8_background", 8.0, True),
            ("sigma32_background", 32.0, True),
            ("sigma2_no_background", 2.0, False),
            ("sigma8_no_background", 8.0, False),
            ("sigma32_no_background", 32.0, False),
        ]
    )
    def test_matches_loop_evaluation(self, _, sigma, use_background):
        rng = np.random.default_rng(int(sigma) + use_background)
        points = rng.uniform(0, 64, (3, 2))
        grid = grid_coordinates(8, 8)
        config = SupervisionConfig(sigma=sigma, use_background=use_background)
        margin = config.background_margin(64, 64)
        posterior = build_posterior(points, grid, config)
        expected = loop_posterior(points, grid, sigma, margin, use_background)
        assert_allclose(posterior.probabilities, expected, atol=1e-6)

    def test_default_margin_uses_grid_extents(self):
        config = SupervisionConfig()
        points = np.array([[10.0, 20.0], [40.0, 30.0]])
        grid = grid_coordinates(8, 8)
        assert_array_equal(
            build_posterior(points, grid, config).probabilities,
            build_posterior(points, grid, config, margin=0.15 * 64).probabilities,
        )

    @parameterized.expand([(0.5,), (8.0,), (200.0,)])
    def test_rows_are_stochastic_with_coincident_points(self, sigma):
        points = np.array([[5.0, 5.0], [5.0, 5.0], [60.0, 2.0]])
        posterior = build_posterior(
            points, grid_coordinates(8, 8), SupervisionConfig(sigma=sigma)
        )
        assert_allclose(posterior.row_sums(), 1.0, atol=1e-6)
        self.assertTrue(np.all(posterior.probabilities >= 0))
        self.assertTrue(np.all(posterior.probabilities <= 1))
        assert_allclose(posterior.probabilities[:, 1], posterior.probabilities[:, 2])

    def test_far_pixels_stay_finite(self):
        points = np.array([[1.0, 1.0]])
        posterior = build_posterior(
            points, grid_coordinates(256, 256), SupervisionConfig(sigma=2.0)
        )
        self.assertTrue(np.all(np.isfinite(posterior.probabilities)))

    def test_translation_equivariance(self):
        rng = np.random.default_rng(5)
        points = rng.uniform(0, 64, (4, 2))
        grid = grid_coordinates(8, 8)
        shift = np.array([16.0, 8.0])
        config = SupervisionConfig()
        assert_allclose(
            build_posterior(points, grid, config, margin=9.6).probabilities,
            build_posterior(points + shift, grid + shift, config, margin=9.6).probabilities,
            atol=1e-12,
        )

    def test_rejects_non_positive_sigma(self):
        config = SupervisionConfig.model_construct(sigma=0.0)
        with self.assertRaises(InvalidBandwidthError):
            build_posterior(np.array([[1.0, 1.0]]), grid_coordinates(1, 1), config)

    def test_config_rejects_non_positive_sigma(self):
        with self.assertRaises(ValidationError):
            SupervisionConfig(sigma=-1.0)


class TestSupervisionConfig(TestCase):
    def test_defaults(self):
        config = SupervisionConfig()
        self.assertEqual(config.sigma, 8.0)
        self.assertEqual(config.lambda_, 0.1)
        self.assertTrue(config.use_background)
        self.assertAlmostEqual(config.background_margin(256, 512), 38.4)

    def test_lambda_alias(self):
        self.assertEqual(SupervisionConfig(**{"lambda": 1.0}).lambda_, 1.0)

    def test_rejects_unknown_fields(self):
        with self.assertRaises(ValidationError):
            SupervisionConfig(lamda=0.5)


if __name__ == "__main__":
    main()
