from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from crowdlib.nn.module import ModelParams
from crowdlib.tensors.tensor import Tensor, precision
from crowdlib.training.exceptions import GradientMismatchError
from crowdlib.training.optimizer import BETA1, BETA2, EPSILON, TrainState, adam_step


def _state(values) -> TrainState:
    with precision("float64"):
        param = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name="p")
    return TrainState.create(ModelParams(p=param))


class TestAdamStep(TestCase):
    def test_zero_gradient_leaves_parameters(self):
        state = _state([1.0, -2.0])
        state = adam_step(state, {"p": np.zeros(2)}, lr=0.1)
        assert_array_equal(state.params["p"].data, [1.0, -2.0])
        self.assertEqual(state.step, 1)

    def test_first_step_moves_by_learning_rate(self):
        state = _state([1.0, -2.0, 0.5])
        grad = np.array([0.5, -0.25, 3.0])
        state = adam_step(state, {"p": grad}, lr=1e-3)
        assert_allclose(
            state.params["p"].data, [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3], atol=1e-10
        )

    def test_two_steps_match_hand_computation(self):
        lr = 0.01
        state = _state([0.3])
        grads = [np.array([0.2]), np.array([-0.1])]
        expected, m, v = 0.3, 0.0, 0.0
        for step, grad in enumerate(grads, start=1):
            state = adam_step(state, {"p": grad}, lr=lr)
            m = BETA1 * m + (1 - BETA1) * grad[0]
            v = BETA2 * v + (1 - BETA2) * grad[0] ** 2
            m_hat, v_hat = m / (1 - BETA1**step), v / (1 - BETA2**step)
            expected -= lr * m_hat / (np.sqrt(v_hat) + EPSILON)
        self.assertAlmostEqual(float(state.params["p"].data[0]), expected, delta=1e-10)
        assert_allclose(state.m["p"], [m], rtol=1e-12)
        assert_allclose(state.v["p"], [v], rtol=1e-12)

    def test_moments_are_float64(self):
        param = Tensor(np.ones(2), requires_grad=True, name="p")
        state = adam_step(TrainState.create(ModelParams(p=param)), {"p": np.ones(2)})
        self.assertEqual(state.m["p"].dtype, np.float64)
        self.assertEqual(state.params["p"].dtype, np.float32)

    def test_previous_state_is_untouched(self):
        state = _state([1.0])
        adam_step(state, {"p": np.ones(1)})
        self.assertEqual(state.step, 0)
        assert_array_equal(state.m["p"], [0.0])

    def test_accepts_tensor_gradients(self):
        state = _state([1.0])
        with precision("float64"):
            grad = Tensor([2.0])
        state = adam_step(state, {"p": grad}, lr=0.5)
        assert_allclose(state.params["p"].data, [0.5], atol=1e-8)

    def test_missing_gradient_raises(self):
        with self.assertRaises(GradientMismatchError) as context:
            adam_step(_state([1.0]), {})
        self.assertIn("'p'", context.exception.message)

    def test_shape_mismatch_raises(self):
        with self.assertRaises(GradientMismatchError):
            adam_step(_state([1.0, 2.0]), {"p": np.ones(3)})


class TestTrainState(TestCase):
    def test_record_validation_keeps_best(self):
        state = _state([1.0])
        state.step = 4
        self.assertTrue(state.record_validation(3.0))
        state.step = 8
        self.assertFalse(state.record_validation(3.5))
        state.step = 12
        self.assertTrue(state.record_validation(2.0))
        self.assertEqual((state.best_mae, state.best_step), (2.0, 12))
        self.assertEqual(state.history, [3.0, 3.5, 2.0])

    def test_ties_keep_the_earlier_step(self):
        state = _state([1.0])
        state.record_validation(1.0)
        state.step = 5
        self.assertFalse(state.record_validation(1.0))
        self.assertEqual(state.best_step, 0)


if __name__ == "__main__":
    main()
