from concurrent.futures import ThreadPoolExecutor
from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from parameterized import parameterized

from crowdlib.tensors.tensor import (
    IMPLICIT_TAPE_LIMIT,
    ComputationTape,
    Tensor,
    backward,
    broadcast_shape,
    current_tape,
    get_dtype,
    no_grad,
    precision,
)
from crowdlib.tensors.exceptions import (
    LeafUpdateError,
    NonFiniteError,
    NonScalarBackwardError,
    PrecisionError,
    ShapeMismatchError,
    TapeConsumedError,
)
from crowdlib.tensors.tensor import set_precision


class TestTensor(TestCase):
    def test_default_precision_is_float32(self):
        self.assertEqual(Tensor([1.0, 2.0]).dtype, np.float32)

    def test_precision_context_restores(self):
        with precision("float64"):
            self.assertEqual(Tensor([1.0]).dtype, np.float64)
        self.assertIs(get_dtype(), np.float32)

    def test_unknown_precision_raises(self):
        with self.assertRaises(PrecisionError):
            set_precision("float16")  # type: ignore[arg-type]

    def test_data_is_read_only(self):
        x = Tensor([1.0, 2.0])
        with self.assertRaises(ValueError):
            x.data[0] = 3.0

    def test_zero_extent_rejected(self):
        with self.assertRaises(ShapeMismatchError):
            Tensor(np.zeros((0, 3)))

    def test_update_leaf(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        x.update_([3.0, 4.0])
        assert_array_equal(x.data, [3.0, 4.0])

    def test_update_non_leaf_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape():
            y = x * 2.0
        with self.assertRaises(LeafUpdateError):
            y.update_([0.0, 0.0])

    def test_update_shape_mismatch_raises(self):
        with self.assertRaises(ShapeMismatchError):
            Tensor([1.0, 2.0]).update_([1.0])

    def test_item_of_non_scalar_raises(self):
        with self.assertRaises(NonScalarBackwardError):
            Tensor([1.0, 2.0]).item()

    def test_non_finite_names_operation(self):
        with self.assertRaises(NonFiniteError) as context:
            Tensor([-1.0]).sqrt()
        self.assertIn("Sqrt", context.exception.message)

    def test_no_grad_produces_constants(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 3.0
        self.assertFalse(y.requires_grad)
        self.assertTrue(y.is_leaf)


class TestBroadcasting(TestCase):
    @parameterized.expand(
        [
            ((2, 3), (3,), (2, 3)),
            ((2, 1), (1, 4), (2, 4)),
            ((1,), (5, 2), (5, 2)),
            ((), (2, 2), (2, 2)),
        ]
    )
    def test_broadcast_shape(self, a, b, expected):
        self.assertEqual(broadcast_shape(a, b), expected)

    def test_mismatch_reports_both_shapes(self):
        with self.assertRaises(ShapeMismatchError) as context:
            Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
        self.assertIn("(2, 3)", context.exception.message)
        self.assertIn("(4,)", context.exception.message)

    @parameterized.expand(
        [
            ((2, 1, 3), (1, 4, 1), (4, 3)),
            ((3,), (2, 1), (1, 1, 1)),
            ((1, 5), (5,), (2, 1, 5)),
        ]
    )
    def test_shape_associativity(self, a, b, c):
        left = broadcast_shape(a, broadcast_shape(b, c))
        right = broadcast_shape(broadcast_shape(a, b), c)
        self.assertEqual(left, right)


class TestBackward(TestCase):
    def test_grad_of_sum_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        with ComputationTape():
            grads = backward(x.sum(), {"x": x})
        assert_array_equal(grads["x"].data, np.ones((2, 3)))

    def test_grad_of_sum_of_squares(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape():
            grads = backward((x * x).sum(), {"x": x})
        assert_array_equal(grads["x"].data, [2.0, 4.0])

    def test_grad_is_stored_on_leaf(self):
        x = Tensor([1.0, 2.0], requires_grad=True, name="x")
        with ComputationTape():
            grads = (x * 3.0).sum().backward()
        assert_array_equal(x.grad.data, [3.0, 3.0])
        self.assertIn("x", grads)

    def test_broadcast_grad_is_summed(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor([2.0], requires_grad=True)
        with ComputationTape():
            grads = backward((a * b).sum(), {"a": a, "b": b})
        assert_array_equal(grads["a"].data, np.full((2, 3), 2.0))
        assert_array_equal(grads["b"].data, [6.0])

    def test_unreachable_leaf_gets_zeros(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([5.0, 6.0, 7.0], requires_grad=True)
        with ComputationTape():
            grads = backward(x.sum(), {"x": x, "y": y})
        assert_array_equal(grads["y"].data, np.zeros(3))

    def test_non_scalar_loss_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape():
            with self.assertRaises(NonScalarBackwardError):
                backward(x * 2.0)

    def test_second_backward_raises(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape():
            loss = (x * x).sum()
            backward(loss)
            with self.assertRaises(TapeConsumedError):
                backward(loss)

    def test_tape_is_empty_after_backward(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape() as tape:
            loss = (x * x).sum()
            self.assertEqual(len(tape), 2)
            backward(loss)
        self.assertEqual(len(tape), 0)
        self.assertTrue(tape.consumed)

    def test_growing_tape_warns_once_its_limit_is_reached(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with ComputationTape(warn_after=3) as tape:
            with self.assertLogs("crowdlib.tensors.tensor", "WARNING") as logs:
                for _ in range(4):
                    x = x * 2.0
        self.assertEqual(len(tape), 4)
        self.assertEqual(len(logs.output), 1)
        self.assertIn("3 operations", logs.output[0])

    def test_implicit_tape_has_a_warning_limit(self):
        with ThreadPoolExecutor(max_workers=1) as pool:
            limit = pool.submit(lambda: current_tape().warn_after).result()
        self.assertEqual(limit, IMPLICIT_TAPE_LIMIT)

    def test_reused_leaf_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        with ComputationTape():
            grads = backward((x * x + x).sum(), {"x": x})
        assert_array_equal(grads["x"].data, [7.0])

    def test_sum_is_linear(self):
        rng = np.random.default_rng(0)
        with precision("float64"):
            x = Tensor(rng.uniform(-1, 1, (4, 5)))
            y = Tensor(rng.uniform(-1, 1, (4, 5)))
            combined = (x * 2.5 + y * -0.75).sum().item()
            separate = 2.5 * x.sum().item() - 0.75 * y.sum().item()
        assert_allclose(combined, separate, rtol=1e-6)


if __name__ == "__main__":
    main()
