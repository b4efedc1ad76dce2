from unittest import TestCase, main

import numpy as np
from numpy.testing import assert_array_equal

from crowdlib.nn.exceptions import StateMismatchError
from crowdlib.nn.layers import BatchNorm2dLayer, Conv2dLayer, ConvBnRelu, Sequential
from crowdlib.nn.module import Mode
from crowdlib.nn.specs import BatchNormSpec
from crowdlib.tensors.tensor import Tensor


def _stack(seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    return Sequential(
        [ConvBnRelu(2, 4, 3, rng), Conv2dLayer.create(4, 1, 1, rng)],
        names=["block", "out"],
    )


class TestModule(TestCase):
    def test_parameter_names_follow_construction_order(self):
        self.assertEqual(
            list(_stack().parameters()),
            ["block.conv.weight", "block.bn.gamma", "block.bn.beta", "out.weight", "out.bias"],
        )

    def test_buffers(self):
        self.assertEqual(
            list(_stack().buffers()), ["block.bn.running_mean", "block.bn.running_var"]
        )

    def test_state_lists_parameters_then_buffers(self):
        names = list(_stack().state())
        self.assertEqual(names[-2:], ["block.bn.running_mean", "block.bn.running_var"])
        self.assertEqual(len(names), 7)

    def test_parameter_count(self):
        self.assertEqual(_stack().parameter_count(), 2 * 4 * 9 + 4 + 4 + 4 + 1)

    def test_load_state_copies_values(self):
        source, target = _stack(1), _stack(2)
        target.load_state(source.state())
        for name, tensor in source.state().items():
            assert_array_equal(target.state()[name].data, tensor.data)

    def test_load_state_accepts_any_order(self):
        source, target = _stack(1), _stack(2)
        state = dict(reversed(list(source.state().items())))
        target.load_state(state)
        x = Tensor(np.random.default_rng(3).random((2, 5, 5)))
        assert_array_equal(source.eval()(x).data, target.eval()(x).data)

    def test_load_state_missing_tensor_raises(self):
        state = dict(_stack().state())
        del state["out.bias"]
        with self.assertRaises(StateMismatchError) as context:
            _stack().load_state(state)
        self.assertIn("out.bias", context.exception.message)

    def test_load_state_unexpected_tensor_raises(self):
        state = dict(_stack().state())
        state["extra"] = Tensor([1.0])
        with self.assertRaises(StateMismatchError):
            _stack().load_state(state)

    def test_load_state_shape_mismatch_names_first_tensor(self):
        rng = np.random.default_rng(0)
        wide = Sequential(
            [ConvBnRelu(2, 8, 3, rng), Conv2dLayer.create(8, 1, 1, rng)],
            names=["block", "out"],
        )
        with self.assertRaises(StateMismatchError) as context:
            _stack().load_state(wide.state())
        self.assertIn("block.conv.weight", context.exception.message)

    def test_mode_propagates(self):
        stack = _stack().eval()
        bn = stack.layers[0].bn
        self.assertIs(bn.mode, Mode.EVAL)
        stack.train()
        self.assertIs(bn.mode, Mode.TRAIN)

    def test_parameters_require_grad(self):
        layer = BatchNorm2dLayer(BatchNormSpec.create(3))
        self.assertTrue(all(t.requires_grad for t in layer.parameters().values()))
        self.assertFalse(any(t.requires_grad for t in layer.buffers().values()))


if __name__ == "__main__":
    main()
