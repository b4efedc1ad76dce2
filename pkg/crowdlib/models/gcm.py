"""
Global context module: channel attention from per-channel L2 context.

    s_c   = alpha_c * sqrt(sum_ij x_c[i, j]^2 + eps)
    s^    = conv1d over the channel axis (k = 3, zero padded)
    s~_c  = sqrt(C) * s^_c / sqrt(sum_c s^_c^2 + eps)
    a_c   = 1 + tanh(w_c * s~_c + b_c)        (residual gate, default)
    a_c   = tanh(w_c * s~_c + b_c)            (literal gate)
    out_c = x_c * a_c

With w = b = 0 the residual gate is exactly 1, so a freshly initialized module
returns its input unchanged.
"""
from math import sqrt

import numpy as np

from crowdlib.models.config import GcmGate
from crowdlib.nn import functional as F
from crowdlib.nn.module import Module
from crowdlib.tensors.tensor import Tensor
from crowdlib.utils import faults


def gcm_embed(x: Tensor, alpha: Tensor, epsilon: float) -> Tensor:
    return alpha * x.l2_norm(axes=[1, 2], epsilon=epsilon)


def channel_scale(channels: int) -> float:
    if faults.is_active(faults.CHANNEL_NORM):
        return float(channels)
    return sqrt(channels)


def gcm_transform(s: Tensor, kernel: Tensor, epsilon: float) -> Tensor:
    excited = F.conv1d_channel(s, kernel)
    norm = excited.l2_norm(epsilon=epsilon)
    return excited * channel_scale(s.shape[0]) / norm


def gcm_gate_apply(
    x: Tensor,
    s_tilde: Tensor,
    weight: Tensor,
    bias: Tensor,
    gate: GcmGate = GcmGate.RESIDUAL,
) -> Tensor:
    attention = gcm_attention(s_tilde, weight, bias, gate)
    return x * attention.reshape(x.shape[0], 1, 1)


def gcm_attention(
    s_tilde: Tensor, weight: Tensor, bias: Tensor, gate: GcmGate = GcmGate.RESIDUAL
) -> Tensor:
    activation = (weight * s_tilde + bias).tanh()
    if gate is GcmGate.LITERAL:
        return activation
    return 1.0 + activation


class GlobalContextModule(Module):
    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        kernel_size: int = 3,
        epsilon: float = 1e-4,
        gate: GcmGate = GcmGate.RESIDUAL,
    ) -> None:
        super().__init__()
        self.channels = channels
        self.epsilon = epsilon
        self.gate = gate
        bound = 1 / sqrt(kernel_size)
        self.alpha = self.add_parameter("alpha", Tensor(np.ones(channels)))
        self.kernel = self.add_parameter(
            "kernel", Tensor(rng.uniform(-bound, bound, kernel_size))
        )
        self.weight = self.add_parameter("gate_weight", Tensor(np.zeros(channels)))
        self.bias = self.add_parameter("gate_bias", Tensor(np.zeros(channels)))

    def attention(self, x: Tensor) -> Tensor:
        s = gcm_embed(x, self.alpha, self.epsilon)
        s_tilde = gcm_transform(s, self.kernel, self.epsilon)
        return gcm_attention(s_tilde, self.weight, self.bias, self.gate)

    def forward(self, x: Tensor) -> Tensor:
        s_tilde = gcm_transform(
            gcm_embed(x, self.alpha, self.epsilon), self.kernel, self.epsilon
        )
        return gcm_gate_apply(x, s_tilde, self.weight, self.bias, self.gate)
