"""
Adam with bias correction. Moments are kept in float64 regardless of the engine
precision; parameter updates are written back in each parameter's own dtype.
"""
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

import numpy as np

from crowdlib.nn.module import ModelParams
from crowdlib.tensors.tensor import Tensor
from crowdlib.training.exceptions import GradientMismatchError

LEARNING_RATE = 1e-5
BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class TrainState:
    """
    Optimizer state. `epoch` is the cursor of the random streams, which are all
    derived from (seed, epoch, position).
    """

    params: ModelParams
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    epoch: int = 0
    best_mae: Optional[float] = None
    best_step: Optional[int] = None
    history: list[float] = field(default_factory=list)

    @classmethod
    def create(cls, params: ModelParams) -> "TrainState":
        return cls(
            params=params,
            m={name: np.zeros(t.shape) for name, t in params.items()},
            v={name: np.zeros(t.shape) for name, t in params.items()},
        )

    def record_validation(self, mae: float) -> bool:
        """Keep `mae` if it is the best so far; returns whether it was."""
        self.history.append(mae)
        if self.best_mae is None or mae < self.best_mae:
            self.best_mae, self.best_step = mae, self.step
            return True
        return False


def _as_array(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    return np.asarray(value.data if isinstance(value, Tensor) else value, np.float64)


def adam_step(
    state: TrainState,
    gradients: Mapping[str, Union[Tensor, np.ndarray]],
    lr: float = LEARNING_RATE,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPSILON,
) -> TrainState:
    for name, param in state.params.items():
        if name not in gradients:
            raise GradientMismatchError(f"no gradient for parameter {name!r}. ")
        if tuple(gradients[name].shape) != param.shape:
            raise GradientMismatchError(
                f"gradient of {name!r} has shape {tuple(gradients[name].shape)}, "
                f"parameter has {param.shape}. "
            )
    step = state.step + 1
    m, v = {}, {}
    for name, param in state.params.items():
        grad = _as_array(gradients[name])
        m[name] = beta1 * state.m[name] + (1 - beta1) * grad
        v[name] = beta2 * state.v[name] + (1 - beta2) * grad * grad
        m_hat = m[name] / (1 - beta1**step)
        v_hat = v[name] / (1 - beta2**step)
        update = lr * m_hat / (np.sqrt(v_hat) + eps)
        param.update_(param.data.astype(np.float64) - update)
    return replace(state, m=m, v=v, step=step)
