import logging
from typing import Callable, Optional

import numpy as np

from crowdlib.tensors.tensor import (
    ComputationTape,
    Tensor,
    backward,
    get_dtype,
    no_grad,
)
from crowdlib.tensors.exceptions import (
    NonFiniteError,
    NonScalarBackwardError,
    PrecisionError,
)

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-8


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    components: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare the analytic gradient of scalar `f` at `x` with central differences.

    Returns the max over checked components of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). With `components`
    set, a seeded random subset of that many components is checked instead of all.
    Must run in float64 mode.
    """
    if get_dtype() is not np.float64:
        raise PrecisionError("grad_check must run inside precision('float64'). ")
    base = np.array(x.data, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True, name="x")
    with ComputationTape():
        y = f(leaf)
        if y.size != 1:
            raise NonScalarBackwardError(
                f"grad_check needs a scalar function, got shape {y.shape}. "
            )
        analytic = backward(y, {"x": leaf})["x"].data

    if components is None or components >= base.size:
        indices = np.arange(base.size)
    else:
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(base.size, size=components, replace=False))

    worst = 0.0
    with no_grad():
        for flat in indices:
            index = tuple(int(i) for i in np.unravel_index(int(flat), base.shape))
            values = []
            for step in (h, -h):
                shifted = base.copy()
                shifted[index] += step
                try:
                    value = f(Tensor(shifted)).item()
                except NonFiniteError as error:
                    raise NonFiniteError(
                        f"non-finite intermediate at component {index}: {error}"
                    )
                if not np.isfinite(value):
                    raise NonFiniteError(f"non-finite output at component {index}. ")
                values.append(value)
            numeric = (values[0] - values[1]) / (2 * h)
            exact = float(analytic[index])
            scale = max(abs(exact), abs(numeric), DENOMINATOR_FLOOR)
            worst = max(worst, abs(exact - numeric) / scale)
    logger.debug("grad_check over %d components: %.3e", len(indices), worst)
    return worst
