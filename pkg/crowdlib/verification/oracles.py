"""
Loop evaluations used as references by the verification suites. They favour
transparency over speed and only run on small inputs.
"""
import math
from typing import Optional

import numpy as np


def direct_conv(
    x: np.ndarray,
    weight: np.ndarray,
    bias: Optional[np.ndarray] = None,
    groups: int = 1,
) -> np.ndarray:
    """Grouped zero-padded "same" cross-correlation, one multiply-add at a time."""
    channels, height, width = x.shape
    out_channels, per_group, kernel, _ = weight.shape
    pad = (kernel - 1) // 2
    out_per_group = out_channels // groups
    out = np.zeros((out_channels, height, width))
    for o in range(out_channels):
        first = (o // out_per_group) * per_group
        for c in range(per_group):
            for i in range(height):
                for j in range(width):
                    for u in range(kernel):
                        for v in range(kernel):
                            row, col = i + u - pad, j + v - pad
                            if 0 <= row < height and 0 <= col < width:
                                out[o, i, j] += weight[o, c, u, v] * x[first + c, row, col]
        if bias is not None:
            out[o] += bias[o]
    return out


def sliding_conv1d(signal: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    reach = len(kernel) // 2
    padded = np.concatenate([np.zeros(reach), signal, np.zeros(reach)])
    return np.array(
        [
            sum(kernel[j] * padded[c + j] for j in range(len(kernel)))
            for c in range(len(signal))
        ]
    )


def channel_l2(x: np.ndarray, alpha: np.ndarray, epsilon: float) -> np.ndarray:
    """alpha_c * sqrt(sum over pixels of x_c^2 + eps)"""
    channels, height, width = x.shape
    out = np.zeros(channels)
    for c in range(channels):
        total = 0.0
        for i in range(height):
            for j in range(width):
                total += x[c, i, j] * x[c, i, j]
        out[c] = alpha[c] * math.sqrt(total + epsilon)
    return out


def loop_posterior(
    points: np.ndarray,
    grid: np.ndarray,
    sigma: float,
    margin: float,
    use_background: bool,
) -> np.ndarray:
    rows = []
    for x_m, y_m in grid:
        if len(points) == 0:
            rows.append([1.0])
            continue
        distances = [math.hypot(x_m - x_n, y_m - y_n) for x_n, y_n in points]
        logits = [-(d * d) / (2 * sigma * sigma) for d in distances]
        if use_background:
            background = -((min(distances) - margin) ** 2) / (2 * sigma * sigma)
        else:
            background = -math.inf
        logits = [background] + logits
        peak = max(logits)
        weights = [math.exp(value - peak) for value in logits]
        total = math.fsum(weights)
        rows.append([w / total for w in weights])
    return np.array(rows)


def loop_bayesian_loss(
    density: np.ndarray, probabilities: np.ndarray, use_background: bool
) -> float:
    flat = density.reshape(-1)
    cells, columns = probabilities.shape
    expected = [
        math.fsum(probabilities[m, n] * flat[m] for m in range(cells))
        for n in range(columns)
    ]
    loss = math.fsum(abs(1.0 - e) for e in expected[1:])
    if use_background or columns == 1:
        loss += abs(expected[0])
    return loss
