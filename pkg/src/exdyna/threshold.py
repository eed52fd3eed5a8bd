"""Online threshold scaling."""

from __future__ import annotations

import numpy as np

from .core import round_half_up


def scaling_factor(k: int, k_prime: int, beta: float, gamma: float) -> float:
    exam = k_prime / k
    if exam > beta:
        return 1.0 + gamma
    if exam > 1.0 / beta:
        # in-band: a slight increase, not a no-op
        return 1.0 + gamma / 4
    return 1.0 - gamma


def scale_threshold(k: int, k_prime: int, delta: float, beta: float, gamma: float) -> float:
    return delta * scaling_factor(k, k_prime, beta, gamma)


def initial_threshold(sample, d: float) -> float:
    """Starting threshold that would select a fraction ``d`` of ``sample``.

    This is the ``round(d * len(sample))``-th largest magnitude (at least
    the largest), so selecting ``|acc| >= delta`` keeps that many entries
    when there are no ties.
    """
    mag = np.abs(np.asarray(sample, dtype=float).ravel())
    if mag.size == 0:
        raise ValueError("empty sample")
    m = min(max(round_half_up(d * mag.size), 1), mag.size)
    return float(np.partition(mag, mag.size - m)[mag.size - m])
