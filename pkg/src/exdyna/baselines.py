"""Comparison sparsifiers: Top-k, CLT-k and hard-threshold."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .collectives import broadcast
from .selector import select_indices


def topk_select(acc: np.ndarray, k: int) -> np.ndarray:
    """Ascending indices of the ``k`` largest ``|acc|``; ties go to the lower index.

    Exact: the k-th largest magnitude is found with a partition, everything
    strictly above it is kept, and the remaining slots are filled with the
    lowest-indexed entries equal to it.
    """
    n_g = len(acc)
    if not 1 <= k <= n_g:
        raise ValueError(f"k={k} out of range [1, {n_g}]")
    mag = np.abs(acc)
    if k == n_g:
        return np.arange(n_g)
    kth = np.partition(mag, n_g - k)[n_g - k]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: k - len(above)]
    return np.union1d(above, ties)


def hard_threshold_select(acc: np.ndarray, fixed_delta: float) -> np.ndarray:
    if fixed_delta <= 0:
        raise ValueError("fixed_delta must be positive")
    return select_indices(acc, 0, len(acc), fixed_delta)


def cltk_leader(t: int, n: int) -> int:
    return t % n


def cltk_step(accs: Sequence[np.ndarray], t: int, k: int) -> list[np.ndarray]:
    """The leader picks its own top-k and every rank receives that index set."""
    n = len(accs)
    leader = cltk_leader(t, n)
    return broadcast(topk_select(accs[leader], k), n, leader)
