"""Error-feedback accumulation and partition-wise threshold selection."""

from __future__ import annotations

import numpy as np


def accumulate(e: np.ndarray, eta: float, grad: np.ndarray) -> np.ndarray:
    if e.shape != grad.shape:
        raise ValueError(f"length mismatch: {e.shape} vs {grad.shape}")
    return e + eta * grad


def select_indices(acc: np.ndarray, st: int, end: int, delta: float) -> np.ndarray:
    """Absolute, ascending indices ``j`` in ``[st, end)`` with ``|acc[j]| >= delta``."""
    if not 0 <= st <= end <= len(acc):
        raise ValueError(f"bad range [{st}, {end}) for length {len(acc)}")
    idx = np.flatnonzero(np.abs(acc[st:end]) >= delta)
    idx += st
    return idx


def cap_selection(acc: np.ndarray, idx: np.ndarray, limit: int) -> np.ndarray:
    """Keep the ``limit`` largest-magnitude entries of ``idx``.

    Ties go to the lower index. Returns ``idx`` itself when under the limit.
    """
    if len(idx) <= limit:
        return idx
    mag = np.abs(acc[idx])
    # lexsort: last key is primary
    order = np.lexsort((idx, -mag))[:limit]
    return np.sort(idx[order])


def clear_selected(acc: np.ndarray, idx: np.ndarray, inplace: bool = False) -> np.ndarray:
    out = acc if inplace else acc.copy()
    out[idx] = 0
    return out
