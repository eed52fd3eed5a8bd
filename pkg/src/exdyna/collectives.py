"""Simulated collectives with exact element-count traffic accounting.

Nothing is sent anywhere: each collective takes every rank's input at once
(the barrier) and returns what every rank would hold afterwards. Reductions
run in rank order so results are bit-reproducible.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Order, PartialK, SparseBatch


@dataclass
class GatherResult:
    idx_global: np.ndarray
    k_rank: PartialK
    m_t: int
    C_t: int
    f_t: float
    duplicates: int = 0

    @property
    def k_prime(self) -> int:
        return self.k_rank.total


def padding_stats(counts) -> tuple[int, int, float]:
    """``(m_t, C_t, f_t)`` for per-worker payload sizes ``counts``.

    With nothing selected there is no padding, so ``f_t`` is reported as 1.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n = len(counts)
    m_t = int(counts.max()) if n else 0
    total = int(counts.sum())
    C_t = n * int((m_t - counts).sum())
    f_t = n * m_t / total if total else 1.0
    return m_t, C_t, f_t


def all_gather(batches: Sequence[SparseBatch], *, exclusive: bool = True) -> GatherResult:
    """Gather every worker's selected indices, padded to the largest payload.

    With ``exclusive=True`` overlapping selections are a bug and raise;
    otherwise overlaps are merged for the update and counted in
    ``duplicates`` while still being charged to ``k_prime``.
    """
    counts = np.array([b.valid_count for b in batches], dtype=np.int64)
    m_t, C_t, f_t = padding_stats(counts)
    for b in batches:
        b.padded_length = m_t
    parts = [b.indices for b in batches]
    merged = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    if exclusive:
        merged.sort()
        dup = int(np.count_nonzero(merged[1:] == merged[:-1]))
        if dup:
            raise ValueError(f"{dup} duplicate indices across exclusive partitions")
        idx = merged
    else:
        idx = np.unique(merged)
        dup = len(merged) - len(idx)
    return GatherResult(idx, PartialK(counts, Order.RANK), m_t, C_t, f_t, dup)


def all_reduce_sum(contributions: Sequence[np.ndarray]) -> np.ndarray:
    if not contributions:
        raise ValueError("nothing to reduce")
    shape = contributions[0].shape
    out = np.array(contributions[0], copy=True)
    for c in contributions[1:]:
        if c.shape != shape:
            raise ValueError(f"length mismatch: {c.shape} vs {shape}")
        out += c
    return out


def broadcast(payload, n: int, leader: int = 0) -> list:
    if not 0 <= leader < n:
        raise ValueError(f"leader {leader} not in [0, {n})")
    return [payload if r == leader else copy.deepcopy(payload) for r in range(n)]
