"""Dynamic partition allocation.

Every worker runs these functions on its own replica of the control state,
so they must be deterministic and touch only length-``n`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Order, PartialK, PartitionTopology, round_half_up


@dataclass
class AdjustStats:
    moves: int = 0
    skipped: int = 0


def rotate_to_partition_order(k_rank: PartialK, t: int, n: int) -> PartialK:
    """Map counts gathered in rank order at ``t - 1`` back onto partitions.

    Rank ``i`` worked on partition ``((t - 1) % n + i) % n`` in the previous
    iteration. Python's ``%`` already gives the non-negative residue at t=0.
    """
    counts = np.asarray(k_rank.counts)
    if len(counts) != n:
        raise ValueError(f"expected {n} counts, got {len(counts)}")
    shift = (t - 1) % n
    out = np.empty_like(counts)
    out[(shift + np.arange(n)) % n] = counts
    return PartialK(out, Order.PARTITION)


def adjust_topology(topology: PartitionTopology, k_part: PartialK, *,
                    alpha: float, blk_move: int, min_blk: int,
                    stats: AdjustStats | None = None):
    """One left-to-right sweep moving blocks between adjacent partitions.

    A pair is rebalanced when one side selected more than ``alpha`` times
    the mean count and the other less than ``1/alpha`` of it. Returns the
    adjusted ``(topology, k_part)``; the inputs are left untouched.
    """
    if k_part.order is not Order.PARTITION:
        raise ValueError("k_part must be in partition order")
    topo = topology.copy()
    blk_part, blk_pos = topo.blk_part, topo.blk_pos
    k = np.array(k_part.counts, dtype=np.int64)
    n = len(k)
    total = int(k.sum())
    if total == 0 or n < 2:
        return topo, PartialK(k, Order.PARTITION)

    pk_prev = total / n
    den_prev = total / topo.n_g
    k_move = round_half_up(blk_move * topo.sz_blk * den_prev)
    inv_alpha = 1.0 / alpha
    for i in range(n - 1):
        det = k[i] / pk_prev
        det2 = k[i + 1] / pk_prev
        if det > alpha and det2 < inv_alpha:
            src, dst = i, i + 1
        elif det < inv_alpha and det2 > alpha:
            src, dst = i + 1, i
        else:
            continue
        if blk_part[src] - blk_move < min_blk:
            if stats is not None:
                stats.skipped += 1
            continue
        blk_part[src] -= blk_move
        blk_part[dst] += blk_move
        # the shared boundary moves toward the donor
        blk_pos[i + 1] += blk_move if src == i + 1 else -blk_move
        moved = min(k_move, int(k[src]))
        k[src] -= moved
        k[dst] += moved
        if stats is not None:
            stats.moves += 1
    return topo, PartialK(k, Order.PARTITION)


def partition_for(t: int, rank: int, n: int) -> int:
    return (t % n + rank) % n


def allocate_partition(topology: PartitionTopology, t: int, rank: int) -> tuple[int, int]:
    """Index range ``[st, end)`` assigned to ``rank`` at iteration ``t``."""
    return topology.bounds(partition_for(t, rank, topology.n))
