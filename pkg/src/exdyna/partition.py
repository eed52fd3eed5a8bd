"""Initial block-based partitioning of the gradient vector."""

from __future__ import annotations

import warnings

import numpy as np

from .core import ConfigError, PartitionTopology

WARP = 32


def block_size(n_g: int, n_b: int) -> int:
    """Gradients per block, aligned down to a multiple of 32.

    Alignment only matters for coalesced GPU access, so when ``n_g // n_b``
    is below 32 the unaligned size is used instead of collapsing to zero.
    """
    temp = n_g // n_b
    if temp >= WARP:
        return temp - temp % WARP
    warnings.warn(f"block size {temp} < {WARP}; using unaligned blocks",
                  stacklevel=2)
    return max(temp, 1)


def build_topology(n_g: int, n_b: int, n: int, min_blk: int = 1) -> PartitionTopology:
    quotient, remainder = divmod(n_b, n)
    if quotient < min_blk:
        raise ConfigError("n_b < n·min_blk")
    sz_blk = block_size(n_g, n_b)
    blk_part = np.full(n, quotient, dtype=np.int64)
    blk_part[:remainder] += 1
    blk_pos = np.zeros(n, dtype=np.int64)
    blk_pos[1:] = np.cumsum(blk_part)[:-1]
    return PartitionTopology(sz_blk, blk_part, blk_pos, n_g)
