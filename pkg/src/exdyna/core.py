"""Shared domain types and configuration validation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SparsifierConfig:
    n: int
    n_g: int
    d: float
    n_b: Optional[int] = None
    delta_0: Optional[float] = None
    alpha: float = 1.1
    beta: float = 2.0
    gamma: float = 0.01
    blk_move: int = 1
    min_blk: int = 2
    eta: float = 1.0
    seed: int = 0
    max_density_cap: Optional[float] = None
    k: int = field(init=False)

    def __post_init__(self):
        if self.n_b is None:
            object.__setattr__(self, "n_b", 64 * self.n)
        # k is fixed here once; downstream code never re-derives it from d.
        object.__setattr__(self, "k", round_half_up(self.d * self.n_g))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.init}


def validate(config: SparsifierConfig) -> SparsifierConfig:
    """Return ``config`` unchanged if every invariant holds.

    Checks run in a fixed order and the first failure is raised as a
    :class:`ConfigError` whose message names the violated invariant.
    """
    c = config
    checks = [
        (c.n >= 1, "n < 1"),
        (c.n_g >= 1, "n_g < 1"),
        (c.n_b >= 1, "n_b < 1"),
        (0.0 < c.d <= 1.0, "density out of range"),
        (c.min_blk >= 1, "min_blk < 1"),
        (c.blk_move >= 1, "blk_move < 1"),
        (c.n_b >= c.n * c.min_blk, "n_b < n·min_blk"),
        (c.n_b <= c.n_g, "n_b > n_g"),
        (c.k >= c.n, "k < n"),
        (c.delta_0 is None or c.delta_0 > 0, "delta_0 <= 0"),
        (c.alpha > 1.0, "alpha <= 1"),
        (c.beta > 1.0, "beta <= 1"),
        (0.0 < c.gamma < 1.0, "gamma out of range"),
        (c.eta > 0, "eta <= 0"),
        (c.max_density_cap is None or 0.0 < c.max_density_cap <= 1.0,
         "max_density_cap out of range"),
    ]
    for ok, name in checks:
        if not ok:
            raise ConfigError(name)
    return c


@dataclass
class PartitionTopology:
    """Block layout of the gradient vector.

    ``blk_part[i]`` blocks of ``sz_blk`` gradients starting at block
    ``blk_pos[i]`` form partition ``i``. The last partition also owns the
    tail ``[n_b * sz_blk, n_g)`` left over by the block rounding.
    """

    sz_blk: int
    blk_part: np.ndarray
    blk_pos: np.ndarray
    n_g: int

    @property
    def n(self) -> int:
        return len(self.blk_part)

    @property
    def n_b(self) -> int:
        return int(self.blk_part.sum())

    def bounds(self, p: int) -> tuple[int, int]:
        st = int(self.blk_pos[p]) * self.sz_blk
        if p == self.n - 1:
            return st, self.n_g
        return st, int(self.blk_pos[p] + self.blk_part[p]) * self.sz_blk

    def copy(self) -> "PartitionTopology":
        return PartitionTopology(self.sz_blk, self.blk_part.copy(),
                                 self.blk_pos.copy(), self.n_g)

    def same_as(self, other: "PartitionTopology") -> bool:
        return (self.sz_blk == other.sz_blk and self.n_g == other.n_g
                and np.array_equal(self.blk_part, other.blk_part)
                and np.array_equal(self.blk_pos, other.blk_pos))

    def check(self, n_b: int, min_blk: int) -> None:
        """Raise AssertionError if any structural invariant is broken."""
        assert self.sz_blk >= 1
        assert self.blk_pos[0] == 0
        assert np.array_equal(self.blk_pos[1:], np.cumsum(self.blk_part)[:-1])
        assert self.blk_part.sum() == n_b
        assert (self.blk_part >= min_blk).all()
        assert n_b * self.sz_blk <= self.n_g


class Order(enum.Enum):
    RANK = "rank"
    PARTITION = "partition"


@dataclass
class PartialK:
    counts: np.ndarray
    order: Order

    def copy(self) -> "PartialK":
        return PartialK(self.counts.copy(), self.order)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class WorkerState:
    rank: int
    x: np.ndarray
    e: np.ndarray
    delta: float
    k_t: PartialK
    topology: Optional[PartitionTopology] = None


@dataclass
class SparseBatch:
    indices: np.ndarray
    values: Optional[np.ndarray] = None
    padded_length: int = 0

    @property
    def valid_count(self) -> int:
        return len(self.indices)

    def check(self, n_g: int) -> None:
        idx = self.indices
        assert idx.ndim == 1
        if len(idx):
            assert idx[0] >= 0 and idx[-1] < n_g
            assert (np.diff(idx) > 0).all()
        if self.values is not None:
            assert len(self.values) == len(idx)


CSV_COLUMNS = ("t", "k_prime", "density", "eps", "m_t", "C_t", "f_t",
               "global_err", "delta", "loss", "union", "duplicates")
CSV_SCHEMA_VERSION = "exdyna-ledger/1"


@dataclass
class LedgerRow:
    t: int
    k_prime: int
    density: float
    eps: float
    m_t: int
    C_t: int
    f_t: float
    global_err: float
    delta: Optional[float] = None
    loss: Optional[float] = None
    union: int = 0
    duplicates: int = 0

    def as_csv_fields(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, (float, np.floating)):
                out.append(repr(float(v)))
            else:
                out.append(str(int(v)))
        return out
