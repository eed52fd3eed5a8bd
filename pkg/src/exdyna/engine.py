"""Distributed SGD with sparsified gradient exchange, simulated in lockstep.

Workers run one after another in rank order between collectives; the
collectives in :mod:`exdyna.collectives` act as the barriers. Each worker
keeps its own copy of the control state (threshold, partial-k vector,
topology) and updates it independently, and after every iteration the
replicas are compared bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import allocator, baselines
from .collectives import GatherResult, all_gather, all_reduce_sum, broadcast, padding_stats
from .core import (ConfigError, LedgerRow, Order, PartialK, SparseBatch, SparsifierConfig,
                   WorkerState, validate)
from .partition import build_topology
from .selector import accumulate, cap_selection, clear_selected, select_indices
from .threshold import initial_threshold, scale_threshold

log = logging.getLogger(__name__)

SPARSIFIERS = ("exdyna", "topk", "cltk", "hardthreshold")


class ReplicationError(RuntimeError):
    """Workers' replicated state diverged."""


def global_error(residuals: Sequence[np.ndarray]) -> float:
    """Mean over workers of the L2 norm of each residual."""
    return float(sum(np.linalg.norm(e.astype(np.float64, copy=False)) for e in residuals)
                 / len(residuals))


def density_error(k: int, k_prime: int, n_g: int) -> float:
    if n_g <= 0:
        raise ValueError("n_g must be positive")
    return abs(k - k_prime) / n_g


def scaled_error_series(delta_series, error_series) -> np.ndarray:
    """Rescale ``error_series`` so that it sums to the same total as ``delta_series``."""
    delta = np.asarray(delta_series, dtype=float)
    err = np.asarray(error_series, dtype=float)
    if delta.shape != err.shape or delta.size == 0:
        raise ValueError("series must be non-empty and of equal length")
    total = err.sum()
    if total == 0:
        raise ValueError("error series sums to zero")
    return err * (delta.sum() / total)


@dataclass
class Diagnostics:
    adjust_moves: int = 0
    adjust_skips: int = 0
    cap_fired: int = 0
    idle_worker_iters: int = 0
    invariant_checks: int = 0
    adjust_stats: allocator.AdjustStats = field(default_factory=allocator.AdjustStats)


class Simulator:
    """Runs one sparsifier over ``n`` simulated workers.

    ``source`` supplies ``gradient(x, t, rank)``, ``x0()``, ``loss(x)`` and
    ``n_g``. ``fixed_delta`` is the hard-threshold value; ExDyna starts from
    ``config.delta_0`` or, when that is unset, from a quantile of the leader's
    first accumulated gradient.
    """

    def __init__(self, config: SparsifierConfig, source, sparsifier: str = "exdyna", *,
                 static_partitions: bool = False, fixed_delta: Optional[float] = None,
                 check_invariants: bool = True):
        self.config = validate(config)
        if sparsifier not in SPARSIFIERS:
            raise ConfigError(f"unknown sparsifier {sparsifier!r}")
        if source.n_g != config.n_g:
            raise ConfigError("workload dimension != n_g")
        self.source = source
        self.sparsifier = sparsifier
        self.static_partitions = static_partitions
        self.check_invariants = check_invariants
        self.diagnostics = Diagnostics()
        self.t = 0

        n = config.n
        delta = None
        if sparsifier == "hardthreshold":
            delta = fixed_delta if fixed_delta is not None else config.delta_0
            if delta is None or delta <= 0:
                raise ConfigError("hard-threshold needs a positive fixed delta")
        elif sparsifier == "exdyna":
            delta = config.delta_0
        topology = None
        if sparsifier == "exdyna":
            topology = build_topology(config.n_g, config.n_b, n, config.min_blk)
        x0 = source.x0()
        # every worker starts from the same equal split, so the first adjustment is a no-op
        k0 = PartialK(np.full(n, config.k // n, dtype=np.int64), Order.RANK)
        self.workers = [
            WorkerState(rank=r, x=x0.copy(), e=np.zeros_like(x0), delta=delta,
                        k_t=k0.copy(), topology=None if topology is None else topology.copy())
            for r in range(n)
        ]
        if self.sparsifier == "exdyna":
            self.limit = (None if config.max_density_cap is None
                          else max(1, int(config.max_density_cap * config.n_g / n)))

    # -- one iteration -----------------------------------------------------

    def _select_exdyna(self, t: int, accs) -> list[np.ndarray]:
        cfg = self.config
        picks = []
        for w, acc in zip(self.workers, accs):
            k_part = allocator.rotate_to_partition_order(w.k_t, t, cfg.n)
            if not self.static_partitions:
                stats = allocator.AdjustStats()
                w.topology, _ = allocator.adjust_topology(
                    w.topology, k_part, alpha=cfg.alpha, blk_move=cfg.blk_move,
                    min_blk=cfg.min_blk, stats=stats)
                if w.rank == 0:
                    self.diagnostics.adjust_moves += stats.moves
                    self.diagnostics.adjust_skips += stats.skipped
            st, end = allocator.allocate_partition(w.topology, t, w.rank)
            idx = select_indices(acc, st, end, w.delta)
            if self.limit is not None and len(idx) > self.limit:
                idx = cap_selection(acc, idx, self.limit)
                self.diagnostics.cap_fired += 1
                log.warning("t=%d rank=%d: density cap fired, selection truncated", t, w.rank)
            picks.append(idx)
        return picks

    def _gather(self, t: int, accs) -> GatherResult:
        cfg = self.config
        if self.sparsifier == "cltk":
            idx_sets = baselines.cltk_step(accs, t, cfg.k)
            leader = baselines.cltk_leader(t, cfg.n)
            counts = np.zeros(cfg.n, dtype=np.int64)
            counts[leader] = len(idx_sets[leader])
            if self.check_invariants:
                assert all(np.array_equal(s, idx_sets[0]) for s in idx_sets)
            self.diagnostics.idle_worker_iters += cfg.n - 1
            m_t, C_t, f_t = padding_stats(counts)
            return GatherResult(idx_sets[leader], PartialK(counts, Order.RANK), m_t, C_t, f_t, 0)
        if self.sparsifier == "exdyna":
            picks = self._select_exdyna(t, accs)
        elif self.sparsifier == "topk":
            picks = [baselines.topk_select(acc, cfg.k) for acc in accs]
        else:
            picks = [baselines.hard_threshold_select(acc, w.delta)
                     for w, acc in zip(self.workers, accs)]
        batches = [SparseBatch(idx) for idx in picks]
        if self.check_invariants:
            for b in batches:
                b.check(cfg.n_g)
        return all_gather(batches, exclusive=self.sparsifier == "exdyna")

    def step(self) -> LedgerRow:
        t = self.t
        cfg, n = self.config, self.config.n
        err = global_error([w.e for w in self.workers])
        delta_t = self.workers[0].delta

        accs = [accumulate(w.e, cfg.eta, self.source.gradient(w.x, t, w.rank))
                for w in self.workers]
        if self.sparsifier == "exdyna" and delta_t is None:
            d0 = broadcast(initial_threshold(accs[0], cfg.d), n, leader=0)
            for w, d in zip(self.workers, d0):
                w.delta = d
            delta_t = d0[0]

        gathered = self._gather(t, accs)
        idx = gathered.idx_global
        contributions = [acc[idx] for acc in accs]
        g = all_reduce_sum(contributions)
        k_prime = gathered.k_prime
        update = g / n

        for w, acc in zip(self.workers, accs):
            if self.sparsifier == "exdyna":
                w.k_t = gathered.k_rank.copy()
                w.delta = scale_threshold(cfg.k, k_prime, w.delta, cfg.beta, cfg.gamma)
            w.x[idx] -= update
            w.e = clear_selected(acc, idx, inplace=not self.check_invariants)

        if self.check_invariants:
            self._check(gathered, accs, contributions)

        loss = self.source.loss(self.workers[0].x) if self.source.loss_available else None
        self.t += 1
        return LedgerRow(
            t=t, k_prime=k_prime, density=k_prime / cfg.n_g,
            eps=density_error(cfg.k, k_prime, cfg.n_g),
            m_t=gathered.m_t, C_t=gathered.C_t, f_t=gathered.f_t,
            global_err=err, delta=None if delta_t is None else float(delta_t),
            loss=loss, union=len(idx), duplicates=gathered.duplicates)

    def _check(self, gathered: GatherResult, accs, contributions) -> None:
        cfg = self.config
        self.diagnostics.invariant_checks += 1
        counts = gathered.k_rank.counts
        assert gathered.m_t == counts.max()
        assert gathered.C_t == cfg.n * int((gathered.m_t - counts).sum())
        if gathered.k_prime:
            assert gathered.f_t == cfg.n * gathered.m_t / gathered.k_prime
            assert gathered.f_t >= 1.0
        idx = gathered.idx_global
        for w, acc, c in zip(self.workers, accs, contributions):
            # error-feedback conservation: residual + contribution == accumulated
            rebuilt = w.e.copy()
            rebuilt[idx] += c
            if not np.array_equal(rebuilt, acc) or np.any(w.e[idx]):
                raise AssertionError(f"error-feedback mass not conserved on rank {w.rank}")
        ref = self.workers[0]
        for w in self.workers[1:]:
            same = (np.array_equal(w.x, ref.x) and w.delta == ref.delta
                    and np.array_equal(w.k_t.counts, ref.k_t.counts))
            if ref.topology is not None:
                same = same and w.topology.same_as(ref.topology)
            if not same:
                raise ReplicationError(f"rank {w.rank} diverged from rank 0 at t={self.t}")
        if ref.topology is not None:
            ref.topology.check(cfg.n_b, cfg.min_blk)
            ranges = sorted(allocator.allocate_partition(ref.topology, self.t + 1, r)
                            for r in range(cfg.n))
            assert ranges[0][0] == 0 and ranges[-1][1] == cfg.n_g
            assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))

    # -- driving -----------------------------------------------------------

    def iterate(self, iters: int) -> Iterator[LedgerRow]:
        for _ in range(iters):
            yield self.step()

    def run(self, iters: int, on_row: Optional[Callable[[LedgerRow], None]] = None) -> list[LedgerRow]:
        rows = []
        for row in self.iterate(iters):
            rows.append(row)
            if on_row is not None:
                on_row(row)
        return rows


def dense_sgd(source, n: int, eta: float, iters: int):
    """Plain synchronous SGD reference: average ``eta * grad`` over ranks.

    Returns the final model and the per-iteration losses (evaluated after
    each update, as the simulator does).
    """
    x = source.x0()
    losses = []
    for t in range(iters):
        total = None
        for r in range(n):
            v = eta * source.gradient(x, t, r)
            total = v if total is None else total + v
        x = x - total / n
        losses.append(source.loss(x) if source.loss_available else None)
    return x, losses


def run_lockstep(sims: Sequence[Simulator], iters: int) -> list[list[LedgerRow]]:
    """Advance several simulators one iteration at a time, in list order.

    Simulators sharing a cached synthetic source then draw each gradient
    once. Each one's rows are the same as if it had been run alone.
    """
    rows: list[list[LedgerRow]] = [[] for _ in sims]
    for _ in range(iters):
        for sim, out in zip(sims, rows):
            out.append(sim.step())
    return rows
