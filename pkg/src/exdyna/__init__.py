"""Exclusive, dynamically partitioned gradient sparsification in a
deterministic distributed-SGD simulator."""

from .core import (ConfigError, LedgerRow, PartialK, PartitionTopology, SparseBatch,
                   SparsifierConfig, WorkerState, validate)
from .engine import ReplicationError, Simulator, dense_sgd, density_error, global_error, scaled_error_series

__all__ = [
    "ConfigError", "LedgerRow", "PartialK", "PartitionTopology", "SparseBatch",
    "SparsifierConfig", "WorkerState", "validate", "ReplicationError", "Simulator",
    "dense_sgd", "density_error", "global_error", "scaled_error_series",
]
__version__ = "0.1.0"
