"""Deterministic gradient sources.

Synthetic streams draw heavy-tailed values from a counter-based generator
keyed by ``(seed, t, rank, segment)``, so any worker can produce any
iteration's gradient in any order and get the same bits. The analytic tasks
give exact minibatch gradients of a small optimisation problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


def keyed_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def even_segments(n_g: int, scales) -> tuple[tuple[int, float], ...]:
    """Split ``n_g`` into ``len(scales)`` near-equal contiguous segments."""
    scales = list(scales)
    edges = np.linspace(0, n_g, len(scales) + 1).astype(np.int64)
    return tuple((int(b - a), float(s)) for a, b, s in zip(edges[:-1], edges[1:], scales))


def layered_segments(n_g: int, skew: float = 4.0, count: int = 16, seed: int = 0):
    """``count`` equal segments standing in for layers.

    Scales are spread geometrically between 1 and ``skew`` and then shuffled
    with a seeded permutation, so neighbouring layers need not be similar.
    """
    if count <= 1:
        return even_segments(n_g, [1.0])
    scales = keyed_rng(seed, 2**31 - 1).permutation(np.geomspace(skew, 1.0, count))
    return even_segments(n_g, scales)


@dataclass(frozen=True)
class StreamSpec:
    n_g: int
    segments: tuple = ()
    distribution: str = "laplace"
    sigma: float = 1.0
    decay: float = 1.0
    decay_step: Optional[int] = None
    step_factor: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not self.segments:
            object.__setattr__(self, "segments", ((self.n_g, 1.0),))
        segs = tuple((int(a), float(b)) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if sum(length for length, _ in segs) != self.n_g:
            raise ValueError("segment lengths must sum to n_g")
        if any(s <= 0 for _, s in segs):
            raise ValueError("segment scales must be positive")
        if self.distribution not in ("laplace", "lognormal"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")

    def scale_factor(self, t: int) -> float:
        f = self.decay ** t
        if self.decay_step is not None and t >= self.decay_step:
            f *= self.step_factor
        return f


_SIGN_VIEW = {np.dtype(np.float32): (np.uint32, 31), np.dtype(np.float64): (np.uint64, 63)}


def _random_sign(rng: np.random.Generator, out: np.ndarray) -> None:
    """Flip the sign bit of each element with probability 1/2, in place."""
    n = len(out)
    bits = np.unpackbits(np.frombuffer(rng.bytes((n + 7) // 8), dtype=np.uint8), count=n)
    utype, shift = _SIGN_VIEW[out.dtype]
    u = out.view(utype)
    u ^= bits.astype(utype) << utype(shift)


def synthetic_gradient(spec: StreamSpec, t: int, rank: int) -> np.ndarray:
    dtype = np.dtype(spec.dtype)
    out = np.empty(spec.n_g, dtype=dtype)
    f = spec.scale_factor(t)
    pos = 0
    for s, (length, scale) in enumerate(spec.segments):
        rng = keyed_rng(spec.seed, t, rank, s)
        seg = out[pos:pos + length]
        if spec.distribution == "laplace":
            rng.standard_exponential(dtype=dtype, out=seg)
        else:
            rng.standard_normal(dtype=dtype, out=seg)
            seg *= spec.sigma
            np.exp(seg, out=seg)
        _random_sign(rng, seg)
        seg *= dtype.type(scale * f)
        pos += length
    return out


class SyntheticSource:
    """Gradient source backed by a :class:`StreamSpec`; ignores the model.

    The latest iteration's vectors are cached so several simulators stepped
    in lockstep over one stream generate each vector once. Callers must not
    modify the returned arrays.
    """

    loss_available = False

    def __init__(self, spec: StreamSpec):
        self.spec = spec
        self.n_g = spec.n_g
        self.dtype = np.dtype(spec.dtype)
        self._cache_t = None
        self._cache: dict[int, np.ndarray] = {}

    def x0(self) -> np.ndarray:
        return np.zeros(self.n_g, dtype=self.dtype)

    def gradient(self, x, t: int, rank: int) -> np.ndarray:
        if t != self._cache_t:
            self._cache_t, self._cache = t, {}
        g = self._cache.get(rank)
        if g is None:
            g = self._cache[rank] = synthetic_gradient(self.spec, t, rank)
            g.flags.writeable = False
        return g

    def loss(self, x):
        return None


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    dimension: int
    n_samples: int = 1000
    batch_size: int = 32
    skew: float = 1.0
    cond: float = 1.0
    l2: float = 1e-4
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("quadratic", "logistic"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")


class QuadraticTask:
    """f(x) = 1/2 * sum_j h_j (x_j - x*_j)^2 with curvatures spread over ``cond``.

    ``noise`` adds keyed Gaussian noise per (t, rank); with the default of
    zero every worker sees the exact full gradient.
    """

    loss_available = True
    dtype = np.dtype(np.float64)

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.n_g = spec.dimension
        rng = keyed_rng(spec.seed, 0)
        self.x_star = rng.standard_normal(self.n_g)
        self.h = np.geomspace(1.0, 1.0 / spec.cond, self.n_g) if spec.cond != 1 else np.ones(self.n_g)

    def x0(self) -> np.ndarray:
        return np.zeros(self.n_g)

    def gradient(self, x, t: int, rank: int) -> np.ndarray:
        g = self.h * (x - self.x_star)
        if self.spec.noise:
            g += self.spec.noise * keyed_rng(self.spec.seed, 1, t, rank).standard_normal(self.n_g)
        return g

    def loss(self, x) -> float:
        r = x - self.x_star
        return float(0.5 * np.dot(self.h * r, r))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


class LogisticTask:
    """L2-regularised logistic regression on a planted synthetic dataset.

    Feature columns are scaled geometrically from ``skew`` down to 1 so that
    gradient magnitude varies along the vector.
    """

    loss_available = True
    dtype = np.dtype(np.float64)

    def __init__(self, spec: TaskSpec):
        self.spec = spec
        self.n_g = spec.dimension
        rng = keyed_rng(spec.seed, 0)
        col_scale = np.geomspace(spec.skew, 1.0, self.n_g) if spec.skew != 1 else np.ones(self.n_g)
        self.A = rng.standard_normal((spec.n_samples, self.n_g)) * (col_scale / np.sqrt(self.n_g))
        w_star = rng.standard_normal(self.n_g) * 3.0
        p = _sigmoid(self.A @ w_star)
        self.y = (rng.random(spec.n_samples) < p).astype(np.float64)

    def x0(self) -> np.ndarray:
        return np.zeros(self.n_g)

    def minibatch(self, t: int, rank: int) -> np.ndarray:
        return keyed_rng(self.spec.seed, 1, t, rank).integers(
            0, self.spec.n_samples, self.spec.batch_size)

    def batch_gradient(self, x, batch) -> np.ndarray:
        A = self.A[batch]
        r = _sigmoid(A @ x) - self.y[batch]
        return A.T @ r / len(batch) + self.spec.l2 * x

    def gradient(self, x, t: int, rank: int) -> np.ndarray:
        return self.batch_gradient(x, self.minibatch(t, rank))

    def batch_loss(self, x, batch) -> float:
        z = self.A[batch] @ x
        return float(np.mean(_log1pexp(z) - self.y[batch] * z) + 0.5 * self.spec.l2 * np.dot(x, x))

    def loss(self, x) -> float:
        return self.batch_loss(x, slice(None))


def make_task(spec: TaskSpec):
    return QuadraticTask(spec) if spec.kind == "quadratic" else LogisticTask(spec)


def task_gradient(task, x, minibatch_selector, t: int, rank: int) -> np.ndarray:
    """Exact minibatch gradient; ``minibatch_selector(t, rank)`` picks rows.

    Quadratic tasks have no data and ignore the selector.
    """
    if isinstance(task, LogisticTask):
        return task.batch_gradient(x, minibatch_selector(t, rank))
    return task.gradient(x, t, rank)
