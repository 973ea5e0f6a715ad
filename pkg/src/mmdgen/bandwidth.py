"""Bandwidth selection rules consulted by the adaptive training loop.

Bandwidths are empirical quantiles of the pairwise Euclidean distances of
the training sample, taken at probabilities that thin geometrically from
0.95 toward the left tail.  The module also houses the kernel-count
schedule, the epoch-indexed patience rule, and learning-rate decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .mmd import KernelBank

# Fixed six-kernel reference bank used by the non-adaptive baseline mode.
BASELINE_BANDWIDTHS = (0.001, 0.01, 0.15, 0.25, 0.50, 0.75)


class DegenerateDataError(ValueError):
    """Pairwise distances cannot produce a positive bandwidth."""


def prob_vector(n_krn: int, scale: float = 0.95, rate: float = 9.0) -> np.ndarray:
    """Quantile probabilities p_k = scale * 2^(-rate (k-1) / n_krn), k = 1..n_krn."""
    if n_krn < 1:
        raise ValueError("kernel count must be >= 1")
    k = np.arange(1, n_krn + 1, dtype=np.float64)
    return scale * 2.0 ** (-rate * (k - 1.0) / n_krn)


def type1_quantile(sorted_values: np.ndarray, probs) -> np.ndarray:
    """Lower (inf-convention) empirical quantile of pre-sorted values."""
    probs = np.atleast_1d(np.asarray(probs, dtype=np.float64))
    if np.any(probs <= 0) or np.any(probs > 1):
        raise ValueError("quantile probabilities must lie in (0, 1]")
    idx = np.ceil(probs * sorted_values.size).astype(np.int64) - 1
    return sorted_values[np.clip(idx, 0, sorted_values.size - 1)]


def pairwise_distance_quantiles(X, probs, cap: int = 2000, rng=None) -> np.ndarray:
    """Empirical quantiles of pairwise distances of the rows of X.

    With more than cap rows, a seeded uniform subsample of cap rows is
    used (all-pairs enumeration grows quadratically).  Output order
    follows probs; probabilities sorted ascending give ascending output.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-d sample with at least two rows")
    if X.shape[0] > cap:
        if rng is None:
            raise ValueError("subsampling above the row cap requires rng")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        X = X[rng.choice(X.shape[0], size=cap, replace=False)]
    dists = pdist(X)
    dists.sort()
    if dists[-1] == 0.0:
        raise DegenerateDataError("all rows identical; bandwidth 0 is invalid")
    h = type1_quantile(dists, probs)
    if np.any(h <= 0.0):
        raise DegenerateDataError(
            "a quantile hit distance 0 (duplicate rows); bandwidth 0 is invalid"
        )
    return h


@dataclass(frozen=True)
class BandwidthPolicy:
    """Kernel-count schedule and quantile parameters for adaptive updates."""

    kernel_counts: tuple[int, ...] = (6, 12, 24, 48, 96, 192, 384)
    prob_scale: float = 0.95
    prob_rate: float = 9.0
    pair_cap: int = 2000

    def __post_init__(self):
        counts = tuple(int(c) for c in self.kernel_counts)
        if not counts or any(c < 1 for c in counts):
            raise ValueError("kernel counts must be positive")
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("kernel counts must be strictly increasing")
        if not 0.0 < self.prob_scale <= 1.0:
            raise ValueError("prob_scale must lie in (0, 1]")
        object.__setattr__(self, "kernel_counts", counts)

    def probs(self, n_krn: int) -> np.ndarray:
        return prob_vector(n_krn, scale=self.prob_scale, rate=self.prob_rate)

    def bank_for(self, X, n_krn: int, rng=None) -> KernelBank:
        h = pairwise_distance_quantiles(X, self.probs(n_krn), cap=self.pair_cap, rng=rng)
        return KernelBank(tuple(h))


@dataclass(frozen=True)
class PatienceSchedule:
    """Piecewise epoch-indexed patience: flat, linear ramp, capped."""

    floor: int = 20
    cap: int = 50
    slope: float = 3.0 / 8.0
    offset: int = 20

    def __call__(self, t: int) -> int:
        if t < 1:
            raise ValueError("epoch index must be >= 1")
        if t <= self.offset:
            return self.floor
        return int(math.floor(min(self.cap, self.floor + self.slope * (t - self.offset))))


def patience(t: int) -> int:
    """Default schedule: 20 up to epoch 20, then floor(20 + 3/8 (t-20)), capped at 50."""
    return PatienceSchedule()(t)


def learning_rate(n_up: int, base: float = 0.001) -> float:
    """Initial rate decayed by a factor of five per bandwidth update."""
    if n_up < 0:
        raise ValueError("update counter must be non-negative")
    return base * 5.0 ** (-n_up)
