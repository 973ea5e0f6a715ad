"""Digitally shifted Sobol' sequences and the tail-coverage study.

Points are generated on a 32-bit integer lattice in Gray-code order and
are index-addressable: point i is the XOR of the direction words at the
set bits of gray(i) = i ^ (i >> 1).  Randomization is a digital shift, a
per-dimension 32-bit word XOR-ed onto every lattice point before scaling
by 2^-32.  Direction numbers come from the Joe-Kuo table shipped as a
data asset (see data/joe_kuo_d6.txt; rows "d s a m_1..m_s", dimensions
2..200; dimension 1 is the van der Corput sequence).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.special import ndtri

from .copulas import pseudo_obs
from .nn import MlpModel, forward
from .rng import shift_words

N_BITS = 32
_SCALE = 2.0**-32
_table_cache: dict[int, tuple[int, int, list[int]]] | None = None


def _load_table() -> dict[int, tuple[int, int, list[int]]]:
    global _table_cache
    if _table_cache is None:
        text = resources.files("mmdgen.data").joinpath("joe_kuo_d6.txt").read_text()
        table = {}
        for line in text.splitlines()[1:]:  # header row
            parts = line.split()
            if not parts:
                continue
            dim, s, a = int(parts[0]), int(parts[1]), int(parts[2])
            table[dim] = (s, a, [int(x) for x in parts[3 : 3 + s]])
        _table_cache = table
    return _table_cache


def max_dimension() -> int:
    return max(_load_table())


def direction_matrix(dim: int) -> np.ndarray:
    """Direction words V [N_BITS x dim], one column per coordinate.

    Column 0 is the van der Corput pattern V[k] = 2^(31-k); higher
    coordinates seed V from the tabulated m-values and extend them by the
    primitive-polynomial recurrence
        V[k] = V[k-s] ^ (V[k-s] >> s) ^ XOR_{i=1..s-1} a_i V[k-i],
    where a_i is bit (s-1-i) of the encoded coefficient value.
    """
    table = _load_table()
    if dim < 1 or dim > max(table):
        raise ValueError(f"dimension must be in 1..{max(table)}")
    V = np.zeros((N_BITS, dim), dtype=np.uint32)
    V[:, 0] = np.uint32(1) << np.arange(N_BITS - 1, -1, -1, dtype=np.uint32)
    for col in range(1, dim):
        s, a, m = table[col + 1]
        v = np.zeros(N_BITS, dtype=np.uint64)
        for k in range(min(s, N_BITS)):
            v[k] = np.uint64(m[k]) << np.uint64(N_BITS - 1 - k)
        for k in range(s, N_BITS):
            acc = v[k - s] ^ (v[k - s] >> np.uint64(s))
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    acc ^= v[k - i]
            v[k] = acc
        V[:, col] = v.astype(np.uint32)
    return V


def raw_lattice(dim: int, count: int, start: int = 0) -> np.ndarray:
    """Unshifted integer lattice points for indices start..start+count-1."""
    if count < 1 or start < 0:
        raise ValueError("need count >= 1 and start >= 0")
    V = direction_matrix(dim)
    idx = np.arange(start, start + count, dtype=np.uint64)
    gray = idx ^ (idx >> np.uint64(1))
    X = np.zeros((count, dim), dtype=np.uint32)
    for b in range(N_BITS):
        mask = (gray >> np.uint64(b)) & np.uint64(1)
        rows = np.nonzero(mask)[0]
        if rows.size:
            X[rows] ^= V[b]
    return X


@dataclass(frozen=True)
class SobolStream:
    """A dimension plus a digital-shift mask; zero mask = plain sequence."""

    dim: int
    shift: np.ndarray  # uint32 [dim]

    def __post_init__(self):
        shift = np.ascontiguousarray(self.shift, dtype=np.uint32)
        if shift.shape != (self.dim,):
            raise ValueError("shift must hold one 32-bit word per dimension")
        object.__setattr__(self, "shift", shift)

    @classmethod
    def unshifted(cls, dim: int) -> "SobolStream":
        return cls(dim, np.zeros(dim, dtype=np.uint32))

    @classmethod
    def randomized(cls, dim: int, rng) -> "SobolStream":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return cls(dim, shift_words(rng, dim))

    def block(self, start: int, count: int) -> np.ndarray:
        """Shifted points for indices start..start+count-1, in [0, 1)."""
        pts = raw_lattice(self.dim, count, start=start)
        pts ^= self.shift
        return pts.astype(np.float64) * _SCALE


def sobol_points(stream: SobolStream, n: int) -> np.ndarray:
    """First n usable points of the stream; index 0 (the origin of the
    unshifted sequence) is always skipped."""
    return stream.block(1, n)


def qrs_from_model(model: MlpModel, stream: SobolStream, n_gen: int) -> np.ndarray:
    """Quasi-random pseudo-observations from a trained generator.

    Sobol' points become standard-normal prior values through the normal
    quantile function, pass through the network, and are rank-transformed.
    Coordinates that are exactly 0 after the shift are nudged to 2^-53 so
    the quantile stays finite.
    """
    if stream.dim != model.arch.input_dim:
        raise ValueError("stream dimension must equal the model input dimension")
    P = np.maximum(sobol_points(stream, n_gen), 2.0**-53)
    Y, _ = forward(model, ndtri(P))
    return pseudo_obs(Y)


@dataclass(frozen=True)
class TailCountResult:
    """Replicate counts of shifted points in the upper-corner hypercube."""

    dim: int
    n_gen: int
    n_tail: int
    threshold: float
    counts: np.ndarray  # int [B]


def tail_count_study(dims, n_tail: int = 1000, B: int = 500, rng=None) -> list[TailCountResult]:
    """Count points above the corner threshold across B fresh shifts.

    For each dimension d the lattice holds n_gen = 5 * 2^d points and the
    cube (1 - (n_tail/n_gen)^(1/d), 1]^d has expected count n_tail under
    uniformity; the spread of the replicate counts measures how unevenly
    the shifted sequence covers the far corner as d grows.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    results = []
    for d in dims:
        n_gen = 5 * 2**d
        if n_gen <= n_tail:
            raise ValueError(f"d={d} gives n_gen={n_gen} <= n_tail={n_tail}")
        threshold = 1.0 - (n_tail / n_gen) ** (1.0 / d)
        # Integer-domain comparison: u > thr  <=>  word > floor(thr * 2^32).
        bound = np.uint32(int(threshold * 2.0**N_BITS))
        base = raw_lattice(d, n_gen, start=1)
        counts = np.empty(B, dtype=np.int64)
        for b in range(B):
            shifted = base ^ shift_words(rng, d)
            counts[b] = int((shifted > bound).all(axis=1).sum())
        results.append(TailCountResult(d, n_gen, n_tail, threshold, counts))
    return results
