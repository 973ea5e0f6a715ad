"""Risk functionals, the MC/RQMC estimator harness, and fit statistics.

Three functionals operate on copula-scale samples pushed through marginal
quantile functions: tail expected shortfall of the component sum, the
per-component contribution to that shortfall, and a discounted basket
call price under log-normal margins.  The harness evaluates a functional
over a grid of sample sizes with B independent replications per size and
records per-size means and sample standard deviations, from which a
log-log convergence rate is fitted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import t as student_t

from .bandwidth import type1_quantile
from .copulas import CopulaSpec, pseudo_obs, rosenblatt_inverse, sample
from .nn import MlpModel, forward
from .rng import substream
from .sobol import SobolStream, qrs_from_model, sobol_points

GENERATORS = ("copula-prs", "copula-qrs", "model-prs", "model-qrs")
FUNCTIONALS = ("es", "alloc", "basket")

_UNIT_LO = 2.0**-53
_UNIT_HI = 1.0 - 2.0**-53


class DegenerateSampleError(ValueError):
    """The sample admits no exceedances over its upper quantile."""


def _clip_unit(U: np.ndarray) -> np.ndarray:
    return np.clip(np.asarray(U, dtype=np.float64), _UNIT_LO, _UNIT_HI)


@dataclass(frozen=True)
class NormalMargins:
    """Standard-normal quantile applied to every component."""

    dim: int

    def quantile(self, U: np.ndarray) -> np.ndarray:
        U = _clip_unit(U)
        if U.shape[1] != self.dim:
            raise ValueError("column count does not match margins")
        return ndtri(U)


@dataclass(frozen=True)
class LognormalMargins:
    """Terminal asset prices with log-normal margins.

    Component j maps u to exp(log s0_j + (rate - sigma_j^2/2) horizon
    + sigma_j sqrt(horizon) ndtri(u)).
    """

    s0: tuple[float, ...]
    sigma: tuple[float, ...]
    rate: float = 0.01
    horizon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "s0", tuple(float(x) for x in np.atleast_1d(self.s0)))
        object.__setattr__(self, "sigma", tuple(float(x) for x in np.atleast_1d(self.sigma)))
        if len(self.s0) != len(self.sigma):
            raise ValueError("s0 and sigma must have equal lengths")
        if any(x <= 0 for x in self.s0) or any(x < 0 for x in self.sigma):
            raise ValueError("prices must be positive and volatilities non-negative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def dim(self) -> int:
        return len(self.s0)

    def quantile(self, U: np.ndarray) -> np.ndarray:
        U = _clip_unit(U)
        if U.shape[1] != self.dim:
            raise ValueError("column count does not match margins")
        s0 = np.asarray(self.s0)
        sig = np.asarray(self.sigma)
        drift = np.log(s0) + (self.rate - 0.5 * sig**2) * self.horizon
        return np.exp(drift + sig * math.sqrt(self.horizon) * ndtri(U))


@dataclass(frozen=True)
class ScaledTMargins:
    """Location-scale Student's t quantiles, one (df, loc, scale) per component."""

    df: tuple[float, ...]
    loc: tuple[float, ...]
    scale: tuple[float, ...]

    def __post_init__(self):
        for name in ("df", "loc", "scale"):
            object.__setattr__(
                self, name, tuple(float(x) for x in np.atleast_1d(getattr(self, name)))
            )
        if not len(self.df) == len(self.loc) == len(self.scale):
            raise ValueError("df, loc, scale must have equal lengths")
        if any(v <= 0 for v in self.df) or any(s <= 0 for s in self.scale):
            raise ValueError("df and scale must be positive")

    @property
    def dim(self) -> int:
        return len(self.df)

    def quantile(self, U: np.ndarray) -> np.ndarray:
        U = _clip_unit(U)
        if U.shape[1] != self.dim:
            raise ValueError("column count does not match margins")
        return np.asarray(self.loc) + np.asarray(self.scale) * student_t.ppf(
            U, np.asarray(self.df)
        )


def equidistant_sigmas(d: int, lo: float = 0.01, hi: float = 0.025) -> np.ndarray:
    """Equidistant volatility ladder over [lo, hi]."""
    return np.linspace(lo, hi, d)


def _sum_and_threshold(U, margins, alpha):
    X = margins.quantile(U)
    S = X.sum(axis=1)
    thr = float(type1_quantile(np.sort(S), alpha)[0])
    exceed = S > thr
    if not exceed.any():
        raise DegenerateSampleError("no exceedances above the empirical quantile")
    return X, S, exceed


def expected_shortfall(U, margins, alpha: float = 0.99) -> float:
    """Mean of the component sum over rows strictly above its empirical
    alpha-quantile (lower/inf quantile convention)."""
    _, S, exceed = _sum_and_threshold(U, margins, alpha)
    return float(S[exceed].mean())


def shortfall_contribution(U, margins, alpha: float = 0.99, component: int = 0) -> float:
    """Mean of one component over the shortfall rows of the component sum."""
    X, _, exceed = _sum_and_threshold(U, margins, alpha)
    if not 0 <= component < X.shape[1]:
        raise ValueError(f"component must lie in 0..{X.shape[1] - 1}")
    return float(X[exceed, component].mean())


def basket_call_price(U, margins: LognormalMargins, strike: float) -> float:
    """Discounted mean payoff max(mean_j S_T_j - strike, 0) of a basket call."""
    if strike is None or strike <= 0:
        raise ValueError("a positive strike is required")
    S_T = margins.quantile(U)
    payoff = np.maximum(S_T.mean(axis=1) - strike, 0.0)
    return float(math.exp(-margins.rate * margins.horizon) * payoff.mean())


@dataclass
class EstimatorRun:
    """Replicated estimates over a sample-size grid."""

    functional: str
    generator: str
    grid: tuple[int, ...]
    estimates: np.ndarray  # [len(grid) x B]

    @property
    def B(self) -> int:
        return self.estimates.shape[1]

    @property
    def means(self) -> np.ndarray:
        return self.estimates.mean(axis=1)

    @property
    def stds(self) -> np.ndarray:
        return self.estimates.std(axis=1, ddof=1)


def _generate(generator: str, spec, model, n: int, seed: int, gi: int, b: int) -> np.ndarray:
    if generator == "copula-prs":
        return sample(spec, n, substream(seed, "prs", gi, b))
    if generator == "copula-qrs":
        stream = SobolStream.randomized(spec.dim, substream(seed, "qrs-shift", gi, b))
        return rosenblatt_inverse(spec, sobol_points(stream, n))
    if generator == "model-prs":
        rng = substream(seed, "prs", gi, b)
        Y, _ = forward(model, rng.standard_normal((n, model.arch.input_dim)))
        return pseudo_obs(Y)
    if generator == "model-qrs":
        stream = SobolStream.randomized(
            model.arch.input_dim, substream(seed, "qrs-shift", gi, b)
        )
        return qrs_from_model(model, stream, n)
    raise ValueError(f"unknown generator {generator!r}; expected one of {GENERATORS}")


def _evaluate(functional: str, U, margins, alpha, component, strike) -> float:
    if functional == "es":
        return expected_shortfall(U, margins, alpha=alpha)
    if functional == "alloc":
        return shortfall_contribution(U, margins, alpha=alpha, component=component)
    if functional == "basket":
        return basket_call_price(U, margins, strike=strike)
    raise ValueError(f"unknown functional {functional!r}; expected one of {FUNCTIONALS}")


def estimate_once(
    functional: str,
    generator: str,
    n: int,
    seed: int,
    *,
    spec: CopulaSpec | None = None,
    model: MlpModel | None = None,
    margins,
    alpha: float = 0.99,
    component: int = 0,
    strike: float | None = None,
    grid_index: int = 0,
    replicate: int = 0,
) -> float:
    """One replicate estimate; the (grid_index, replicate) pair keys the substreams."""
    _check_pairing(generator, spec, model)
    U = _generate(generator, spec, model, n, seed, grid_index, replicate)
    return _evaluate(functional, U, margins, alpha, component, strike)


def _check_pairing(generator, spec, model):
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}; expected one of {GENERATORS}")
    if generator.startswith("copula"):
        if spec is None:
            raise ValueError("copula generators need a CopulaSpec")
        if generator == "copula-qrs" and spec.family not in ("clayton", "gaussian"):
            raise ValueError(
                f"quasi-random sampling is not available for family {spec.family!r}"
            )
    elif model is None:
        raise ValueError("model generators need a trained model")


def _replicate_job(payload) -> float:
    # Module-level so parallel maps can pickle it.
    functional, generator, n, seed, spec, model, margins, alpha, component, strike, gi, b = payload
    U = _generate(generator, spec, model, n, seed, gi, b)
    return _evaluate(functional, U, margins, alpha, component, strike)


def run_estimator(
    functional: str,
    generator: str,
    grid,
    B: int,
    seed: int,
    *,
    spec: CopulaSpec | None = None,
    model: MlpModel | None = None,
    margins,
    alpha: float = 0.99,
    component: int = 0,
    strike: float | None = None,
    map_fn=map,
) -> EstimatorRun:
    """Replicated estimates for every grid size; B >= 2 so the sample
    standard deviation exists.  map_fn may be a parallel map (jobs are
    picklable); every job is keyed by its (grid_index, replicate)
    substream and results are reduced in index order, so values do not
    depend on scheduling.
    """
    grid = tuple(int(n) for n in grid)
    if B < 2:
        raise ValueError("need B >= 2 replications for a standard deviation")
    if any(n < 1 for n in grid):
        raise ValueError("grid sizes must be positive")
    _check_pairing(generator, spec, model)

    payloads = [
        (functional, generator, n, seed, spec, model, margins, alpha, component, strike, gi, b)
        for gi, n in enumerate(grid)
        for b in range(B)
    ]
    values = list(map_fn(_replicate_job, payloads))
    estimates = np.asarray(values, dtype=np.float64).reshape(len(grid), B)
    return EstimatorRun(functional, generator, grid, estimates)


def convergence_rate(run: EstimatorRun) -> float:
    """OLS slope of log2(std) on log2(n); zero stds are dropped with a warning."""
    s = run.stds
    n = np.asarray(run.grid, dtype=np.float64)
    keep = s > 0
    if not keep.all():
        warnings.warn("grid points with zero standard deviation excluded from the fit")
    if keep.sum() < 3:
        raise ValueError("need at least 3 grid points with positive standard deviation")
    slope = np.polyfit(np.log2(n[keep]), np.log2(s[keep]), 1)[0]
    return float(slope)


def raw_linear_fit(run: EstimatorRun) -> tuple[float, float]:
    """Least-squares (slope, intercept) of std on n, on the raw scale."""
    slope, intercept = np.polyfit(np.asarray(run.grid, dtype=np.float64), run.stds, 1)
    return float(slope), float(intercept)


def rel_bias(est: float, mc_ref: float) -> float:
    """Absolute relative deviation |est - ref| / |ref|."""
    if mc_ref == 0:
        raise ValueError("reference value must be nonzero")
    return abs(est - mc_ref) / abs(mc_ref)


def vrf(s2_other: float, s2_ours: float) -> float:
    """Variance-reduction factor: competitor variance over ours."""
    if s2_other <= 0 or s2_ours <= 0:
        raise ValueError("variances must be positive")
    return s2_other / s2_ours


def empirical_copula_cvm(U, V, block: int = 1024) -> float:
    """Normalized squared L2 distance between two empirical copulas.

    Computes (1/sqrt(1/n + 1/m)) * integral (C_U - C_V)^2 du with the
    integral in closed form via sums of prod_k (1 - max(a_k, b_k)) over
    sample pairs.  Identical samples give exactly 0.
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ValueError("samples must be 2-d with equal column counts")
    if U.shape[0] < 1 or V.shape[0] < 1:
        raise ValueError("samples must be non-empty")
    n, m = U.shape[0], V.shape[0]
    s_uu = _corner_prod_sum(U, U, block)
    s_vv = _corner_prod_sum(V, V, block)
    s_uv = _corner_prod_sum(U, V, block)
    integral = s_uu / (n * n) + s_vv / (m * m) - 2.0 * (s_uv / (n * m))
    return max(integral, 0.0) / math.sqrt(1.0 / n + 1.0 / m)


def _corner_prod_sum(A: np.ndarray, B: np.ndarray, block: int) -> float:
    total = 0.0
    for i0 in range(0, A.shape[0], block):
        a = A[i0 : i0 + block]
        for j0 in range(0, B.shape[0], block):
            b = B[j0 : j0 + block]
            prod = np.prod(1.0 - np.maximum(a[:, None, :], b[None, :, :]), axis=2)
            total += float(prod.sum())
    return total


def acvm(U_dat, sample_fn, n_gen: int, n_rep: int = 25) -> float:
    """Mean empirical-copula distance between data and n_rep generated samples.

    sample_fn(k) must return the k-th generated sample [n_gen x d] on the
    copula scale; the average is invariant under relabeling of replicates.
    """
    U_dat = np.asarray(U_dat, dtype=np.float64)
    if n_rep < 1:
        raise ValueError("need at least one replication")
    vals = []
    for k in range(n_rep):
        V = np.asarray(sample_fn(k), dtype=np.float64)
        if V.shape != (n_gen, U_dat.shape[1]):
            raise ValueError("generated sample has wrong shape")
        vals.append(empirical_copula_cvm(U_dat, V))
    return float(np.mean(vals))
