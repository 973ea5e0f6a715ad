"""Copula samplers, rank transforms, and sequential inverse transforms.

Supported families: Clayton and Gumbel (Archimedean, sampled by frailty
mixtures), and exchangeable Gaussian and Student's t (elliptical).  Each
family is parameterized by a pairwise Kendall's tau in (0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import t as student_t

FAMILIES = ("clayton", "gumbel", "gaussian", "t")

# Uniform inputs to quantile-like transforms are clamped into this open
# interval so inverse CDFs stay finite.
_UNIT_LO = 2.0**-53
_UNIT_HI = 1.0 - 2.0**-53


class UnsupportedFamilyError(ValueError):
    """Requested operation is not available for this copula family."""


def tau_to_clayton_theta(tau: float) -> float:
    _check_tau(tau)
    return 2.0 * tau / (1.0 - tau)


def tau_to_gumbel_theta(tau: float) -> float:
    _check_tau(tau)
    return 1.0 / (1.0 - tau)


def tau_to_elliptical_rho(tau: float) -> float:
    _check_tau(tau)
    return math.sin(math.pi * tau / 2.0)


def _check_tau(tau: float):
    if not 0.0 < tau < 1.0:
        raise ValueError("Kendall's tau must lie in (0, 1)")


@dataclass(frozen=True)
class CopulaSpec:
    """Family, dimension, and dependence strength of a sampling target.

    Dependence is given either as a pairwise Kendall's tau in (0, 1) or as
    the family's native parameter (theta for Archimedean families, rho for
    the exchangeable elliptical ones), which admits values such as rho = 0
    that no tau in (0, 1) reaches.
    """

    family: str
    dim: int
    tau: float | None = None
    theta_: float | None = None
    rho_: float | None = None
    df: int = 4  # degrees of freedom, t family only

    def __post_init__(self):
        object.__setattr__(self, "family", str(self.family).lower())
        if self.family not in FAMILIES:
            raise UnsupportedFamilyError(
                f"unknown family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")
        given = [p is not None for p in (self.tau, self.theta_, self.rho_)]
        if sum(given) != 1:
            raise ValueError("give exactly one of tau, theta_, rho_")
        if self.tau is not None:
            _check_tau(self.tau)
        if self.theta_ is not None and self.family not in ("clayton", "gumbel"):
            raise ValueError("theta_ applies to Archimedean families only")
        if self.rho_ is not None and self.family not in ("gaussian", "t"):
            raise ValueError("rho_ applies to elliptical families only")
        if self.family == "t" and self.df < 1:
            raise ValueError("degrees of freedom must be >= 1")
        # Validate the resolved parameter domain eagerly.
        if self.family in ("clayton", "gumbel"):
            self.theta
        else:
            self.rho

    @property
    def theta(self) -> float:
        if self.family == "clayton":
            th = self.theta_ if self.theta_ is not None else tau_to_clayton_theta(self.tau)
            if th <= 0:
                raise ValueError("Clayton theta must be positive")
            return th
        if self.family == "gumbel":
            th = self.theta_ if self.theta_ is not None else tau_to_gumbel_theta(self.tau)
            if th < 1:
                raise ValueError("Gumbel theta must be >= 1")
            return th
        raise UnsupportedFamilyError("theta is defined for Archimedean families only")

    @property
    def rho(self) -> float:
        if self.family in ("gaussian", "t"):
            rho = self.rho_ if self.rho_ is not None else tau_to_elliptical_rho(self.tau)
            if not -1.0 / (self.dim - 1) < rho < 1.0:
                raise ValueError("rho leaves the exchangeable positive-definite range")
            return rho
        raise UnsupportedFamilyError("rho is defined for elliptical families only")

    def correlation_cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of the exchangeable correlation matrix."""
        corr = np.full((self.dim, self.dim), self.rho)
        np.fill_diagonal(corr, 1.0)
        return np.linalg.cholesky(corr)


def _clip_unit(U: np.ndarray) -> np.ndarray:
    return np.clip(U, _UNIT_LO, _UNIT_HI)


def _resolve_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample(spec: CopulaSpec, n: int, rng) -> np.ndarray:
    """Draw n rows from the copula; entries strictly inside (0, 1)."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = _resolve_rng(rng)
    if spec.family == "clayton":
        U = _sample_clayton(spec.theta, n, spec.dim, rng)
    elif spec.family == "gumbel":
        U = _sample_gumbel(spec.theta, n, spec.dim, rng)
    elif spec.family == "gaussian":
        Z = rng.standard_normal((n, spec.dim)) @ spec.correlation_cholesky().T
        U = ndtr(Z)
    else:
        Z = rng.standard_normal((n, spec.dim)) @ spec.correlation_cholesky().T
        chi2 = rng.chisquare(spec.df, size=n)
        U = student_t.cdf(Z / np.sqrt(chi2 / spec.df)[:, None], spec.df)
    return _clip_unit(U)


def _sample_clayton(theta: float, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    # Gamma(1/theta) frailty: U_j = (1 + E_j / V)^(-1/theta).
    V = rng.gamma(1.0 / theta, 1.0, size=n)
    E = rng.exponential(1.0, size=(n, d))
    return (1.0 + E / V[:, None]) ** (-1.0 / theta)


def _sample_gumbel(theta: float, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    # Positive-stable(1/theta) frailty via the Chambers-Mallows-Stuck form.
    alpha = 1.0 / theta
    V = _positive_stable(alpha, n, rng)
    E = rng.exponential(1.0, size=(n, d))
    return np.exp(-((E / V[:, None]) ** alpha))


def _positive_stable(alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stable(alpha, 1, cos^(1/alpha)(pi alpha / 2), 0; 1) variates, alpha in (0, 1]."""
    theta_u = rng.uniform(0.0, math.pi, size=n)
    w = rng.exponential(1.0, size=n)
    if alpha == 1.0:
        return np.ones(n)
    sin_t = np.sin(theta_u)
    s = (np.sin(alpha * theta_u) / sin_t ** (1.0 / alpha)) * (
        np.sin((1.0 - alpha) * theta_u) / w
    ) ** ((1.0 - alpha) / alpha)
    return s


def pseudo_obs(Y) -> np.ndarray:
    """Componentwise ranks scaled to (0, 1).

    U_ij counts the entries of column j that are <= Y_ij, divided by n+1,
    so ties share the maximal rank.  Tie-free columns map to exact
    permutations of (1, ..., n) / (n+1).
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("need a non-empty 2-d sample")
    n = Y.shape[0]
    U = np.empty_like(Y)
    for j in range(Y.shape[1]):
        col = Y[:, j]
        order = np.sort(col)
        U[:, j] = np.searchsorted(order, col, side="right") / (n + 1.0)
    return U


def rosenblatt_inverse(spec: CopulaSpec, V) -> np.ndarray:
    """Map points of the unit hypercube to copula samples via sequential
    conditional quantiles; pushes low-discrepancy point sets forward to
    dependent samples.

    Available for the Clayton and Gaussian families.  Inputs are clamped
    away from 0 and 1 (Clayton additionally to 1e-12 against overflow of
    v^(-theta); adequate for tau up to roughly 0.9).
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != spec.dim:
        raise ValueError("points must be 2-d with spec.dim columns")
    if spec.family == "gaussian":
        Z = ndtri(_clip_unit(V))
        return _clip_unit(ndtr(Z @ spec.correlation_cholesky().T))
    if spec.family != "clayton":
        raise UnsupportedFamilyError(
            f"no tractable sequential inverse for family {spec.family!r}"
        )
    theta = spec.theta
    V = np.clip(V, 1e-12, 1.0 - 1e-12)
    U = np.empty_like(V)
    U[:, 0] = V[:, 0]
    # Running sum T_j = sum_i U_i^(-theta) - (j-1); each conditional
    # quantile multiplies it by v_j^(-theta / (1 + theta (j-1))).
    T = V[:, 0] ** (-theta)
    for j in range(1, spec.dim):
        T_next = T * V[:, j] ** (-theta / (1.0 + theta * j))
        U[:, j] = (T_next - T + 1.0) ** (-1.0 / theta)
        T = T_next
    return _clip_unit(U)
