"""Cumulants of the normalized quadratic functional and distances to normal.

The centered, standardized sample second moment of the stationary solution,

    F_n = (1/sqrt(n s_n)) sum_{i<=n} (|Z(i dt)|^2 - trace),

is a quadratic form z'z - E z'z in the stacked Gaussian coordinate vector z,
so its cumulants are exact trace identities of the stacked covariance S:

    kappa_p(z'z) = 2^{p-1} (p-1)! Tr(S^p),
    kappa_3(F_n) = 8 Tr(S^3) / (2 Tr(S^2))^{3/2},
    kappa_4(F_n) = 48 Tr(S^4) / (2 Tr(S^2))^2,      n s_n = 2 Tr(S^2).

Alongside the exact values, ``cumulant_bound_shapes`` evaluates the structural
upper-bound expressions (with their unspecified absolute constants stripped):

    B_3(n) = n^{-1/2} s_n^{-3/2} ( sum_{|i|<n} ||R(i dt)||^{3/2} )^2,
    B_4(n) = n^{-1}   s_n^{-2}   ( sum_{|i|<n} ||R(i dt)||^{4/3} )^3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .covariance import block_covariance, hs_norm_lags, s_n as s_n_series
from .models import DIAGONAL, ModelConfig

__all__ = [
    "CumulantReport",
    "exact_cumulants",
    "cumulant_bound_shapes",
    "xi_H",
    "ks_distance",
    "wasserstein1_distance",
    "k_statistics",
    "kolmogorov_wasserstein_bound",
]

#: Largest dense dimension (n for diagonal blocks, n*N for rank-one) accepted
#: by the exact-cumulant trace computation.
CUMULANT_DENSE_GUARD = 8192

#: Total stacked dimension up to which the symmetric eigendecomposition route
#: is used; beyond it, traces come from repeated matrix multiplication.
EIG_ROUTE_LIMIT = 4000


@dataclass(frozen=True)
class CumulantReport:
    """Exact cumulants, bound shapes, and the variance factor at one n."""

    n: int
    kappa3_exact: float
    kappa4_exact: float
    kappa3_bound_shape: float
    kappa4_bound_shape: float
    s_n: float


def _traces_from_block(block: np.ndarray, use_eig: bool) -> tuple[float, float, float]:
    """(Tr B^2, Tr B^3, Tr B^4) of a symmetric block."""
    if use_eig:
        lam = np.linalg.eigvalsh(block)
        return float(np.sum(lam**2)), float(np.sum(lam**3)), float(np.sum(lam**4))
    sq = block @ block
    tr2 = float(np.sum(block * block))
    tr3 = float(np.sum(sq * block))
    tr4 = float(np.sum(sq * sq))
    return tr2, tr3, tr4


def exact_cumulants(
    model: ModelConfig,
    n: int,
    dt: float = 1.0,
    dense_guard: int = CUMULANT_DENSE_GUARD,
) -> CumulantReport:
    """Exact third/fourth cumulants of F_n from stacked-covariance traces."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    stacked_dim = n * model.n_modes
    dense_dim = n if model.noise.kind == DIAGONAL else stacked_dim
    if dense_dim > dense_guard:
        raise ValueError(
            f"dense dimension {dense_dim} exceeds guard {dense_guard}; "
            "use Monte Carlo k-statistics for cumulants at this size"
        )
    use_eig = stacked_dim <= EIG_ROUTE_LIMIT
    blocks = block_covariance(model, n, dt)
    if model.noise.kind != DIAGONAL:
        blocks = [blocks]
    tr2 = tr3 = tr4 = 0.0
    for block in blocks:
        b2, b3, b4 = _traces_from_block(block, use_eig)
        tr2, tr3, tr4 = tr2 + b2, tr3 + b3, tr4 + b4
    kappa3 = 8.0 * tr3 / (2.0 * tr2) ** 1.5
    kappa4 = 48.0 * tr4 / (2.0 * tr2) ** 2
    b3_shape, b4_shape = cumulant_bound_shapes(model, n, dt)
    return CumulantReport(
        n=n,
        kappa3_exact=kappa3,
        kappa4_exact=kappa4,
        kappa3_bound_shape=b3_shape,
        kappa4_bound_shape=b4_shape,
        s_n=2.0 * tr2 / n,
    )


def cumulant_bound_shapes(model: ModelConfig, n: int, dt: float = 1.0) -> tuple[float, float]:
    """(B_3(n), B_4(n)) -- the cumulant bound expressions sans constants."""
    n = int(n)
    g = hs_norm_lags(model, dt, n)
    sn = s_n_series(model, n, dt)
    sum32 = g[0] ** 1.5 + 2.0 * float(np.sum(g[1:] ** 1.5))
    sum43 = g[0] ** (4.0 / 3.0) + 2.0 * float(np.sum(g[1:] ** (4.0 / 3.0)))
    b3 = sum32**2 / (np.sqrt(n) * sn**1.5)
    b4 = sum43**3 / (n * sn**2)
    return float(b3), float(b4)


def xi_H(hurst: float, x: float) -> float:
    """Convergence-rate upper bound: ``x^{-1/2}`` for H <= 5/8, ``x^{4H-3}``
    for 5/8 < H < 3/4.  Undefined (raises) for H >= 3/4."""
    h = float(hurst)
    if h >= 0.75:
        raise ValueError("no Berry-Esseen regime for H >= 3/4")
    x = float(x)
    if x <= 0:
        raise ValueError("sample size must be positive")
    if h <= 0.625:
        return x**-0.5
    return x ** (4.0 * h - 3.0)


def ks_distance(samples: np.ndarray, localize: float | None = None) -> float:
    """Kolmogorov distance of the empirical law to the standard normal.

    With ``localize=K`` the supremum is restricted to ``[-K, K]`` (evaluated at
    the sample points inside and at the two endpoints).
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    m = len(xs)
    if m == 0:
        raise ValueError("need at least one sample")
    cdf = norm.cdf(xs)
    upper = np.arange(1, m + 1) / m - cdf   # F_hat(x_i) - Phi(x_i)
    lower = cdf - np.arange(0, m) / m       # Phi(x_i) - F_hat(x_i^-)
    if localize is None:
        return float(max(upper.max(), lower.max()))
    k = float(localize)
    inside = (xs > -k) & (xs <= k)
    candidates = [0.0]
    if np.any(inside):
        candidates.append(float(upper[inside].max()))
        candidates.append(float(lower[inside].max()))
    for z in (-k, k):
        emp = np.searchsorted(xs, z, side="right") / m
        candidates.append(abs(emp - norm.cdf(z)))
    return float(max(candidates))


def wasserstein1_distance(samples: np.ndarray) -> float:
    """Empirical 1-Wasserstein distance to the standard normal via quantile
    coupling: mean |x_(i) - Phi^{-1}((i - 1/2)/m)|."""
    xs = np.sort(np.asarray(samples, dtype=float))
    m = len(xs)
    if m == 0:
        raise ValueError("need at least one sample")
    q = norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return float(np.mean(np.abs(xs - q)))


def k_statistics(samples: np.ndarray) -> tuple[float, float, float]:
    """Unbiased cumulant estimators (k_2, k_3, k_4) of a sample."""
    x = np.asarray(samples, dtype=float)
    m = len(x)
    if m < 4:
        raise ValueError("k-statistics need at least four samples")
    d = x - x.mean()
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    k2 = m / (m - 1) * m2
    k3 = m**2 / ((m - 1) * (m - 2)) * m3
    k4 = m**2 * ((m + 1) * m4 - 3 * (m - 1) * m2**2) / ((m - 1) * (m - 2) * (m - 3))
    return k2, k3, k4


def kolmogorov_wasserstein_bound(d_w: float) -> float:
    """Upper bound ``2 sqrt(C d_W)`` on the Kolmogorov distance to a normal
    with density bound ``C = 1/sqrt(2 pi)``."""
    return float(2.0 * np.sqrt(d_w / np.sqrt(2.0 * np.pi)))
