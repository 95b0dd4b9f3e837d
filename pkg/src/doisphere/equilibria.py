"""Fisher-Von Mises equilibria of the dipolar alignment dynamics on S^{n-1}.

The anisotropic steady states are the densities M_kappa proportional to
exp(kappa x) (x = cos theta along the mean direction), whose flux magnitude is
the order parameter

    c(kappa) = int cos(t) e^{kappa cos t} sin^{n-2}(t) dt
             / int e^{kappa cos t} sin^{n-2}(t) dt.

A concentration kappa is an equilibrium for noise intensity sigma exactly when
c(kappa) = sigma kappa, i.e. sigma_tilde(kappa) := c(kappa)/kappa = sigma.
sigma_tilde decreases strictly from 1/n to 0, so the anisotropic branch exists
precisely for sigma < 1/n and is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .harmonics import build_quadrature

__all__ = [
    "RegimeError",
    "RatePredictions",
    "EquilibriumSummary",
    "TOL_REGIME",
    "order_parameter_c",
    "order_parameter_c_series",
    "sigma_tilde",
    "solve_kappa",
    "beta",
    "beta_series",
    "fvm_density",
    "fvm_log_partition",
    "fvm_free_energy",
    "classify_regime",
    "asymptotic_rate_bound",
    "equilibrium_summary",
]

TOL_REGIME = 1e-12

_ORDER_BUCKETS = (64, 128, 256, 512, 1024, 2048, 4096)


class RegimeError(ValueError):
    """Raised when an anisotropic equilibrium is requested at or above sigma = 1/n."""


@lru_cache(maxsize=128)
def _rule(n: int, order: int):
    q = build_quadrature(n, order)
    return q.x, q.w


def _order_for(kappa: float) -> int:
    # resolve exp(kappa x) to ~1e-14: polynomial degree must comfortably
    # exceed kappa
    need = int(kappa + 12.0 * math.sqrt(kappa + 1.0) + 60.0)
    for m in _ORDER_BUCKETS:
        if m >= need:
            return m
    return _ORDER_BUCKETS[-1]


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa < 0.0:
        raise ValueError(f"concentration must be finite and >= 0, got {kappa!r}")
    return kappa


def _weighted_exp(n: int, kappa: float):
    # exponent shifted by kappa so large concentrations cannot overflow
    x, w = _rule(n, _order_for(kappa))
    return x, w * np.exp(kappa * (x - 1.0))


def order_parameter_c(n: int, kappa: float) -> float:
    """Axial mean c(kappa) of the Fisher-Von Mises density, in [0, 1)."""
    kappa = _check_kappa(kappa)
    x, wy = _weighted_exp(n, kappa)
    return float((wy @ x) / wy.sum())


def order_parameter_c_series(n: int, kappa: float, tol: float = 1e-18) -> float:
    """c(kappa) from the moment power series; fast-converging cross-check.

    With a_0 = 1 and (2p+2) a_{p+1} = a_p / (2p+n):

        c(kappa) = sum_p (2p+2) a_{p+1} kappa^{2p+1} / sum_p a_p kappa^{2p}.

    Intended for moderate kappa (the compatibility tests use kappa <= 5);
    terms are cut once their ratio drops below ``tol``.
    """
    kappa = _check_kappa(kappa)
    a = 1.0
    k2 = kappa * kappa
    kp = 1.0  # kappa^{2p}
    den = a
    num = 0.0
    for p in range(600):
        a_next = a / ((2 * p + 2) * (2 * p + n))
        num += (2 * p + 2) * a_next * kp * kappa
        kp *= k2
        term = a_next * kp
        den += term
        if term < tol * den and p > 2:
            break
        a = a_next
    return num / den


def sigma_tilde(n: int, kappa: float) -> float:
    """Normalized order parameter c(kappa)/kappa; strictly decreasing, range (0, 1/n)."""
    kappa = _check_kappa(kappa)
    if kappa == 0.0:
        raise ValueError("sigma_tilde is undefined at kappa = 0 (the limit is 1/n)")
    return order_parameter_c(n, kappa) / kappa


def solve_kappa(n: int, sigma: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Unique positive root of c(kappa) = sigma kappa for sigma in (0, 1/n).

    Bisection on the strictly decreasing sigma_tilde; the bracket upper end is
    doubled from 1 until sigma_tilde falls below sigma.
    """
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"noise intensity must be positive, got {sigma!r}")
    if sigma >= 1.0 / n - TOL_REGIME:
        raise RegimeError(
            f"no anisotropic equilibrium at sigma={sigma} >= 1/n - tol for n={n}")
    lo = 0.0  # sigma_tilde -> 1/n > sigma as kappa -> 0
    hi = 1.0
    while sigma_tilde(n, hi) > sigma:
        hi *= 2.0
        if hi > 1e9:
            raise ArithmeticError("failed to bracket the compatibility root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if sigma_tilde(n, mid) > sigma:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    kappa = 0.5 * (lo + hi)
    if abs(order_parameter_c(n, kappa) - sigma * kappa) > 1e-10:
        raise ArithmeticError("compatibility root failed its residual check")
    return kappa


def beta(n: int, kappa: float) -> float:
    """beta = c(kappa)^2 + n c(kappa)/kappa - 1; positive for kappa > 0, 0 at kappa = 0."""
    kappa = _check_kappa(kappa)
    if kappa == 0.0:
        return 0.0
    c = order_parameter_c(n, kappa)
    return c * c + n * c / kappa - 1.0


def beta_series(n: int, kappa: float, terms: int = 80) -> float:
    """beta from its manifestly positive double series (cross-check route).

    beta = sum_k [ sum_{p+q=k} 2 (p-q)^2 / ((2p+n)(2q+n)) a_p a_q ] kappa^{2k}
           / ( sum_p a_p kappa^{2p} )^2.
    """
    kappa = _check_kappa(kappa)
    a = np.empty(terms)
    a[0] = 1.0
    for p in range(terms - 1):
        a[p + 1] = a[p] / ((2 * p + 2) * (2 * p + n))
    pows = kappa ** (2.0 * np.arange(terms))
    den = float(a @ pows)
    num = 0.0
    for k in range(terms):
        s = 0.0
        for p in range(k + 1):
            q = k - p
            s += 2.0 * (p - q) ** 2 / ((2 * p + n) * (2 * q + n)) * a[p] * a[q]
        num += s * pows[k]
        if s * pows[k] < 1e-18 * max(num, 1e-300) and k > 2:
            break
    return num / (den * den)


def fvm_log_partition(n: int, kappa: float) -> float:
    """log of the normalizing constant Z(kappa) = int exp(kappa x) d(mu)."""
    kappa = _check_kappa(kappa)
    _, wy = _weighted_exp(n, kappa)
    return kappa + math.log(wy.sum())


def fvm_density(n: int, kappa: float, x):
    """Fisher-Von Mises density M_kappa(x) = exp(kappa x)/Z(kappa), mass 1.

    Overflow-safe for large kappa (the exponent is shifted by kappa before
    exponentiation).
    """
    kappa = _check_kappa(kappa)
    x = np.asarray(x, dtype=float)
    logz = fvm_log_partition(n, kappa)
    vals = np.exp(kappa * x - logz)
    return vals if vals.ndim else float(vals)


def fvm_free_energy(n: int, kappa: float, sigma: float | None = None) -> float:
    """Free energy F(M_kappa) = sigma int M ln M - c(kappa)^2 / 2.

    When ``sigma`` is omitted, the self-consistent value sigma_tilde(kappa) is
    used (the off-equilibrium free energy needs an explicit sigma).
    """
    kappa = _check_kappa(kappa)
    if kappa == 0.0:
        return 0.0
    if sigma is None:
        sigma = sigma_tilde(n, kappa)
    c = order_parameter_c(n, kappa)
    # int M ln M = kappa c - ln Z
    return sigma * (kappa * c - fvm_log_partition(n, kappa)) - 0.5 * c * c


def classify_regime(n: int, sigma: float) -> str:
    """Noise regime: 'subcritical' (sigma>1/n), 'critical', or 'supercritical'."""
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"noise intensity must be positive, got {sigma!r}")
    gap = sigma - 1.0 / n
    if abs(gap) <= TOL_REGIME:
        return "critical"
    return "subcritical" if gap > 0.0 else "supercritical"


@dataclass(frozen=True)
class RatePredictions:
    """Predicted convergence-rate constants for all three noise regimes.

    ``subcritical`` is the linear rate (n-1)(sigma - 1/n) toward uniform (it is
    negative below threshold, where it is the growth rate of the flux mode);
    ``heat`` applies to zero-flux data; the supercritical entries are the
    proven lower bound (n-1) e^{-2 kappa} beta and its near-threshold form
    2(n-1)(1/n - sigma); ``critical_slope`` is the linear growth rate of
    1/||f-1||_{L2}^2 at sigma = 1/n.
    """

    subcritical: float
    heat: float
    supercritical_lower: float
    supercritical_near_threshold: float
    critical_slope: float


def asymptotic_rate_bound(n: int, sigma: float) -> RatePredictions:
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"noise intensity must be positive, got {sigma!r}")
    sub = (n - 1) * (sigma - 1.0 / n)
    heat = 2.0 * n * sigma
    crit = 2.0 * (n - 1) / (n * (n + 2))
    if classify_regime(n, sigma) == "supercritical":
        kappa = solve_kappa(n, sigma)
        lower = (n - 1) * math.exp(-2.0 * kappa) * beta(n, kappa)
        near = 2.0 * (n - 1) * (1.0 / n - sigma)
    else:
        lower = float("nan")
        near = float("nan")
    return RatePredictions(subcritical=sub, heat=heat, supercritical_lower=lower,
                           supercritical_near_threshold=near, critical_slope=crit)


@dataclass(frozen=True)
class EquilibriumSummary:
    n: int
    sigma: float
    regime: str
    kappa: float
    c: float
    beta: float
    rates: RatePredictions


def equilibrium_summary(n: int, sigma: float) -> EquilibriumSummary:
    """Regime, equilibrium concentration and rate constants for one (n, sigma)."""
    regime = classify_regime(n, sigma)
    if regime == "supercritical":
        kappa = solve_kappa(n, sigma)
        c = order_parameter_c(n, kappa)
        b = beta(n, kappa)
    else:
        kappa, c, b = 0.0, 0.0, 0.0
    return EquilibriumSummary(n=n, sigma=float(sigma), regime=regime, kappa=kappa,
                              c=c, beta=b, rates=asymptotic_rate_bound(n, sigma))
