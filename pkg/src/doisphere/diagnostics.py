"""Functionals tracked along solutions: free energy, dissipation, entropies,
norms, and the rate-fitting utilities used to compare runs against the
predicted convergence constants.

The Lyapunov pair is

    F(f) = sigma int f ln f - |J[f]|^2 / 2,
    D(f) = int f |grad(sigma ln f - omega . J[f])|^2,         dF/dt + D = 0,

and the quadratic entropy pair weights mode energies by the conformal
Laplacian spectrum:

    H(f)      = sum_l c_l^2 / conf_lam[l],
    Dtilde(f) = 2 sigma sum_l lam[l] c_l^2 / conf_lam[l] - 2 |J|^2 / (n-2)!,

with dH/dt + Dtilde = 0 along any solution (no positivity needed).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .fields import ZonalField
from .harmonics import BasisTable, Quadrature, zonal_values

__all__ = [
    "DiagnosticsRecord",
    "ZonalEval",
    "FitResult",
    "free_energy",
    "dissipation",
    "dissipation_gradient_form",
    "entropy_pair",
    "sobolev_norm",
    "fit_exponential_rate",
    "fit_critical_slope",
    "trailing_window",
    "conservation_check",
    "gevrey_radius",
]

CLIP_FLOOR = 1e-12
GEVREY_FLOOR = 1e-14


@dataclass
class DiagnosticsRecord:
    """Per-snapshot scalars.  Fields that do not apply hold NaN."""

    t: float
    j: float
    F: float
    D: float
    H: float
    Dtilde: float
    l2: float
    hs: float
    gevrey_r: float
    alpha_crit: float
    dist_to_fvm: float = float("nan")
    min_f: float = float("nan")
    clips: int = 0
    J1: float = float("nan")
    J2: float = float("nan")
    omega_angle: float = float("nan")

    @classmethod
    def csv_columns(cls, circle: bool = False) -> list[str]:
        base = ["t", "j", "F", "D", "H", "Dtilde", "l2", "hs", "gevrey_r",
                "alpha_crit", "dist_to_fvm", "min_f", "clips"]
        if circle:
            base += ["J1", "J2", "omega_angle"]
        return base

    def as_row(self, circle: bool = False) -> list[float]:
        return [getattr(self, name) for name in self.csv_columns(circle)]


class ZonalEval:
    """Cached node evaluation of zonal fields on a quadrature grid.

    Bundles the harmonic value matrix Y[ell, i] = Yhat_ell(x_i) (up to L+1 for
    gradient assembly) and the gradient matrix giving (1-x^2) d/dx of each
    basis function, so field values and tangential gradients at the nodes are
    plain matrix products.
    """

    def __init__(self, table: BasisTable, quad: Quadrature):
        if table.n != quad.n:
            raise ValueError("basis table and quadrature dimension mismatch")
        self.table = table
        self.quad = quad
        self.Y = zonal_values(table.n, table.L, quad.x)
        L = table.L
        # row ell of G is (1-x^2) Yhat_ell'(x) = grad_lo[l] Y[l-1] + grad_hi[l] Y[l+1]
        self.G = np.zeros((L + 1, quad.x.size))
        self.G[1:] = (table.grad_lo[1:, None] * self.Y[:L]
                      + table.grad_hi[1:, None] * self.Y[2:L + 2])
        self.one_minus_x2 = 1.0 - quad.x**2

    def values(self, coef: np.ndarray) -> np.ndarray:
        """f at the nodes for mean-one fields: 1 + sum_l c_l Yhat_l."""
        return 1.0 + coef[1:] @ self.Y[1:self.table.L + 1]

    def tangential_derivative(self, coef: np.ndarray) -> np.ndarray:
        """(1-x^2) f'(x) at the nodes; |grad f|^2 = (this)^2 / (1-x^2)."""
        return coef[1:] @ self.G[1:]

    def project(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of the mean-zero part of node values (index 0 zeroed)."""
        coef = self.Y[:self.table.L + 1] @ (self.quad.w * values)
        coef[0] = 0.0
        return coef


def _field_coef(f) -> np.ndarray:
    return f.coef if isinstance(f, ZonalField) else np.asarray(f, dtype=float)


def _clipped(values: np.ndarray, clip_floor: float):
    clipped = values < clip_floor
    return np.maximum(values, clip_floor), int(np.count_nonzero(clipped))


def free_energy(f, ev: ZonalEval, sigma: float, clip_floor: float = CLIP_FLOOR,
                return_clips: bool = False):
    """F = sigma int f ln f - j^2 / 2 by quadrature; exact 0 for f = 1.

    Node values at or below ``clip_floor`` are clipped before the logarithm
    and counted (positivity is only needed for this diagnostic, not for the
    evolution).
    """
    coef = _field_coef(f)
    vals = ev.values(coef)
    fl, clips = _clipped(vals, clip_floor)
    j = coef[1] / math.sqrt(ev.table.n)
    F = sigma * float(ev.quad.w @ (fl * np.log(fl))) - 0.5 * j * j
    if np.all(coef[1:] == 0.0):
        F = 0.0
    return (F, clips) if return_clips else F


def dissipation(f, ev: ZonalEval, sigma: float, clip_floor: float = CLIP_FLOOR,
                return_clips: bool = False):
    """Dissipation in expanded form:

        D = sigma^2 int |grad f|^2/f + (1 - 2(n-1) sigma) j^2 - j^2 int x^2 f.

    Nonnegative on probability densities, and zero exactly at equilibria.
    """
    coef = _field_coef(f)
    n = ev.table.n
    vals = ev.values(coef)
    fl, clips = _clipped(vals, clip_floor)
    df = ev.tangential_derivative(coef)
    j = coef[1] / math.sqrt(n)
    grad_sq = float(ev.quad.w @ (df * df / (ev.one_minus_x2 * fl)))
    x2f = float(ev.quad.w @ (ev.quad.x**2 * vals))
    D = sigma * sigma * grad_sq + (1.0 - 2.0 * (n - 1) * sigma) * j * j - j * j * x2f
    if return_clips:
        return D, clips
    return D


def dissipation_gradient_form(f, ev: ZonalEval, sigma: float,
                              clip_floor: float = CLIP_FLOOR) -> float:
    """Direct quadrature of int f |grad(sigma ln f - omega . J)|^2 (cross-check)."""
    coef = _field_coef(f)
    vals = ev.values(coef)
    fl, _ = _clipped(vals, clip_floor)
    df = ev.tangential_derivative(coef)
    j = coef[1] / math.sqrt(ev.table.n)
    # grad(sigma ln f - x j) has squared norm (1-x^2) (sigma f'/f - j)^2
    s = sigma * df / (ev.one_minus_x2 * fl) - j
    return float(ev.quad.w @ (fl * s * s * ev.one_minus_x2))


def entropy_pair(f, table: BasisTable, sigma: float) -> tuple[float, float]:
    """(H, Dtilde): the conformal-Laplacian entropy and its dissipation.

    For sigma >= 1/n the dissipation is nonnegative (mode 1 cancels exactly at
    sigma = 1/n), which makes H a Lyapunov functional without any positivity
    assumption on f.
    """
    coef = _field_coef(f)
    n = table.n
    L = table.L
    e = coef[1:L + 1] ** 2
    H = float(np.sum(e / table.conf_lam[1:]))
    j2 = coef[1] ** 2 / n
    Dt = 2.0 * sigma * float(np.sum(table.lam[1:L + 1] * e / table.conf_lam[1:]))
    Dt -= 2.0 / math.factorial(n - 2) * j2
    return H, Dt


def sobolev_norm(f, table: BasisTable, s: float) -> float:
    """Homogeneous Sobolev norm ||f - 1||_{H^s}: sqrt(sum lam^s c_l^2)."""
    coef = _field_coef(f)
    L = table.L
    return float(np.sqrt(np.sum(table.lam[1:L + 1] ** s * coef[1:L + 1] ** 2)))


@dataclass(frozen=True)
class FitResult:
    rate: float
    r2: float
    npoints: int
    t_span: tuple[float, float]


def _lsq_line(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    # slope, intercept, R^2
    A = np.vstack([t, np.ones_like(t)]).T
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ sol
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(sol[0]), float(sol[1]), r2


def trailing_window(t: np.ndarray, values: np.ndarray, threshold: float = 1e-2,
                    fraction: float = 0.5, min_points: int = 10) -> slice:
    """Default fit window: trailing ``fraction`` of snapshots once the tracked
    value has dropped below ``threshold`` (the asymptotic linear regime)."""
    t = np.asarray(t)
    values = np.asarray(values)
    below = np.nonzero(values < threshold)[0]
    start = int(below[0]) if below.size else 0
    hi = len(t)
    lo = max(start, hi - max(min_points, int(math.ceil((hi - start) * fraction))))
    if hi - lo < min_points:
        lo = max(0, hi - min_points)
    return slice(lo, hi)


def fit_exponential_rate(t, values, window: slice | None = None,
                         min_points: int = 10) -> FitResult:
    """Least-squares decay rate of log(values) over the trailing window.

    Returns the negated slope.  Nonpositive values inside the window are
    dropped with a warning (the window shrinks).
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is not None:
        t, values = t[window], values[window]
    good = values > 0.0
    if not np.all(good):
        warnings.warn("nonpositive values in rate-fit window; shrinking window")
        t, values = t[good], values[good]
    if t.size < min_points:
        raise ValueError(f"rate fit needs at least {min_points} positive snapshots")
    slope, _, r2 = _lsq_line(t, np.log(values))
    return FitResult(rate=-slope, r2=r2, npoints=t.size, t_span=(float(t[0]), float(t[-1])))


def fit_critical_slope(t, l2_values, window: slice | None = None,
                       min_points: int = 10) -> FitResult:
    """Least-squares slope of 1 / ||f - 1||_{L2}^2 against t (critical regime)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(l2_values, dtype=float)
    if window is not None:
        t, v = t[window], v[window]
    good = v > 0.0
    if not np.all(good):
        warnings.warn("nonpositive values in slope-fit window; shrinking window")
        t, v = t[good], v[good]
    if t.size < min_points:
        raise ValueError(f"slope fit needs at least {min_points} positive snapshots")
    slope, _, r2 = _lsq_line(t, 1.0 / (v * v))
    return FitResult(rate=slope, r2=r2, npoints=t.size, t_span=(float(t[0]), float(t[-1])))


def conservation_check(t, F, D, H, Dt) -> tuple[float, float]:
    """Max residuals of the two conservation relations over the snapshot grid.

    Uses the midpoint estimator: (X_{i+1} - X_i)/dt + (Y_i + Y_{i+1})/2 for
    the pairs (F, D) and (H, Dtilde).  Both residuals are second order in the
    snapshot spacing.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise ValueError("conservation check needs at least two snapshots")
    dt = np.diff(t)

    def resid(X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        r = np.diff(X) / dt + 0.5 * (Y[:-1] + Y[1:])
        return float(np.max(np.abs(r)))

    return resid(F, D), resid(H, Dt)


def gevrey_radius(f, floor: float = GEVREY_FLOOR, min_modes: int = 8) -> float:
    """Fitted exponential decay rate of the spectral tail, or NaN.

    Least-squares slope of -log|c_l| over the upper half of the resolved
    range (modes above the noise floor).  Needs at least ``min_modes`` usable
    modes past degree 1, otherwise the radius is reported as absent (NaN).
    """
    coef = np.abs(_field_coef(f))
    if coef.ndim != 1 or coef.size < 3:
        return float("nan")
    ells = np.arange(coef.size)
    usable = (ells >= 2) & (coef > floor)
    if int(np.count_nonzero(usable)) < min_modes:
        return float("nan")
    lmax = int(ells[usable][-1])
    lo = max(2, lmax // 2)
    sel = usable & (ells >= lo)
    if int(np.count_nonzero(sel)) < min_modes:
        sel = usable
    slope, _, _ = _lsq_line(ells[sel].astype(float), -np.log(coef[sel]))
    return slope
