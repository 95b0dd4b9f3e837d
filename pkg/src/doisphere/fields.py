"""Spectral field containers shared by the solvers and diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ZonalField", "CircleField"]


@dataclass
class ZonalField:
    """Axisymmetric density on S^{n-1} as mean-zero zonal coefficients.

    ``coef[ell]`` for ell = 1..L holds the component of f - 1 on the
    orthonormal zonal harmonic Yhat_ell; coef[0] is kept at zero (the mass is
    exactly 1 by construction and is never evolved).  The axial flux is
    j = coef[1]/sqrt(n).
    """

    n: int
    L: int
    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.shape != (self.L + 1,):
            raise ValueError(f"coefficient vector must have length L+1 = {self.L + 1}")
        if not np.all(np.isfinite(self.coef)):
            raise ValueError("non-finite zonal coefficients")
        self.coef[0] = 0.0

    @property
    def flux(self) -> float:
        """Axial component of J[f] (the only nonzero one for zonal fields)."""
        return float(self.coef[1]) / math.sqrt(self.n)

    def l2(self) -> float:
        """||f - 1||_{L^2} under the normalized sphere measure."""
        return float(np.sqrt(np.sum(self.coef[1:] ** 2)))

    def copy(self) -> "ZonalField":
        return ZonalField(self.n, self.L, self.coef.copy())


@dataclass
class CircleField:
    """Density on S^1 as full real Fourier coefficients of f - 1.

    f(theta) = 1 + sum_k a[k] cos(k theta) + b[k] sin(k theta), k = 1..K,
    under the measure dtheta/(2 pi); index 0 of both arrays is unused.  The
    flux is J = (a[1]/2, b[1]/2).
    """

    K: int
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != (self.K + 1,) or self.b.shape != (self.K + 1,):
            raise ValueError(f"coefficient vectors must have length K+1 = {self.K + 1}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite Fourier coefficients")
        self.a[0] = 0.0
        self.b[0] = 0.0

    @property
    def flux_vector(self) -> np.ndarray:
        return np.array([0.5 * self.a[1], 0.5 * self.b[1]])

    @property
    def flux_norm(self) -> float:
        return float(np.hypot(0.5 * self.a[1], 0.5 * self.b[1]))

    def l2(self) -> float:
        return float(np.sqrt(0.5 * np.sum(self.a[1:] ** 2 + self.b[1:] ** 2)))

    def copy(self) -> "CircleField":
        return CircleField(self.K, self.a.copy(), self.b.copy())

    def rotate(self, phi: float) -> "CircleField":
        """Field of theta -> f(theta - phi): coefficients under the k-fold rotation."""
        k = np.arange(self.K + 1)
        ck, sk = np.cos(k * phi), np.sin(k * phi)
        return CircleField(self.K, self.a * ck - self.b * sk,
                           self.a * sk + self.b * ck)
