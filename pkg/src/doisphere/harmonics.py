"""Orthonormal zonal spherical harmonics on S^{n-1} and Gauss quadrature.

All integrals use the uniform probability measure on the sphere, so a zonal
function g(omega) = G(omega . e) integrates as

    int_S g = int_{-1}^{1} G(x) (1-x^2)^{(n-3)/2} dx / int_{-1}^{1} (1-x^2)^{(n-3)/2} dx.

The orthonormal zonal harmonic of degree ell is written Yhat_ell.  It is the
m = 0 member of the separated basis Q_{ell,m}(cos theta) sin^m(theta) Z_m(v),
where Q_{ell,0} is a normalized Gegenbauer polynomial (Chebyshev for n = 2).
We fix the phase by Yhat_ell(1) > 0.

The tables collected in :class:`BasisTable` encode, per degree ell:

* ``lam``       eigenvalue of -Laplace-Beltrami: ell (ell + n - 2)
* ``conf_lam``  eigenvalue of the conformal Laplacian: ell (ell+1) ... (ell+n-2)
* ``b``         gradient/multiplication coupling coefficient
* ``u``         x . Yhat_ell = u[ell] Yhat_{ell+1} + u[ell-1] Yhat_{ell-1}
* ``grad_lo/grad_hi``
                e . grad Yhat_ell = grad_lo[ell] Yhat_{ell-1} + grad_hi[ell] Yhat_{ell+1}

Coefficients are built from recurrence ratios only (no Gamma functions), so
tables stay finite in double precision up to truncation degrees of several
hundred.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "Quadrature",
    "BasisTable",
    "dim_spherical_harmonics",
    "laplace_eigenvalue",
    "conformal_eigenvalue",
    "gegenbauer_eval",
    "build_quadrature",
    "build_basis_table",
    "zonal_values",
    "axial_pairing",
    "multiplication_matrix",
    "dump_basis_tsv",
]


def _check_dimension(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"ambient dimension must be an integer >= 2, got {n!r}")


def _comb(m: int, k: int) -> int:
    # binomial coefficient with the convention C(m, k) = 0 for m < k or m < 0
    if m < 0 or k < 0 or k > m:
        return 0
    return math.comb(m, k)


def dim_spherical_harmonics(n: int, ell: int) -> int:
    """Dimension of the space of degree-ell spherical harmonics on S^{n-1}."""
    _check_dimension(n)
    if not isinstance(ell, (int, np.integer)) or ell < 0:
        raise ValueError(f"degree must be an integer >= 0, got {ell!r}")
    return _comb(n + ell - 2, n - 2) + _comb(n + ell - 3, n - 2)


def laplace_eigenvalue(n: int, ell: int) -> float:
    """Eigenvalue of -Laplace-Beltrami on degree-ell harmonics: ell(ell+n-2)."""
    _check_dimension(n)
    if ell < 0:
        raise ValueError(f"degree must be >= 0, got {ell!r}")
    return float(ell * (ell + n - 2))


def conformal_eigenvalue(n: int, ell: int) -> float:
    """Eigenvalue of the degree-(n-1) conformal Laplacian: ell(ell+1)...(ell+n-2).

    Only defined on mean-zero functions, so ell = 0 is rejected.
    """
    _check_dimension(n)
    if ell < 1:
        raise ValueError("conformal Laplacian acts on mean-zero functions (ell >= 1)")
    out = 1.0
    for j in range(n - 1):
        out *= ell + j
    return out


def gegenbauer_eval(lam: float, i: int, x):
    """Gegenbauer (ultraspherical) polynomial P_i^{(lam)}(x) by the three-term
    recurrence (i+1) P_{i+1} = 2(i+lam) x P_i - (i+2*lam-1) P_{i-1}.

    The family is undefined at lam = 0 (the n = 2, m = 0 basis uses Chebyshev
    polynomials instead), and requires lam > -1/2.
    """
    if lam == 0.0:
        raise ValueError("Gegenbauer polynomials are undefined at lam = 0; use Chebyshev")
    if lam <= -0.5:
        raise ValueError(f"Gegenbauer parameter must be > -1/2, got {lam}")
    if i < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {i}")
    x = np.asarray(x, dtype=float)
    p_prev = np.zeros_like(x)          # P_{-1} = 0
    p = np.ones_like(x)                # P_0 = 1
    for k in range(i):
        p, p_prev = (2.0 * (k + lam) * x * p - (k + 2.0 * lam - 1.0) * p_prev) / (k + 1.0), p
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class Quadrature:
    """Gauss rule for the normalized zonal weight (1-x^2)^{(n-3)/2} on (-1,1)."""

    n: int
    order: int
    x: np.ndarray
    w: np.ndarray

    def integrate(self, values: np.ndarray) -> float:
        """Integral of node values against the normalized sphere measure."""
        return float(self.w @ values)

    def moment(self, p: int) -> float:
        return float(self.w @ self.x**p)


def build_quadrature(n: int, order: int) -> Quadrature:
    """Gauss-Jacobi rule (alpha = beta = (n-3)/2), weights normalized to sum 1."""
    _check_dimension(n)
    if order < 3:
        raise ValueError("quadrature order must be >= 3 to integrate degree-4 moments exactly")
    a = 0.5 * (n - 3)
    x, w = roots_jacobi(order, a, a)
    w = w / w.sum()
    if not (np.all(np.isfinite(x)) and np.all(w > 0)):
        raise ArithmeticError("quadrature construction produced invalid nodes/weights")
    x.setflags(write=False)
    w.setflags(write=False)
    return Quadrature(n=n, order=order, x=x, w=w)


@dataclass(frozen=True)
class BasisTable:
    """Precomputed spectral operator coefficients for the zonal basis on S^{n-1}.

    Arrays are indexed by degree ell.  ``lam`` runs to L+1, everything else to
    L.  Slots that are not meaningful (conf_lam[0], grad coefficients at
    ell = 0) are zero.  Immutable after construction.
    """

    n: int
    L: int
    lam: np.ndarray
    conf_lam: np.ndarray
    b: np.ndarray
    u: np.ndarray
    grad_lo: np.ndarray
    grad_hi: np.ndarray

    @property
    def b_max(self) -> float:
        """Largest coupling coefficient in the table (slightly above 1 for n = 3)."""
        return float(self.b[1:].max()) if self.L >= 1 else float("nan")


def build_basis_table(n: int, L: int) -> BasisTable:
    """Build all coefficient tables for degrees 0..L.

    The multiplication coefficients come from the Gegenbauer three-term
    recurrence combined with the normalization ratio of consecutive degrees;
    the gradient coefficients use the coupling coefficient b.  Consistency of
    the two routes (the multiplication operator must be symmetric) is checked
    to 1e-12 and any non-finite entry raises.
    """
    _check_dimension(n)
    if not isinstance(L, (int, np.integer)) or L < 2:
        raise ValueError(f"truncation degree must be an integer >= 2, got {L!r}")

    ell = np.arange(L + 2, dtype=float)
    lam = ell * (ell + n - 2)

    conf_lam = np.zeros(L + 1)
    for m in range(1, L + 1):
        conf_lam[m] = conformal_eigenvalue(n, m)

    ells = np.arange(L + 1, dtype=float)
    if n == 2:
        # Chebyshev basis: Q_{ell,0} = sqrt(2) T_ell, with unit coupling.
        b = np.ones(L + 1)
        b[0] = math.sqrt(2.0)
        u = np.full(L + 1, 0.5)
        u[0] = 1.0 / math.sqrt(2.0)
    else:
        lam_g = 0.5 * n - 1.0  # Gegenbauer parameter for m = 0
        # rho[ell] = alpha_{ell+1}/alpha_ell from the normalization recurrence
        rho = np.sqrt((ells + 0.5 * n) * (ells + 1.0)
                      / ((ells + 0.5 * n - 1.0) * (ells + n - 2.0)))
        # x P_ell = [(ell+1) P_{ell+1} + (ell+2*lam_g-1) P_{ell-1}] / (2(ell+lam_g))
        u = (ells + 1.0) / (2.0 * (ells + lam_g) * rho)
        b = np.sqrt((ells + 1.0) * (ells + n - 2.0)
                    / ((ells + 0.5 * n - 1.0) * (ells + 0.5 * n)))
        # symmetric consistency: the Yhat_{ell-1} coefficient of x Yhat_ell
        # must reproduce u[ell-1]
        low = rho[:-1] * (ells[1:] + 2.0 * lam_g - 1.0) / (2.0 * (ells[1:] + lam_g))
        if not np.allclose(low, u[:-1], rtol=1e-12, atol=0.0):
            raise ArithmeticError("multiplication-by-x table failed the symmetry check")

    grad_lo = np.zeros(L + 1)
    grad_hi = np.zeros(L + 1)
    grad_lo[1:] = 0.5 * b[:-1] * (ells[1:] + n - 2.0)
    grad_hi[1:] = -0.5 * b[1:] * ells[1:]

    for arr, name in ((lam, "lam"), (conf_lam, "conf_lam"), (b, "b"), (u, "u"),
                      (grad_lo, "grad_lo"), (grad_hi, "grad_hi")):
        if not np.all(np.isfinite(arr)):
            raise ArithmeticError(f"non-finite value in basis table array {name}")
        arr.setflags(write=False)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ArithmeticError("multiplication coefficients must lie in (0, 1)")
    if np.any(b <= 0.0) or np.any(b[1:] > 1.1):
        raise ArithmeticError("coupling coefficients out of the expected (0, 1.1] range")

    return BasisTable(n=n, L=int(L), lam=lam, conf_lam=conf_lam, b=b, u=u,
                      grad_lo=grad_lo, grad_hi=grad_hi)


def zonal_values(n: int, L: int, x) -> np.ndarray:
    """Values Yhat_ell(x) of the orthonormal zonal harmonics, ell = 0..L+1.

    Returns an array of shape (L+2, len(x)).  Built from the Gegenbauer
    recurrence with the degree-by-degree normalization ratio (Chebyshev route
    for n = 2), independently of the multiplication table, so quadrature
    cross-checks of the tables are a genuine dual route.
    """
    _check_dimension(n)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = L + 2
    out = np.empty((m, x.size))
    out[0] = 1.0
    if m == 1:
        return out
    if n == 2:
        out[1] = math.sqrt(2.0) * x
        if m > 2:
            out[2] = 2.0 * x * out[1] - math.sqrt(2.0)
        for k in range(2, m - 1):
            out[k + 1] = 2.0 * x * out[k] - out[k - 1]
    else:
        lam_g = 0.5 * n - 1.0
        alpha = 1.0
        p_prev = np.zeros_like(x)
        p = np.ones_like(x)
        for k in range(1, m):
            p, p_prev = (2.0 * (k - 1 + lam_g) * x * p
                         - (k - 2 + 2.0 * lam_g) * p_prev) / k, p
            alpha *= math.sqrt((k - 1 + 0.5 * n) * k
                               / ((k - 1 + 0.5 * n - 1.0) * (k - 1 + n - 2.0)))
            out[k] = alpha * p
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("zonal harmonic evaluation produced non-finite values")
    return out


def axial_pairing(table: BasisTable, g: np.ndarray, h: np.ndarray,
                  return_scale: bool = False):
    """Axis component of int_S g (e . grad h) for zonal coefficient vectors.

    ``g`` and ``h`` hold coefficients of mean-zero fields in the orthonormal
    basis, index 0 unused.  With the gradient coupling tables this is

        sum_ell h[ell] (grad_lo[ell] g[ell-1] + grad_hi[ell] g[ell+1]).

    If ``return_scale`` is set, also return the sum of absolute values of the
    individual terms, for relative smallness tests.
    """
    L = table.L
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.shape != (L + 1,) or h.shape != (L + 1,):
        raise ValueError("coefficient vectors must have length L+1")
    lo = table.grad_lo[1:] * g[:-1]          # pairs h[ell] with g[ell-1]
    hi = np.zeros(L)
    hi[: L - 1] = table.grad_hi[1:L] * g[2:]  # pairs h[ell] with g[ell+1]
    terms = h[1:] * (lo + hi)
    total = float(terms.sum())
    if return_scale:
        scale = float(np.abs(h[1:] * lo).sum() + np.abs(h[1:] * hi).sum())
        return total, scale
    return total


def multiplication_matrix(table: BasisTable) -> np.ndarray:
    """Dense (L+1)x(L+1) matrix of multiplication by x in the zonal basis."""
    L = table.L
    mat = np.zeros((L + 1, L + 1))
    idx = np.arange(L)
    mat[idx, idx + 1] = table.u[:L]
    mat[idx + 1, idx] = table.u[:L]
    return mat


def dump_basis_tsv(table: BasisTable, path) -> None:
    """Plain-text audit dump: one row per degree with all table entries."""
    lines = ["ell\tlambda\tconf_lambda\tb\tu\tgrad_lo\tgrad_hi"]
    for m in range(table.L + 1):
        lines.append("\t".join([
            str(m),
            f"{table.lam[m]:.17g}",
            f"{table.conf_lam[m]:.17g}",
            f"{table.b[m]:.17g}",
            f"{table.u[m]:.17g}",
            f"{table.grad_lo[m]:.17g}",
            f"{table.grad_hi[m]:.17g}",
        ]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
