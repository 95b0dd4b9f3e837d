"""Numerical laboratory for the Doi-Onsager (Smoluchowski) equation with
dipolar potential on S^{n-1}: spectral tables, equilibria, Galerkin solvers,
a mean-field particle simulator and convergence-rate diagnostics."""

from .equilibria import (
    EquilibriumSummary,
    RatePredictions,
    RegimeError,
    asymptotic_rate_bound,
    beta,
    classify_regime,
    equilibrium_summary,
    fvm_density,
    fvm_free_energy,
    order_parameter_c,
    sigma_tilde,
    solve_kappa,
)
from .fields import CircleField, ZonalField
from .harmonics import (
    BasisTable,
    Quadrature,
    build_basis_table,
    build_quadrature,
    conformal_eigenvalue,
    dim_spherical_harmonics,
    gegenbauer_eval,
    laplace_eigenvalue,
    zonal_values,
)
from .zonal import IcSpec, SolverConfig, TimeSeries, run
from .circle import CircleConfig, run_circle
from ._stepper import BlowUpError

__version__ = "0.1.0"
