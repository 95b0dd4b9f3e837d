"""Axisymmetric spectral Galerkin solver for the dipolar Doi equation.

In the non-conservative form the dynamics along a fixed symmetry axis e read

    df/dt = sigma Lap f - j e . grad f + (n-1) j (omega . e) f,   j = J[f] . e,

and in the orthonormal zonal basis (f = 1 + sum_l c_l Yhat_l, j = c_1/sqrt(n))
each degree couples only to its two neighbors through the multiplication and
gradient tables.  The spillover into degree L+1 is dropped (hard Galerkin
projection).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from . import diagnostics as diags
from ._stepper import BlowUpError, integrate, snapshot_grid
from .equilibria import classify_regime, fvm_density, order_parameter_c, solve_kappa
from .fields import ZonalField
from .harmonics import BasisTable, Quadrature, build_basis_table, build_quadrature

__all__ = [
    "IcSpec",
    "SolverConfig",
    "TimeSeries",
    "BlowUpError",
    "rhs",
    "step",
    "run",
    "project_ic",
    "second_moment",
]


@dataclass(frozen=True)
class IcSpec:
    """Initial-condition recipe: uniform, fvm(kappa), perturbed-uniform,
    an explicit coefficient list, or values at the quadrature nodes."""

    kind: str
    kappa: float | None = None
    eps: float | None = None
    modes: tuple[int, ...] | None = None
    coeffs: tuple[float, ...] | None = None
    values: tuple[float, ...] | None = None

    @classmethod
    def uniform(cls) -> "IcSpec":
        return cls(kind="uniform")

    @classmethod
    def fvm(cls, kappa: float) -> "IcSpec":
        return cls(kind="fvm", kappa=float(kappa))

    @classmethod
    def perturbed(cls, eps: float, modes=(1, 2)) -> "IcSpec":
        return cls(kind="perturbed", eps=float(eps), modes=tuple(int(m) for m in modes))

    @classmethod
    def from_coeffs(cls, coeffs) -> "IcSpec":
        return cls(kind="coeffs", coeffs=tuple(float(v) for v in coeffs))

    @classmethod
    def from_node_values(cls, values) -> "IcSpec":
        return cls(kind="nodes", values=tuple(float(v) for v in values))

    def describe(self) -> str:
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "fvm":
            return f"fvm:{self.kappa:g}"
        if self.kind == "perturbed":
            return "perturbed:%g,%s" % (self.eps, ",".join(map(str, self.modes)))
        return self.kind


@dataclass
class SolverConfig:
    n: int = 3
    L: int = 64
    sigma: float | None = None
    critical: bool = False          # run exactly at the threshold sigma = 1/n
    t_end: float = 10.0
    dt_init: float = 1e-3
    rel_tol: float | None = 1e-8    # None -> fixed-step integration at dt_init
    dt_max: float | None = None
    output_stride: float = 0.1      # time between stored snapshots
    quad_order: int | None = None   # default 2L: exact products of truncated fields
    ic: IcSpec = dc_field(default_factory=lambda: IcSpec.perturbed(0.1))
    clip_floor: float = 1e-12
    hs_order: float = 1.0
    monotone_check: bool = True

    def effective_sigma(self) -> float:
        if self.critical:
            return 1.0 / self.n
        if self.sigma is None:
            raise ValueError("either sigma or critical=True must be given")
        return float(self.sigma)

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.L < 4:
            raise ValueError("L must be >= 4")
        if self.dt_init <= 0 or self.t_end <= 0 or self.output_stride <= 0:
            raise ValueError("dt_init, t_end and output_stride must be positive")
        if self.effective_sigma() <= 0:
            raise ValueError("sigma must be positive")
        if self.rel_tol is not None and self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive or None")


def _nonlinear_tables(table: BasisTable) -> tuple[np.ndarray, np.ndarray]:
    # transport (-j e.grad f) and growth ((n-1) j x f) merge into two
    # neighbor-coupling arrays: into degree l, A[l] multiplies c[l-1] and
    # B[l] multiplies c[l+1]
    n, L = table.n, table.L
    A = np.zeros(L + 1)
    B = np.zeros(L + 1)
    A[1:] = (n - 1) * table.u[:L] - table.grad_hi[:L]
    B[1:L] = (n - 1) * table.u[1:L] - table.grad_lo[2:L + 1]
    return A, B


def make_nonlinear(table: BasisTable):
    """The flux-driven part of the coefficient dynamics (everything but the
    exactly-integrated diffusion diagonal).  Vanishes identically when j = 0."""
    n, L = table.n, table.L
    A, B = _nonlinear_tables(table)
    rootn = math.sqrt(n)
    force = (n - 1) / rootn

    def nonlin(c: np.ndarray) -> np.ndarray:
        j = c[1] / rootn
        out = np.empty_like(c)
        out[0] = 0.0
        out[1:] = A[1:] * c[:L]
        out[1:L] += B[1:L] * c[2:L + 1]
        out[1] += force
        out *= j
        return out

    return nonlin


def rhs(field: ZonalField, table: BasisTable, sigma: float) -> np.ndarray:
    """Time derivative of the zonal coefficients under Galerkin truncation."""
    if field.n != table.n or field.L != table.L:
        raise ValueError("field and basis table shapes do not match")
    if not np.all(np.isfinite(field.coef)):
        raise ValueError("non-finite field coefficients")
    c = field.coef
    out = make_nonlinear(table)(c)
    out -= sigma * table.lam[:table.L + 1] * c
    return out


def step(field: ZonalField, table: BasisTable, sigma: float, dt: float) -> ZonalField:
    """One integrating-factor Heun step of size dt (deterministic)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    nonlin = make_nonlinear(table)
    E = np.exp(-sigma * table.lam[:table.L + 1] * dt)
    c = field.coef
    k1 = nonlin(c)
    cp = E * (c + dt * k1)
    c_new = E * c + 0.5 * dt * (E * k1 + nonlin(cp))
    if not np.all(np.isfinite(c_new)):
        raise BlowUpError(dt, c_new)
    return ZonalField(field.n, field.L, c_new)


def project_ic(spec: IcSpec, table: BasisTable, quad: Quadrature,
               ev: diags.ZonalEval | None = None):
    """Build the initial coefficients for an IC recipe.

    Returns ``(field, info)`` where info carries the projection residual
    (energy in discarded modes) and the minimum of the represented density at
    the quadrature nodes.
    """
    n, L = table.n, table.L
    if ev is None:
        ev = diags.ZonalEval(table, quad)
    coef = np.zeros(L + 1)
    residual = 0.0
    if spec.kind == "uniform":
        pass
    elif spec.kind == "fvm":
        vals = np.asarray(fvm_density(n, spec.kappa, quad.x))
        coef = ev.project(vals - 1.0)
        # degree-1 coefficient from the exact flux relation j = c(kappa)
        coef[1] = math.sqrt(n) * order_parameter_c(n, spec.kappa)
        residual = max(0.0, float(quad.w @ (vals - 1.0) ** 2) - float(np.sum(coef[1:] ** 2)))
    elif spec.kind == "perturbed":
        for m in spec.modes:
            if not 1 <= m <= L:
                raise ValueError(f"perturbed mode {m} outside 1..L")
            coef[m] = spec.eps
    elif spec.kind == "coeffs":
        given = np.asarray(spec.coeffs, dtype=float)
        take = min(given.size, L)
        coef[1:take + 1] = given[:take]
        if given.size > L:
            residual = float(np.sum(given[L:] ** 2))
    elif spec.kind == "nodes":
        vals = np.asarray(spec.values, dtype=float)
        if vals.shape != quad.x.shape:
            raise ValueError("node values must match the quadrature grid")
        mass = float(quad.w @ vals)
        if mass <= 0:
            raise ValueError("node values must carry positive mass")
        vals = vals / mass
        if np.any(vals <= 0):
            warnings.warn("initial density is nonpositive at some nodes; entropy "
                          "diagnostics will be clipped (evolution is unaffected)")
        coef = ev.project(vals - 1.0)
        residual = max(0.0, float(quad.w @ (vals - 1.0) ** 2) - float(np.sum(coef[1:] ** 2)))
    else:
        raise ValueError(f"unknown IC kind {spec.kind!r}")

    field = ZonalField(n, L, coef)
    min_f = float(np.min(ev.values(coef)))
    return field, {"residual": residual, "min_f": min_f}


def second_moment(f, table: BasisTable) -> float:
    """int x^2 f for a mean-one zonal field: 1/n + u[1] c_2 / sqrt(n)."""
    coef = f.coef if isinstance(f, ZonalField) else np.asarray(f, dtype=float)
    return 1.0 / table.n + table.u[1] * coef[2] / math.sqrt(table.n)


@dataclass
class TimeSeries:
    """Snapshots of one run: times, coefficient rows and per-snapshot scalars."""

    config: SolverConfig
    sigma: float
    table: BasisTable
    t: np.ndarray
    coefs: np.ndarray
    records: list
    info: dict

    def final_field(self) -> ZonalField:
        return ZonalField(self.table.n, self.table.L, self.coefs[-1].copy())

    def record_arrays(self) -> dict[str, np.ndarray]:
        cols = diags.DiagnosticsRecord.csv_columns()
        return {name: np.array([getattr(r, name) for r in self.records]) for name in cols}

    def fit_rate_l2(self, threshold: float = 1e-2):
        arr = self.record_arrays()
        win = diags.trailing_window(self.t, arr["l2"], threshold=threshold)
        return diags.fit_exponential_rate(self.t, arr["l2"], window=win)

    def fit_critical_slope(self):
        arr = self.record_arrays()
        win = diags.trailing_window(self.t, arr["l2"], threshold=math.inf)
        return diags.fit_critical_slope(self.t, arr["l2"], window=win)

    def summary(self) -> dict:
        arr = self.record_arrays()
        out = {
            "solver": "zonal",
            "config": _config_dict(self.config),
            "sigma": self.sigma,
            "regime": classify_regime(self.config.n, self.sigma),
            "t_final": float(self.t[-1]),
            "final_coef": [float(v) for v in self.coefs[-1]],
            "j_final": float(arr["j"][-1]),
            "l2_final": float(arr["l2"][-1]),
            "min_f_overall": float(np.nanmin(arr["min_f"])),
            "clip_total": int(np.sum(arr["clips"])),
            "dist_to_fvm_final": float(arr["dist_to_fvm"][-1]),
            "ic_residual": self.info.get("ic_residual"),
            "steps": self.info.get("steps"),
            "rejected_steps": self.info.get("rejected"),
        }
        resF, resH = diags.conservation_check(self.t, arr["F"], arr["D"],
                                              arr["H"], arr["Dtilde"])
        out["max_F_residual"] = resF
        out["max_H_residual"] = resH
        try:
            fit = self.fit_rate_l2()
            out["fitted_rate"] = fit.rate
            out["fitted_rate_r2"] = fit.r2
        except (ValueError, FloatingPointError):
            out["fitted_rate"] = None
            out["fitted_rate_r2"] = None
        if out["regime"] == "critical":
            try:
                fit = self.fit_critical_slope()
                out["critical_slope"] = fit.rate
                out["critical_slope_r2"] = fit.r2
            except ValueError:
                out["critical_slope"] = None
        return out


def _config_dict(config: SolverConfig) -> dict:
    d = asdict(config)
    d["ic"] = config.ic.describe()
    return d


def run(config: SolverConfig) -> TimeSeries:
    """Integrate to t_end with snapshots every output_stride.

    Free energy monotonicity is checked (not enforced) along positive-IC
    trajectories: an increase beyond the discretization tolerance aborts the
    run, since the continuous dynamics dissipate F exactly.
    """
    config.validate()
    sigma = config.effective_sigma()
    n, L = config.n, config.L
    table = build_basis_table(n, L)
    quad = build_quadrature(n, config.quad_order or 2 * L)
    ev = diags.ZonalEval(table, quad)
    field, ic_info = project_ic(config.ic, table, quad, ev=ev)
    positive_ic = ic_info["min_f"] > 0.0

    fvm_ref = None
    if classify_regime(n, sigma) == "supercritical":
        kappa = solve_kappa(n, sigma)
        mcoef = ev.project(np.asarray(fvm_density(n, kappa, quad.x)) - 1.0)
        signs = (-1.0) ** np.arange(L + 1)
        fvm_ref = (mcoef, signs)

    rootn = math.sqrt(n)
    tol_rel = config.rel_tol if config.rel_tol is not None else 1e-8
    fe_tol = 1e-8 + 1e3 * tol_rel * 1.0  # absolute slack scaled below

    records: list[diags.DiagnosticsRecord] = []
    coef_rows: list[np.ndarray] = []
    state = {"F_prev": None}

    def on_snapshot(t: float, c: np.ndarray) -> None:
        vals = ev.values(c)
        F, clips = diags.free_energy(c, ev, sigma, config.clip_floor, return_clips=True)
        D = diags.dissipation(c, ev, sigma, config.clip_floor)
        H, Dt = diags.entropy_pair(c, table, sigma)
        j = c[1] / rootn
        dist = float("nan")
        if fvm_ref is not None:
            mcoef, signs = fvm_ref
            ref = mcoef if c[1] >= 0 else mcoef * signs
            dist = float(np.sqrt(np.sum((c[1:] - ref[1:]) ** 2)))
        rec = diags.DiagnosticsRecord(
            t=t, j=j, F=F, D=D, H=H, Dtilde=Dt,
            l2=float(np.sqrt(np.sum(c[1:] ** 2))),
            hs=diags.sobolev_norm(c, table, config.hs_order),
            gevrey_r=diags.gevrey_radius(c),
            alpha_crit=n * abs(j),
            dist_to_fvm=dist,
            min_f=float(vals.min()),
            clips=clips,
        )
        if (config.monotone_check and positive_ic and state["F_prev"] is not None
                and F > state["F_prev"] + fe_tol + 1e-6 * abs(state["F_prev"])):
            raise RuntimeError(
                f"free energy increased ({state['F_prev']:.3e} -> {F:.3e}) at t={t:g}; "
                "discretization tolerance violated")
        state["F_prev"] = F
        records.append(rec)
        coef_rows.append(c.copy())

    t_grid = snapshot_grid(config.t_end, config.output_stride)
    decay = sigma * table.lam[:L + 1]
    dt_max = config.dt_max if config.dt_max is not None else config.output_stride
    stats = integrate(field.coef, decay, make_nonlinear(table), t_grid, on_snapshot,
                      rel_tol=config.rel_tol, dt_init=config.dt_init, dt_max=dt_max)

    info = {"ic_residual": ic_info["residual"], "ic_min_f": ic_info["min_f"],
            "steps": stats.steps, "rejected": stats.rejected,
            "quad_order": quad.order}
    return TimeSeries(config=config, sigma=sigma, table=table, t=t_grid,
                      coefs=np.array(coef_rows), records=records, info=info)
