"""Full (non-axisymmetric) Fourier-Galerkin solver on S^1.

For n = 2 the dynamics read, with J = J[f] and tau = (-sin t, cos t),

    df/dt = sigma f_tt - d/dt[(J . tau) f],

so the transport term couples each Fourier mode k only to k +/- 1 through
product-to-sum identities.  The drifting mean direction Omega(t) = J/|J| is
tracked to validate the flux-persistence dichotomy and the convergence to a
rotated anisotropic equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np
from scipy.special import ive

from . import diagnostics as diags
from ._stepper import BlowUpError, integrate, snapshot_grid
from .equilibria import classify_regime, solve_kappa
from .fields import CircleField

__all__ = [
    "CircleConfig",
    "CircleSeries",
    "rhs_circle",
    "step_circle",
    "run_circle",
    "omega_track",
    "fvm_circle_coefficients",
    "circle_ic",
]

_N = 2  # ambient dimension of the circle solver


def _transport_coefficients(a: np.ndarray, b: np.ndarray, K: int):
    """Cosine/sine coefficients p, q (index 0..K+1) of (J . tau) f."""
    J1, J2 = 0.5 * a[1], 0.5 * b[1]
    p = np.zeros(K + 2)
    q = np.zeros(K + 2)
    # constant part of f
    q[1] += -J1
    p[1] += J2
    ak = a[1:K + 1]
    bk = b[1:K + 1]
    # -J1 sin(t) cos(kt) and J2 cos(t) cos(kt)
    q[2:K + 2] += -0.5 * J1 * ak
    q[0:K] += 0.5 * J1 * ak          # q[0] is S_0 = 0, never read back
    p[2:K + 2] += 0.5 * J2 * ak
    p[0:K] += 0.5 * J2 * ak
    # -J1 sin(t) sin(kt) and J2 cos(t) sin(kt)
    p[0:K] += -0.5 * J1 * bk
    p[2:K + 2] += 0.5 * J1 * bk
    q[2:K + 2] += 0.5 * J2 * bk
    q[0:K] += 0.5 * J2 * bk
    return p, q


def make_nonlinear_circle(K: int):
    """Nonlinear part -d/dt[(J . tau) f] on the packed state [a[1..K], b[1..K]]."""
    k = np.arange(1, K + 1, dtype=float)

    def nonlin(state: np.ndarray) -> np.ndarray:
        a = np.concatenate(([0.0], state[:K]))
        b = np.concatenate(([0.0], state[K:]))
        p, q = _transport_coefficients(a, b, K)
        out = np.empty_like(state)
        out[:K] = -k * q[1:K + 1]
        out[K:] = k * p[1:K + 1]
        return out

    return nonlin


def rhs_circle(field: CircleField, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative (da, db) of the Fourier coefficients."""
    if not (np.all(np.isfinite(field.a)) and np.all(np.isfinite(field.b))):
        raise ValueError("non-finite Fourier coefficients")
    K = field.K
    state = np.concatenate((field.a[1:], field.b[1:]))
    d = make_nonlinear_circle(K)(state)
    k2 = np.arange(1, K + 1, dtype=float) ** 2
    da = np.zeros(K + 1)
    db = np.zeros(K + 1)
    da[1:] = d[:K] - sigma * k2 * field.a[1:]
    db[1:] = d[K:] - sigma * k2 * field.b[1:]
    return da, db


def step_circle(field: CircleField, sigma: float, dt: float) -> CircleField:
    """One integrating-factor Heun step of size dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    K = field.K
    nonlin = make_nonlinear_circle(K)
    k2 = np.arange(1, K + 1, dtype=float) ** 2
    E = np.exp(-sigma * np.concatenate((k2, k2)) * dt)
    s = np.concatenate((field.a[1:], field.b[1:]))
    k1 = nonlin(s)
    sp = E * (s + dt * k1)
    s_new = E * s + 0.5 * dt * (E * k1 + nonlin(sp))
    a = np.concatenate(([0.0], s_new[:K]))
    b = np.concatenate(([0.0], s_new[K:]))
    return CircleField(K, a, b)


def fvm_circle_coefficients(kappa: float, phi: float, K: int) -> CircleField:
    """Fourier coefficients of the anisotropic equilibrium at angle phi.

    exp(kappa cos psi) expands over scaled Bessel functions:
    M - 1 has a_k = 2 (I_k/I_0)(kappa) cos(k phi), b_k likewise with sin.
    """
    k = np.arange(K + 1)
    ratio = ive(k, kappa) / ive(0, kappa)
    a = 2.0 * ratio * np.cos(k * phi)
    b = 2.0 * ratio * np.sin(k * phi)
    a[0] = 0.0
    b[0] = 0.0
    return CircleField(K, a, b)


def circle_ic(kind: str, K: int, *, kappa: float = 1.0, phi: float = 0.0,
              eps: float = 0.1, modes=(1, 2)) -> CircleField:
    """Convenience ICs: 'uniform', 'fvm' at angle phi, or 'perturbed' cosine modes."""
    if kind == "uniform":
        return CircleField(K, np.zeros(K + 1), np.zeros(K + 1))
    if kind == "fvm":
        return fvm_circle_coefficients(kappa, phi, K)
    if kind == "perturbed":
        a = np.zeros(K + 1)
        for m in modes:
            if not 1 <= m <= K:
                raise ValueError(f"perturbed mode {m} outside 1..K")
            a[m] = eps
        return CircleField(K, a, np.zeros(K + 1))
    raise ValueError(f"unknown circle IC kind {kind!r}")


@dataclass
class CircleConfig:
    K: int = 64
    sigma: float | None = None
    critical: bool = False
    t_end: float = 10.0
    dt_init: float = 1e-3
    rel_tol: float | None = 1e-8
    dt_max: float | None = None
    output_stride: float = 0.1
    grid_size: int | None = None    # theta nodes for f ln f integrals; default 4K
    clip_floor: float = 1e-12
    hs_order: float = 1.0

    def effective_sigma(self) -> float:
        if self.critical:
            return 0.5
        if self.sigma is None:
            raise ValueError("either sigma or critical=True must be given")
        return float(self.sigma)

    def validate(self) -> None:
        if self.K < 4:
            raise ValueError("K must be >= 4")
        if self.dt_init <= 0 or self.t_end <= 0 or self.output_stride <= 0:
            raise ValueError("dt_init, t_end and output_stride must be positive")
        if self.effective_sigma() <= 0:
            raise ValueError("sigma must be positive")


class _CircleEval:
    """Uniform theta grid evaluation; the mean over nodes is spectrally exact
    for trigonometric polynomials below the grid size."""

    def __init__(self, K: int, grid_size: int | None):
        self.K = K
        M = grid_size or max(256, 4 * K)
        self.theta = 2.0 * np.pi * np.arange(M) / M
        k = np.arange(1, K + 1)
        self.cos_kt = np.cos(np.outer(k, self.theta))
        self.sin_kt = np.sin(np.outer(k, self.theta))
        self.cos_t = np.cos(self.theta)
        self.sin_t = np.sin(self.theta)

    def values(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return 1.0 + a[1:] @ self.cos_kt + b[1:] @ self.sin_kt

    def theta_derivative(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        k = np.arange(1, self.K + 1)[:, None]
        return (-a[1:, None] * k * self.sin_kt + b[1:, None] * k * self.cos_kt).sum(axis=0)


def _circle_record(t: float, a: np.ndarray, b: np.ndarray, ev: _CircleEval,
                   sigma: float, clip_floor: float, hs_order: float,
                   fvm_kappa: float | None) -> diags.DiagnosticsRecord:
    K = ev.K
    J1, J2 = 0.5 * a[1], 0.5 * b[1]
    jn = math.hypot(J1, J2)
    vals = ev.values(a, b)
    clipped = vals < clip_floor
    fl = np.maximum(vals, clip_floor)
    F = sigma * float(np.mean(fl * np.log(fl))) - 0.5 * jn * jn
    ft = ev.theta_derivative(a, b)
    jtau = -J1 * ev.sin_t + J2 * ev.cos_t
    s = sigma * ft / fl - jtau
    D = float(np.mean(fl * s * s))
    k = np.arange(1, K + 1, dtype=float)
    e = a[1:] ** 2 + b[1:] ** 2
    H = float(np.sum(0.5 * e / k))
    Dt = 2.0 * sigma * float(np.sum(0.5 * k * e)) - 2.0 * jn * jn
    l2 = float(np.sqrt(0.5 * np.sum(e)))
    hs = float(np.sqrt(np.sum((k ** 2) ** hs_order * 0.5 * e)))
    amp = np.concatenate(([0.0], np.sqrt(0.5 * e)))
    dist = float("nan")
    if fvm_kappa is not None and jn > 0:
        phi = math.atan2(J2, J1)
        m = fvm_circle_coefficients(fvm_kappa, phi, K)
        dist = float(np.sqrt(0.5 * np.sum((a[1:] - m.a[1:]) ** 2
                                          + (b[1:] - m.b[1:]) ** 2)))
    return diags.DiagnosticsRecord(
        t=t, j=jn, F=F, D=D, H=H, Dtilde=Dt, l2=l2, hs=hs,
        gevrey_r=diags.gevrey_radius(amp),
        alpha_crit=_N * jn, dist_to_fvm=dist,
        min_f=float(vals.min()), clips=int(np.count_nonzero(clipped)),
        J1=J1, J2=J2, omega_angle=math.atan2(J2, J1) if jn > 0 else float("nan"),
    )


@dataclass
class CircleSeries:
    config: CircleConfig
    sigma: float
    t: np.ndarray
    a: np.ndarray            # (S, K+1)
    b: np.ndarray
    records: list
    info: dict

    def final_field(self) -> CircleField:
        return CircleField(self.config.K, self.a[-1].copy(), self.b[-1].copy())

    def record_arrays(self) -> dict[str, np.ndarray]:
        cols = diags.DiagnosticsRecord.csv_columns(circle=True)
        return {name: np.array([getattr(r, name) for r in self.records]) for name in cols}

    def summary(self) -> dict:
        arr = self.record_arrays()
        angles, mags, heat = omega_track(self)
        out = {
            "solver": "circle",
            "config": asdict(self.config),
            "sigma": self.sigma,
            "regime": classify_regime(_N, self.sigma),
            "t_final": float(self.t[-1]),
            "final_a": [float(v) for v in self.a[-1]],
            "final_b": [float(v) for v in self.b[-1]],
            "j_final": float(arr["j"][-1]),
            "l2_final": float(arr["l2"][-1]),
            "dist_to_fvm_final": float(arr["dist_to_fvm"][-1]),
            "heat_regime": heat,
            "omega_final": None if heat else float(angles[-1]),
            "steps": self.info.get("steps"),
            "rejected_steps": self.info.get("rejected"),
        }
        resF, resH = diags.conservation_check(self.t, arr["F"], arr["D"],
                                              arr["H"], arr["Dtilde"])
        out["max_F_residual"] = resF
        out["max_H_residual"] = resH
        return out


def omega_track(series: CircleSeries):
    """Continuously unwrapped mean-direction angle and |J| along a run.

    Returns (angles, magnitudes, heat_flag); when |J| vanishes at any snapshot
    the direction is undefined and the heat flag is set instead.
    """
    arr = series.record_arrays()
    J1, J2 = arr["J1"], arr["J2"]
    mags = np.hypot(J1, J2)
    if np.any(mags == 0.0):
        return None, mags, True
    return np.unwrap(np.arctan2(J2, J1)), mags, False


def run_circle(config: CircleConfig, ic: CircleField) -> CircleSeries:
    """Integrate the circle dynamics from an explicit initial field."""
    config.validate()
    sigma = config.effective_sigma()
    K = config.K
    if ic.K != K:
        raise ValueError("initial field truncation does not match config.K")
    ev = _CircleEval(K, config.grid_size)

    fvm_kappa = None
    if classify_regime(_N, sigma) == "supercritical":
        fvm_kappa = solve_kappa(_N, sigma)

    records: list[diags.DiagnosticsRecord] = []
    rows_a: list[np.ndarray] = []
    rows_b: list[np.ndarray] = []

    def on_snapshot(t: float, s: np.ndarray) -> None:
        a = np.concatenate(([0.0], s[:K]))
        b = np.concatenate(([0.0], s[K:]))
        records.append(_circle_record(t, a, b, ev, sigma, config.clip_floor,
                                      config.hs_order, fvm_kappa))
        rows_a.append(a)
        rows_b.append(b)

    t_grid = snapshot_grid(config.t_end, config.output_stride)
    k2 = np.arange(1, K + 1, dtype=float) ** 2
    decay = sigma * np.concatenate((k2, k2))
    state0 = np.concatenate((ic.a[1:], ic.b[1:]))
    dt_max = config.dt_max if config.dt_max is not None else config.output_stride
    stats = integrate(state0, decay, make_nonlinear_circle(K), t_grid, on_snapshot,
                      rel_tol=config.rel_tol, dt_init=config.dt_init, dt_max=dt_max)

    return CircleSeries(config=config, sigma=sigma, t=t_grid,
                        a=np.array(rows_a), b=np.array(rows_b), records=records,
                        info={"steps": stats.steps, "rejected": stats.rejected})
