"""Integrating-factor Heun time stepping with step-doubling adaptivity.

Both spectral solvers reduce to coefficient systems

    dc/dt = -decay * c + N(c)

with a fixed nonnegative ``decay`` vector (the stiff diffusion diagonal) and a
mild nonlinearity N.  The diagonal is integrated exactly with exp(-decay dt);
the Lawson (integrating-factor) Heun scheme treats N explicitly at second
order:

    cp    = E (c + dt N(c)),        E = exp(-decay dt)
    c_new = E c + dt/2 (E N(c) + N(cp)).

Adaptivity compares one full step against two half steps; the Richardson
error estimate of the half-step result is |c_full - c_half| / 3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BlowUpError", "StepStats", "integrate", "snapshot_grid"]

BLOWUP_NORM = 1e12


class BlowUpError(RuntimeError):
    """Numerical blow-up: the coefficient norm passed the abort threshold."""

    def __init__(self, t: float, state: np.ndarray):
        super().__init__(f"solution norm exceeded {BLOWUP_NORM:g} at t={t:g}")
        self.t = t
        self.state = state


@dataclass
class StepStats:
    steps: int = 0
    rejected: int = 0
    dt_min: float = field(default=float("inf"))
    dt_max: float = 0.0

    def record(self, dt: float) -> None:
        self.steps += 1
        self.dt_min = min(self.dt_min, dt)
        self.dt_max = max(self.dt_max, dt)


def snapshot_grid(t_end: float, stride: float) -> np.ndarray:
    """Snapshot times 0, stride, 2*stride, ..., always ending exactly at t_end."""
    if t_end <= 0 or stride <= 0:
        raise ValueError("t_end and stride must be positive")
    m = max(1, int(round(t_end / stride)))
    grid = stride * np.arange(m + 1)
    if grid[-1] > t_end + 1e-12 or abs(grid[-1] - t_end) <= 1e-12 * max(1.0, t_end):
        grid[-1] = t_end
    else:
        grid = np.append(grid, t_end)
    return grid


def _heun_step(c, dt, E, nonlin):
    k1 = nonlin(c)
    cp = E * (c + dt * k1)
    return E * c + 0.5 * dt * (E * k1 + nonlin(cp))


def integrate(c0: np.ndarray, decay: np.ndarray, nonlin, t_grid: np.ndarray,
              on_snapshot, rel_tol: float | None = 1e-8, dt_init: float = 1e-3,
              dt_max: float | None = None) -> StepStats:
    """March from t_grid[0] to t_grid[-1], calling on_snapshot(t, c) at each node.

    ``rel_tol`` selects adaptive step-doubling; ``None`` runs at the fixed step
    ``dt_init`` (snapshot spacings must then be near-multiples of it).  Raises
    :class:`BlowUpError` if the max-norm of the state passes 1e12.
    """
    c = np.array(c0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    if dt_init <= 0:
        raise ValueError("dt_init must be positive")
    stats = StepStats()
    exp_cache: dict[float, np.ndarray] = {}

    def efac(dt: float) -> np.ndarray:
        E = exp_cache.get(dt)
        if E is None:
            E = np.exp(-decay * dt)
            exp_cache[dt] = E
        return E

    def check(t: float) -> None:
        m = float(np.max(np.abs(c)))
        if not np.isfinite(m) or m > BLOWUP_NORM:
            raise BlowUpError(t, c)

    on_snapshot(float(t_grid[0]), c)
    dt = float(dt_init)
    cap = float(dt_max) if dt_max is not None else float("inf")
    t_cur = float(t_grid[0])

    for t_next in t_grid[1:]:
        t_next = float(t_next)
        while t_next - t_cur > 1e-14 * max(1.0, abs(t_next)):
            if rel_tol is None:
                h = min(dt, t_next - t_cur)
                c = _heun_step(c, h, efac(h), nonlin)
                t_cur += h
                stats.record(h)
                check(t_cur)
                continue
            h = min(dt, cap, t_next - t_cur)
            c_full = _heun_step(c, h, efac(h), nonlin)
            Eh = efac(0.5 * h)
            c_half = _heun_step(_heun_step(c, 0.5 * h, Eh, nonlin), 0.5 * h, Eh, nonlin)
            scale = max(float(np.max(np.abs(c_half))), 1e-8)
            err = float(np.max(np.abs(c_full - c_half))) / (3.0 * scale)
            if not np.isfinite(err):
                raise BlowUpError(t_cur, c_half)
            if err <= rel_tol:
                c = c_half
                t_cur += h
                stats.record(h)
                check(t_cur)
                grow = 0.9 * (rel_tol / max(err, 1e-300)) ** (1.0 / 3.0)
                dt = min(h * min(4.0, max(0.2, grow)), cap)
            else:
                stats.rejected += 1
                dt = h * max(0.2, 0.9 * (rel_tol / err) ** (1.0 / 3.0))
        t_cur = t_next
        on_snapshot(t_cur, c)
    return stats
