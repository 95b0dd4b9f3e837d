"""Interacting particle system on S^{n-1} behind the mean-field dynamics.

N unit vectors omega_k relax toward their empirical mean J = (1/N) sum omega_j
under spherical Brownian noise of intensity sqrt(2 sigma):

    d omega_k = (Id - omega_k omega_k^T)(J dt + sqrt(2 sigma) dB_k).

Discretization is projected Euler-Maruyama with renormalization: tangential
drift and noise are applied against the frozen pre-step state and the result
is pulled back to the sphere.  The renormalization carries an O(dt) weak bias,
which the statistical acceptance bands include.

Randomness is counter-based (Philox) keyed by the run seed: the noise block of
step s is drawn from a generator whose 256-bit counter is jumped to s * 2^128,
and particle k always consumes row k of that block.  Trajectories are
therefore bit-reproducible for a fixed (seed, config) regardless of how the
per-step arithmetic is parallelized.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field as dc_field

import numpy as np

from .equilibria import _check_kappa

__all__ = [
    "ParticleEnsemble",
    "ParticleSeries",
    "em_step",
    "sample_fvm",
    "sample_uniform",
    "empirical_flux",
    "run_particles",
    "write_positions_dump",
    "read_positions_dump",
]

_IC_COUNTER_OFFSET = 1 << 192  # RNG region reserved for initial sampling
_MAGIC = b"DOIPART1"


def _philox(seed: int, counter: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


def _step_rng(seed: int, step_index: int) -> np.random.Generator:
    return _philox(seed, step_index * (1 << 128))


@dataclass
class ParticleEnsemble:
    n: int
    N: int
    positions: np.ndarray   # (N, n), unit rows
    t: float
    seed: int
    dt: float
    step_count: int = 0
    _xi: np.ndarray | None = dc_field(default=None, repr=False, compare=False)
    _tmp: np.ndarray | None = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        if self.positions.shape != (self.N, self.n):
            raise ValueError(f"positions must have shape ({self.N}, {self.n})")

    def scratch(self) -> tuple[np.ndarray, np.ndarray]:
        if self._xi is None or self._xi.shape != self.positions.shape:
            self._xi = np.empty_like(self.positions)
            self._tmp = np.empty_like(self.positions)
        return self._xi, self._tmp

    def renormalize(self) -> None:
        self.positions /= np.linalg.norm(self.positions, axis=1, keepdims=True)


def empirical_flux(positions: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean direction vector J = (1/N) sum omega_k and its magnitude."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] < 1:
        raise ValueError("positions must be a nonempty (N, n) array")
    J = positions.mean(axis=0)
    return J, float(np.linalg.norm(J))


def em_step(ens: ParticleEnsemble, sigma: float) -> ParticleEnsemble:
    """One projected Euler-Maruyama step (in place).

    J is computed once from the pre-step state; each particle then receives
    the tangential parts of J dt and sqrt(2 sigma dt) xi_k before being
    renormalized.  Degenerate updates (vanishing norm) re-draw the offending
    noise rows; with tangential increments the candidate norm is >= the
    current one, so this path has probability ~0 and exists as a guard.
    """
    if ens.dt <= 0:
        raise ValueError("dt must be positive")
    pos = ens.positions
    N, n = pos.shape
    J = pos.mean(axis=0)
    rng = _step_rng(ens.seed, ens.step_count)
    amp = math.sqrt(2.0 * sigma * ens.dt)
    xi, tmp = ens.scratch()
    rng.standard_normal(out=xi)
    xi *= amp
    xi += ens.dt * J
    dot = np.einsum("ij,ij->i", pos, xi)
    np.multiply(pos, dot[:, None], out=tmp)
    xi -= tmp
    pos += xi
    nrm2 = np.einsum("ij,ij->i", pos, pos)
    bad = nrm2 < 1e-16
    tries = 0
    while np.any(bad):
        rows = np.nonzero(bad)[0]
        old = pos[rows] - xi[rows]
        fresh = amp * rng.standard_normal((rows.size, n)) + ens.dt * J
        fresh -= (old * fresh).sum(axis=1, keepdims=True) * old
        pos[rows] = old + fresh
        xi[rows] = fresh
        nrm2[rows] = np.einsum("ij,ij->i", pos[rows], pos[rows])
        bad = nrm2 < 1e-16
        tries += 1
        if tries > 100:
            raise ArithmeticError("persistent degenerate renormalization")
    pos /= np.sqrt(nrm2)[:, None]
    ens.step_count += 1
    ens.t += ens.dt
    return ens


def sample_uniform(n: int, N: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((N, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_cos_angle(n: int, kappa: float, N: int, rng: np.random.Generator,
                      grid: int = 8192) -> np.ndarray:
    """x = cos(theta) from the marginal ~ exp(kappa x)(1-x^2)^{(n-3)/2}.

    Inverse CDF in the theta variable, where the density
    exp(kappa cos t) sin^{n-2}(t) is smooth for every n >= 2; the tabulated
    CDF is inverted by monotone piecewise-linear interpolation.
    """
    t = np.linspace(0.0, np.pi, grid + 1)
    # shift the exponent so large kappa cannot overflow
    dens = np.exp(kappa * (np.cos(t) - 1.0)) * np.sin(t) ** (n - 2)
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))))
    cdf /= cdf[-1]
    u = rng.random(N)
    return np.cos(np.interp(u, cdf, t))


def sample_fvm(n: int, kappa: float, omega, N: int, seed: int | None = None,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """N i.i.d. draws from the Fisher-Von Mises density around the axis omega.

    The axial cosine comes from the tabulated inverse CDF of the 1-D marginal;
    the orthogonal component is uniform on the equatorial sphere S^{n-2}.
    """
    _check_kappa(kappa)
    if rng is None:
        if seed is None:
            raise ValueError("either seed or rng must be given")
        rng = _philox(seed, _IC_COUNTER_OFFSET)
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (n,):
        raise ValueError(f"axis must be a vector of length {n}")
    omega = omega / np.linalg.norm(omega)
    x = _sample_cos_angle(n, kappa, N, rng)
    g = rng.standard_normal((N, n))
    g -= np.outer(g @ omega, omega)
    gn = np.linalg.norm(g, axis=1)
    # a zero tangential draw is measure-zero; nudge to the first basis vector
    flat = gn < 1e-12
    if np.any(flat):
        fallback = np.zeros(n)
        fallback[np.argmin(np.abs(omega))] = 1.0
        fallback -= (fallback @ omega) * omega
        g[flat] = fallback
        gn[flat] = np.linalg.norm(fallback)
    v = g / gn[:, None]
    pos = x[:, None] * omega + np.sqrt(np.maximum(0.0, 1.0 - x * x))[:, None] * v
    return pos / np.linalg.norm(pos, axis=1, keepdims=True)


@dataclass
class ParticleSeries:
    n: int
    N: int
    sigma: float
    dt: float
    seed: int
    t: np.ndarray
    J: np.ndarray        # (S, n)
    J_norm: np.ndarray
    final_positions: np.ndarray

    def mean_J_norm(self, t_lo: float, t_hi: float) -> float:
        sel = (self.t >= t_lo) & (self.t <= t_hi)
        if not np.any(sel):
            raise ValueError("empty averaging window")
        return float(self.J_norm[sel].mean())


def run_particles(n: int, N: int, sigma: float, dt: float, t_end: float, seed: int,
                  ic: str = "uniform", kappa: float | None = None,
                  axis=None, record_stride: int = 1) -> ParticleSeries:
    """Simulate to t_end, recording the empirical flux every record_stride steps.

    ``ic`` is 'uniform', 'fvm' (requires kappa; axis defaults to +e1) or
    'aligned'.  Identical (seed, config) reproduce byte-identical output.
    """
    if ic not in ("uniform", "fvm", "aligned"):
        raise ValueError(f"unknown particle IC {ic!r}")
    if dt <= 0 or t_end <= 0 or N < 1:
        raise ValueError("need dt > 0, t_end > 0, N >= 1")
    rng_ic = _philox(seed, _IC_COUNTER_OFFSET)
    axis_vec = np.zeros(n)
    axis_vec[0] = 1.0
    if axis is not None:
        axis_vec = np.asarray(axis, dtype=float)
        axis_vec = axis_vec / np.linalg.norm(axis_vec)
    if ic == "uniform":
        pos = sample_uniform(n, N, rng_ic)
    elif ic == "fvm":
        if kappa is None:
            raise ValueError("fvm IC requires kappa")
        pos = sample_fvm(n, kappa, axis_vec, N, rng=rng_ic)
    else:
        pos = np.tile(axis_vec, (N, 1))
    ens = ParticleEnsemble(n=n, N=N, positions=pos, t=0.0, seed=seed, dt=dt)

    steps = int(round(t_end / dt))
    ts = [0.0]
    J0, _ = empirical_flux(ens.positions)
    Js = [J0]
    for s in range(steps):
        em_step(ens, sigma)
        if (s + 1) % record_stride == 0 or s == steps - 1:
            J, _ = empirical_flux(ens.positions)
            ts.append(ens.t)
            Js.append(J)
    J_arr = np.array(Js)
    return ParticleSeries(n=n, N=N, sigma=sigma, dt=dt, seed=seed,
                          t=np.array(ts), J=J_arr,
                          J_norm=np.linalg.norm(J_arr, axis=1),
                          final_positions=ens.positions.copy())


def write_positions_dump(path, positions: np.ndarray) -> None:
    """Binary dump: 16-byte header (magic 'DOIPART1', u32 n, u32 N) followed by
    the little-endian float64 positions, row-major N x n."""
    positions = np.ascontiguousarray(positions, dtype="<f8")
    N, n = positions.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sII", _MAGIC, n, N))
        fh.write(positions.tobytes())


def read_positions_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n, N = struct.unpack("<8sII", fh.read(16))
        if magic != _MAGIC:
            raise ValueError(f"bad positions dump magic: {magic!r}")
        data = np.frombuffer(fh.read(8 * n * N), dtype="<f8")
    return data.reshape(N, n).copy()
