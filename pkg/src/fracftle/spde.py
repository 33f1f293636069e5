"""
Time integration of the Galerkin SPDE
=====================================

Integrates ``du = [A u + nu u + F(u)] dt + sigma dW^H`` and the stochastic
convolution ``Z(t) = int_0^t e^{A(t-s)} dW_s`` mode by mode. The linear
part is exact (exponential Euler); the cubic is explicit; the fractional
noise enters through its plain grid increments.

States may carry leading batch axes, so one call integrates many
replicas at once. Noise is given as per-mode increments on a grid whose
step is an integer multiple ``m`` of ``dt_fast``; each increment is then
spread evenly over the ``m`` substeps.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, is_dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import numpy as np

from .fbm import GridError, HilbertPath
from .model import ModelSpec, nonlinearity

__all__ = [
    "SolverConfig",
    "Trajectory",
    "BlowUpError",
    "phi1",
    "linear_factors",
    "noise_substeps",
    "iterate",
    "step",
    "simulate",
    "stochastic_convolution",
    "write_trajectory",
]

SCHEMES = ("exponential_euler", "semi_implicit")


class BlowUpError(FloatingPointError):
    """The state left the configured ball (mis-configuration guard)."""


@dataclass(frozen=True)
class SolverConfig:
    dt_fast: float = 1e-3
    t_end: float = 1.0
    scheme: str = "exponential_euler"
    store_stride: int = 1
    blowup: float = 1e6

    def __post_init__(self):
        if not self.dt_fast > 0 or not self.t_end > 0:
            raise ValueError("dt_fast and t_end must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.store_stride < 1:
            raise ValueError("store_stride must be a positive integer")
        self.n_steps  # validates divisibility

    @property
    def n_steps(self) -> int:
        r = self.t_end / self.dt_fast
        n = int(round(r))
        if n < 1 or abs(r - n) > 1e-9 * r:
            raise GridError(f"t_end / dt_fast = {r!r} is not an integer")
        return n


@dataclass(frozen=True)
class Trajectory:
    """``states[i]`` is the field (possibly batched) at ``times[i]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        for name in ("times", "states"):
            a = np.ascontiguousarray(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        if len(self.times) != len(self.states):
            raise ValueError("one state per time point required")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def at(self, t: float) -> np.ndarray:
        i = int(round(t / self.dt))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridError(f"time {t} is not on the stored grid")
        return self.states[i]


def phi1(z):
    """``(e^z - 1) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


@lru_cache(maxsize=64)
def _factors(eigs: tuple, nu: float, dt: float, scheme: str):
    lam = np.asarray(eigs) + nu
    if scheme == "exponential_euler":
        lin = np.exp(lam * dt)
        return lin, phi1(lam * dt) * dt, np.ones_like(lam)
    r = 1.0 / (1.0 - dt * lam)
    return r, r * dt, r


def linear_factors(spec: ModelSpec, config: SolverConfig):
    """``(L, G, K)`` such that one step reads ``u <- L u + G F(u) + sigma K dW``."""
    return _factors(tuple(spec.eigenvalues), float(spec.nu), float(config.dt_fast), config.scheme)


def noise_substeps(noise_dt: float, dt_fast: float) -> int:
    r = noise_dt / dt_fast
    m = int(round(r))
    if m < 1 or abs(r - m) > 1e-9 * r:
        raise GridError(f"noise step {noise_dt} is not an integer multiple of dt_fast {dt_fast}")
    return m


def _check(u: np.ndarray, bound: float, t: float) -> None:
    nrm = np.sqrt(np.max(np.sum(u * u, axis=-1)))
    if not nrm <= bound:
        raise BlowUpError(f"|u| = {nrm:.3e} exceeds {bound:.1e} at t = {t:.6g}")


def step(u, noise_increment, spec: ModelSpec, config: SolverConfig) -> np.ndarray:
    """One time step; ``noise_increment`` is the increment of the Q-fBm coefficients
    (``sqrt(q_k)`` already applied) over this step, or ``None``."""
    lin, gain, kick = linear_factors(spec, config)
    u = np.asarray(u, dtype=float)
    out = lin * u
    if spec.nonlinear:
        out += gain * nonlinearity(u, spec)
    if noise_increment is not None and spec.sigma != 0:
        out += spec.sigma * kick * noise_increment
    _check(out, config.blowup, np.nan)
    return out


def _unpack_noise(noise, config: SolverConfig):
    if noise is None:
        return None, 1
    if isinstance(noise, HilbertPath):
        inc, ndt = noise.increments, noise.dt
    else:
        inc, ndt = noise
    m = noise_substeps(ndt, config.dt_fast)
    needed = -(-config.n_steps // m)
    if inc.shape[-2] < needed:
        raise GridError(f"noise covers {inc.shape[-2] * ndt} < t_end = {config.t_end}")
    return inc, m


def iterate(u0, spec: ModelSpec, config: SolverConfig, noise=None) -> Iterator[np.ndarray]:
    """Yield ``u`` at every fast step, starting with ``u0``.

    ``noise`` is a :class:`HilbertPath`, a pair ``(increments, noise_dt)`` with
    increments shaped ``(..., n_noise, n_modes)``, or ``None``.
    """
    inc, m = _unpack_noise(noise, config)
    lin, gain, kick = linear_factors(spec, config)
    sk = spec.sigma * kick / m
    u = np.array(u0, dtype=float)
    if inc is not None:
        u = np.broadcast_to(u, inc.shape[:-2] + u.shape[-1:]).copy()
    yield u
    for n in range(config.n_steps):
        new = lin * u
        if spec.nonlinear:
            new += gain * nonlinearity(u, spec)
        if inc is not None and spec.sigma != 0:
            new += sk * inc[..., n // m, :]
        u = new
        _check(u, config.blowup, (n + 1) * config.dt_fast)
        yield u


def simulate(u0, spec: ModelSpec, config: SolverConfig, noise=None) -> Trajectory:
    """Integrate from ``u0`` and keep every ``store_stride``-th state."""
    s = config.store_stride
    kept = [u.copy() for n, u in enumerate(iterate(u0, spec, config, noise)) if n % s == 0]
    times = config.dt_fast * s * np.arange(len(kept))
    return Trajectory(times, np.stack(kept))


def stochastic_convolution(noise, spec: ModelSpec, config: SolverConfig) -> Trajectory:
    """``Z_k(t+h) = e^{alpha_k h} (Z_k(t) + dW_k)``, ``Z(0) = 0`` (no ``nu`` shift)."""
    inc, m = _unpack_noise(noise, config)
    decay = np.exp(spec.eigenvalues * config.dt_fast)
    z = np.zeros(inc.shape[:-2] + (spec.n_modes,))
    s = config.store_stride
    kept = [z.copy()]
    for n in range(config.n_steps):
        z = decay * (z + inc[..., n // m, :] / m)
        if (n + 1) % s == 0:
            kept.append(z.copy())
    times = config.dt_fast * s * np.arange(len(kept))
    return Trajectory(times, np.stack(kept))


def _jsonable(obj):
    if is_dataclass(obj):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_trajectory(traj: Trajectory, dest, **provenance) -> Path:
    """CSV (time, u_1..u_N) plus a JSON sidecar ``<dest>.json`` with provenance."""
    dest = Path(dest)
    states = traj.states.reshape(len(traj.times), -1)
    n = states.shape[1]
    header = ",".join(["time"] + [f"u{k}" for k in range(1, n + 1)])
    np.savetxt(dest, np.column_stack([traj.times, states]), delimiter=",", header=header,
               comments="", fmt="%.17g")
    sidecar = dest.with_suffix(dest.suffix + ".json")
    sidecar.write_text(json.dumps(_jsonable(provenance), indent=2, sort_keys=True))
    return sidecar
