"""
Amplitude equations
===================

Scalar SDEs on the slow time scale,

    db = (a b - c b^3) dT + s d beta^H(T),

covering the unstable normal form (``a = 1``), the equation at the
bifurcation point (``a = 0``) and its small positive shift. Their
linearization is one-dimensional, so the finite-time Lyapunov exponent is
the time average of ``a - 3 c b^2`` along the path.

Paths are arrays with time on the last axis; everything broadcasts over
leading replica axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fbm import ScalarPath, sample_fgn_batch, substream

__all__ = [
    "AeSpec",
    "AePath",
    "simulate_ae",
    "pitchfork_closed_form",
    "ae_ftle",
    "ae_ftle_series",
    "noise_smallness_event",
    "default_eta",
    "trapezoid_weights",
    "occupation_time",
    "occupation_series",
    "slow_noise",
    "occupation_study",
    "estimate_p_theta",
    "write_ae_csv",
]

BLOWUP = 1e6


@dataclass(frozen=True)
class AeSpec:
    a: float = 1.0
    cubic: float = 1.0
    noise_amp: float = 1.0
    hurst: float = 0.5
    dt_slow: float = 1e-3
    t0_slow: float = 1.0
    b0: float = 0.0

    def __post_init__(self):
        if self.cubic < 0 or self.noise_amp < 0:
            raise ValueError("cubic and noise_amp must be nonnegative")
        if not 0 < self.hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")
        if not (self.dt_slow > 0 and self.t0_slow > 0):
            raise ValueError("dt_slow and t0_slow must be positive")
        self.n_steps

    @property
    def n_steps(self) -> int:
        r = self.t0_slow / self.dt_slow
        n = int(round(r))
        if n < 1 or abs(r - n) > 1e-9 * r:
            raise ValueError(f"t0_slow / dt_slow = {r!r} is not an integer")
        return n

    def drift(self, b):
        return self.a * b - self.cubic * b**3


@dataclass(frozen=True)
class AePath:
    times: np.ndarray
    b_values: np.ndarray

    def __post_init__(self):
        for name in ("times", "b_values"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def _increments(noise, spec: AeSpec) -> np.ndarray:
    if isinstance(noise, ScalarPath):
        if abs(noise.dt - spec.dt_slow) > 1e-12 * spec.dt_slow:
            raise ValueError(f"noise step {noise.dt} differs from dt_slow {spec.dt_slow}")
        inc = noise.increments
    else:
        inc = np.asarray(noise, dtype=float)
    if inc.shape[-1] < spec.n_steps:
        raise ValueError("noise does not cover [0, t0_slow]")
    return inc[..., : spec.n_steps]


def simulate_ae(spec: AeSpec, noise) -> AePath:
    """Euler-Maruyama with additive fractional increments.

    ``noise`` is a :class:`ScalarPath` on the ``dt_slow`` grid or an array of
    increments shaped ``(..., n_steps)``.
    """
    inc = _increments(noise, spec)
    n, h = spec.n_steps, spec.dt_slow
    b = np.empty(inc.shape[:-1] + (n + 1,))
    b[..., 0] = spec.b0
    cur = np.full(inc.shape[:-1], float(spec.b0))
    kick = spec.noise_amp * inc
    for j in range(n):
        cur = cur + h * (spec.a * cur - spec.cubic * cur**3) + kick[..., j]
        if np.any(~(np.abs(cur) <= BLOWUP)):
            raise FloatingPointError(f"|b| exceeded {BLOWUP:g} at T = {(j + 1) * h:.6g}")
        b[..., j + 1] = cur
    return AePath(h * np.arange(n + 1), b)


def pitchfork_closed_form(b0: float, T: float) -> tuple[float, float]:
    """Exact solution of ``db = (b - b^3) dT`` and its FTLE on ``[0, T]``."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    g = np.expm1(2.0 * T)
    b = np.sign(b0) * np.sqrt(b0 * b0 * (g + 1.0) / (1.0 + b0 * b0 * g))
    if T == 0:
        return float(b0), float(1.0 - 3.0 * b0 * b0)
    lam = 1.0 - 1.5 * np.log1p(b0 * b0 * g) / T
    return float(b), float(lam)


def trapezoid_weights(n_points: int, dt: float) -> np.ndarray:
    w = np.full(n_points, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def ae_ftle(path: AePath, a: float, cubic_coeff: float):
    """``a + (1/T) int_0^T -3 c b(s)^2 ds`` by the trapezoidal rule."""
    b = path.b_values
    if b.shape[-1] < 2:
        raise ValueError("path needs at least two points")
    T = path.horizon
    if T <= 0:
        raise ValueError("FTLE needs T > 0")
    w = trapezoid_weights(b.shape[-1], path.dt)
    return a - 3.0 * cubic_coeff * (b * b) @ w / T


def ae_ftle_series(b, dt: float, a: float, cubic_coeff: float) -> np.ndarray:
    """FTLE over ``[0, T_j]`` for every grid time ``T_j > 0``; shape ``(..., n)``."""
    b2 = np.asarray(b) ** 2
    cum = np.cumsum(0.5 * dt * (b2[..., 1:] + b2[..., :-1]), axis=-1)
    T = dt * np.arange(1, b2.shape[-1])
    return a - 3.0 * cubic_coeff * cum / T


def noise_smallness_event(noise, eta: float, T: float, dt: float | None = None):
    """``sup_{[0, T]} |beta| <= eta / 2`` on the sampled grid.

    Takes a :class:`ScalarPath` or an array of path values (time last) with ``dt``.
    """
    if isinstance(noise, ScalarPath):
        values, dt = noise.values, noise.dt
    else:
        values = np.asarray(noise)
    n = int(round(T / dt))
    if n + 1 > values.shape[-1]:
        raise ValueError("path does not cover [0, T]")
    res = np.max(np.abs(values[..., : n + 1]), axis=-1) <= 0.5 * eta
    return bool(res) if np.ndim(res) == 0 else res


def default_eta(noise_amp: float, t0: float, safety: float = 0.95) -> float:
    """Largest admissible ``eta`` with ``(1 + amp) eta e^{T0} < 1/2``, times ``safety``."""
    return safety * 0.5 / ((1.0 + noise_amp) * np.exp(t0))


def occupation_time(path: AePath, theta: float):
    """Time spent in ``|b| <= theta``; endpoints carry half weight."""
    b = path.b_values
    w = trapezoid_weights(b.shape[-1], path.dt)
    return (np.abs(b) <= theta) @ w


def occupation_series(b, dt: float, theta: float) -> np.ndarray:
    """Occupation time over ``[0, T_j]`` for every grid time ``T_j > 0``."""
    ind = (np.abs(np.asarray(b)) <= theta).astype(float)
    return np.cumsum(0.5 * dt * (ind[..., 1:] + ind[..., :-1]), axis=-1)


def slow_noise(n_steps: int, dt: float, hurst: float, seed: int, replicas: Sequence[int]) -> np.ndarray:
    """Slow-scale fGn increments, one row per replica (substream ``(seed, r, 1)``)."""
    rngs = [substream(seed, r, 1) for r in replicas]
    return sample_fgn_batch(n_steps, dt, hurst, rngs)


def occupation_study(spec: AeSpec, thetas, replicas: int, seed: int = 0, chunk: int = 4096):
    """Occupation times for every replica and level, on common random numbers.

    Returns an array of shape ``(replicas, len(thetas))``.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    out = np.empty((replicas, len(thetas)))
    for lo in range(0, replicas, chunk):
        ids = range(lo, min(lo + chunk, replicas))
        inc = slow_noise(spec.n_steps, spec.dt_slow, spec.hurst, seed, ids)
        path = simulate_ae(spec, inc)
        for j, th in enumerate(thetas):
            out[lo : lo + len(ids), j] = occupation_time(path, th)
    return out


def estimate_p_theta(spec: AeSpec, theta, replicas: int, seed: int = 0):
    """Monte Carlo estimate of ``int_0^T0 P(|b(s)| <= theta) ds`` (the mean occupation time)."""
    if replicas < 100:
        raise ValueError("estimate_p_theta needs at least 100 replicas")
    occ = occupation_study(spec, theta, replicas, seed)
    p = occ.mean(axis=0)
    return float(p[0]) if np.ndim(theta) == 0 else p


def write_ae_csv(path: AePath, dest) -> None:
    b = path.b_values.reshape(-1, len(path.times)).T
    cols = ["time"] + (["b"] if b.shape[1] == 1 else [f"b{i}" for i in range(b.shape[1])])
    np.savetxt(dest, np.column_stack([path.times, b]), delimiter=",", header=",".join(cols),
               comments="", fmt="%.17g")
