"""
Fractional Brownian motion synthesis
====================================

Exact sampling of fractional Gaussian noise (fGn) on a uniform grid by
circulant embedding (Davies-Harte), with a dense Cholesky fallback, plus
the scalar and trace-class Hilbert-space fBm built on top of it.

All randomness flows through :func:`substream`, so a path is a pure
function of ``(seed, replica, mode)`` and replicas can be generated in any
order or in parallel without changing a single bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "FgnSpec",
    "ScalarPath",
    "HilbertNoiseSpec",
    "HilbertPath",
    "FbmError",
    "GridError",
    "fbm_covariance",
    "fgn_autocovariance",
    "substream",
    "sample_fgn",
    "sample_fgn_batch",
    "sample_fbm",
    "rescale_fbm",
    "default_mode_weights",
    "sample_hilbert_fbm",
    "hilbert_increments",
    "write_path_csv",
    "write_path_binary",
    "read_path_binary",
]

TOL_EIG = 1e-10
_HEADER = struct.Struct("<Q d d Q")


class FbmError(ValueError):
    """Invalid fBm parameters or a failed covariance factorization."""


class GridError(ValueError):
    """Time grids that cannot be matched by exact reindexing."""


def _check_hurst(hurst: float) -> None:
    if not 0.0 < hurst < 1.0:
        raise FbmError(f"Hurst index must lie in (0, 1), got {hurst!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FgnSpec:
    n_steps: int
    dt: float
    hurst: float
    seed: int = 0

    def __post_init__(self):
        _check_hurst(self.hurst)
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise FbmError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not self.dt > 0:
            raise FbmError(f"dt must be positive, got {self.dt!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise FbmError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True)
class ScalarPath:
    """A sampled path on the uniform grid ``times[i] = i * dt``."""

    times: np.ndarray
    values: np.ndarray
    hurst: float | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def fbm_covariance(t, s, hurst: float):
    """Covariance ``E[B(t) B(s)]`` of standard fBm with Hurst index ``hurst``."""
    _check_hurst(hurst)
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(t < 0) or np.any(s < 0):
        raise FbmError("fbm_covariance is defined for nonnegative times")
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, hurst: float):
    """Autocovariance of unit-step fGn at integer lag ``k``."""
    _check_hurst(hurst)
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * hurst
    out = 0.5 * (np.abs(k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)
    return float(out) if out.ndim == 0 else out


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; keys are replica/mode indices."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@lru_cache(maxsize=32)
def _embedding_sqrt(n: int, hurst: float) -> np.ndarray | None:
    # first row of the 2n circulant: gamma(0..n), gamma(n-1..1)
    gamma = fgn_autocovariance(np.arange(n + 1), hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -TOL_EIG:
        return None
    out = np.sqrt(np.clip(eig, 0.0, None) / len(row))
    out.flags.writeable = False
    return out


@lru_cache(maxsize=8)
def _cholesky_factor(n: int, hurst: float, dt: float) -> np.ndarray:
    cov = scipy.linalg.toeplitz(fgn_autocovariance(np.arange(n), hurst))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FbmError(
            f"fGn covariance is not numerically positive definite "
            f"(hurst={hurst}, n_steps={n}, dt={dt})"
        ) from exc


def sample_fgn_batch(
    n_steps: int,
    dt: float,
    hurst: float,
    rngs: Sequence[np.random.Generator],
    method: str = "auto",
) -> np.ndarray:
    """Draw one fGn sequence per generator; returns shape ``(len(rngs), n_steps)``.

    Each row consumes only its own generator, so row ``i`` does not depend
    on how many other rows are drawn alongside it.
    """
    _check_hurst(hurst)
    scale = dt**hurst
    root = None if method == "cholesky" else _embedding_sqrt(n_steps, hurst)
    if root is None:
        if method == "circulant":
            raise FbmError(
                f"circulant embedding has negative eigenvalues "
                f"(hurst={hurst}, n_steps={n_steps}, dt={dt})"
            )
        chol = _cholesky_factor(n_steps, hurst, dt)
        z = np.stack([g.standard_normal(n_steps) for g in rngs])
        return scale * (z @ chol.T)
    m = len(root)
    out = np.empty((len(rngs), n_steps))
    rows = max(1, (1 << 22) // m)  # bounds the complex work array to ~64 MB
    for lo in range(0, len(rngs), rows):
        chunk = list(rngs[lo : lo + rows])
        w = np.empty((len(chunk), m), dtype=complex)
        for i, g in enumerate(chunk):
            z = g.standard_normal((2, m))
            w[i].real = z[0]
            w[i].imag = z[1]
        w *= root
        out[lo : lo + len(chunk)] = np.fft.fft(w, axis=-1).real[:, :n_steps]
    out *= scale
    return out


def sample_fgn(spec: FgnSpec, replica: int = 0, method: str = "auto") -> np.ndarray:
    """Stationary fGn increments with step ``spec.dt`` (length ``spec.n_steps``)."""
    rng = substream(spec.seed, replica)
    return sample_fgn_batch(spec.n_steps, spec.dt, spec.hurst, [rng], method)[0]


def sample_fbm(spec: FgnSpec, replica: int = 0, method: str = "auto") -> ScalarPath:
    inc = sample_fgn(spec, replica, method)
    values = np.concatenate([[0.0], np.cumsum(inc)])
    times = spec.dt * np.arange(spec.n_steps + 1)
    return ScalarPath(times, values, spec.hurst, spec.seed)


def _integral_ratio(a: float, b: float, what: str) -> int:
    r = a / b
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-9 * max(1.0, r):
        raise GridError(f"{what}: ratio {r!r} is not a positive integer")
    return k


def rescale_fbm(
    path: ScalarPath, gamma: float, hurst: float, target_dt: float | None = None
) -> ScalarPath:
    """Pathwise rescaling ``T -> gamma**(2H) * B(T / gamma**2)`` by exact reindexing.

    The natural output grid has step ``gamma**2 * path.dt``; ``target_dt`` may
    request any integer multiple of it.
    """
    if not gamma > 0:
        raise GridError(f"gamma must be positive, got {gamma!r}")
    base = gamma**2 * path.dt
    stride = 1 if target_dt is None else _integral_ratio(target_dt, base, "rescale_fbm")
    values = gamma ** (2 * hurst) * path.values[::stride]
    times = base * stride * np.arange(len(values))
    return ScalarPath(times, values, hurst, path.seed)


def default_mode_weights(n_modes: int) -> np.ndarray:
    return 1.0 / np.arange(1, n_modes + 1) ** 2


@dataclass(frozen=True)
class HilbertNoiseSpec:
    n_modes: int
    hurst: float
    n_steps: int
    dt: float
    seed: int = 0
    mode_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        FgnSpec(self.n_steps, self.dt, self.hurst, self.seed)
        if self.n_modes < 1:
            raise FbmError("n_modes must be positive")
        q = self.mode_weights
        q = default_mode_weights(self.n_modes) if q is None else np.asarray(q, float)
        if q.shape != (self.n_modes,) or np.any(q <= 0):
            raise FbmError("mode_weights must be n_modes positive reals")
        object.__setattr__(self, "mode_weights", tuple(float(x) for x in q))

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.mode_weights)


@dataclass(frozen=True)
class HilbertPath:
    """Galerkin coefficients of a Q-fBm; column ``k-1`` carries ``sqrt(q_k) beta_k``."""

    times: np.ndarray
    values: np.ndarray
    hurst: float
    mode_weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape[0] != len(self.times):
            raise ValueError("values must have one row per time point")

    @property
    def n_modes(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def mode(self, k: int) -> ScalarPath:
        """Scalar path of mode ``k`` (1-based)."""
        if not 1 <= k <= self.n_modes:
            raise IndexError(f"mode {k} outside 1..{self.n_modes}")
        return ScalarPath(self.times, self.values[:, k - 1], self.hurst)


def hilbert_increments(
    spec: HilbertNoiseSpec, replicas: Sequence[int], method: str = "auto"
) -> np.ndarray:
    """Increments for a batch of replicas, shape ``(R, n_steps, n_modes)``."""
    rngs = [substream(spec.seed, r, k) for r in replicas for k in range(1, spec.n_modes + 1)]
    inc = sample_fgn_batch(spec.n_steps, spec.dt, spec.hurst, rngs, method)
    inc = inc.reshape(len(replicas), spec.n_modes, spec.n_steps) * np.sqrt(spec.weights)[:, None]
    return np.ascontiguousarray(inc.transpose(0, 2, 1))


def sample_hilbert_fbm(spec: HilbertNoiseSpec, replica: int = 0) -> HilbertPath:
    inc = hilbert_increments(spec, [replica])[0]
    values = np.vstack([np.zeros(spec.n_modes), np.cumsum(inc, axis=0)])
    times = spec.dt * np.arange(spec.n_steps + 1)
    return HilbertPath(times, values, spec.hurst, spec.mode_weights)


def write_path_csv(path: ScalarPath, dest) -> None:
    data = np.column_stack([path.times, path.values])
    np.savetxt(dest, data, delimiter=",", header="time,value", comments="", fmt="%.17g")


def write_path_binary(path: ScalarPath, dest, seed: int | None = None) -> None:
    """Little-endian dump: header (n_steps, dt, hurst, seed) then the float64 values."""
    seed = path.seed if seed is None else seed
    header = _HEADER.pack(path.n_steps, path.dt, path.hurst or 0.0, seed or 0)
    Path(dest).write_bytes(header + path.values.astype("<f8").tobytes())


def read_path_binary(src) -> ScalarPath:
    raw = Path(src).read_bytes()
    n_steps, dt, hurst, seed = _HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if len(values) != n_steps + 1:
        raise ValueError(f"{src}: expected {n_steps + 1} values, found {len(values)}")
    return ScalarPath(dt * np.arange(n_steps + 1), values.copy(), hurst, seed)
