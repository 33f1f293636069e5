"""
First variation and finite-time Lyapunov exponents
==================================================

The linearization ``dv = [A v + nu v + DF(u) v] dt`` carries no noise term
(the noise is additive), so it is integrated with the same exponential
Euler factors as the state, holding ``u`` at the left end of each step.

Propagators are built column by column from the canonical basis: the
``(..., K, N)`` array ``V`` holds the evolved basis vectors as *rows*, and
``Propagator.matrix`` is its transpose. The FTLE is the log of the largest
singular value divided by the elapsed time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from .fbm import GridError
from .model import ModelSpec, from_grid, jacobian_apply, to_grid
from .spde import SolverConfig, Trajectory, _check, _unpack_noise, linear_factors

__all__ = [
    "Propagator",
    "step_variation",
    "propagator",
    "ftle",
    "top_singular_value",
    "iterate_with_variation",
    "ftle_along",
    "write_propagator",
]


@dataclass(frozen=True)
class Propagator:
    matrix: np.ndarray
    time: float

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=float)
        if not np.all(np.isfinite(m)):
            raise FloatingPointError("propagator has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def step_variation(v, u_now, spec: ModelSpec, config: SolverConfig) -> np.ndarray:
    """Advance tangent vector(s) ``v`` by one step along ``u_now``.

    ``v`` may be a single field or a stack ``(..., K, N)`` of fields sharing
    the same ``u_now``.
    """
    lin, gain, _ = linear_factors(spec, config)
    v = np.asarray(v, dtype=float)
    out = lin * v
    if spec.nonlinear:
        u = np.asarray(u_now, dtype=float)
        if v.ndim > u.ndim:
            u = u[..., None, :]
        out += gain * jacobian_apply(u, v, spec)
    return out


def top_singular_value(matrix) -> np.ndarray:
    return np.linalg.svd(np.asarray(matrix), compute_uv=False)[..., 0]


def ftle(p: Propagator) -> float:
    """``ln(||U(t)||) / t`` with the Galerkin operator norm."""
    if not p.time > 0:
        raise ValueError("FTLE needs a positive time")
    s = float(top_singular_value(p.matrix))
    if not (np.isfinite(s) and s > 0):
        raise FloatingPointError(f"degenerate propagator (largest singular value {s})")
    return float(np.log(s) / p.time)


def propagator(u_traj: Trajectory, spec: ModelSpec, config: SolverConfig) -> Propagator:
    """Propagator over ``[0, config.t_end]`` along a stored (single) trajectory.

    Within a store stride the stored state is held constant.
    """
    stride = config.dt_fast
    ratio = u_traj.dt / stride
    s = int(round(ratio))
    if s < 1 or abs(ratio - s) > 1e-9 * ratio:
        raise GridError("trajectory spacing is not a multiple of dt_fast")
    n = config.n_steps
    if (n - 1) // s >= len(u_traj.states):
        raise GridError("trajectory does not cover [0, t_end]")
    v = np.eye(spec.n_modes)
    for i in range(n):
        v = step_variation(v, u_traj.states[i // s], spec, config)
    return Propagator(v.T, n * config.dt_fast)


def iterate_with_variation(
    u0, spec: ModelSpec, config: SolverConfig, noise=None, v0=None
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(u, V)`` at every fast step; ``V`` starts at ``v0`` (identity by default).

    Fuses the state step and the variation step so that no trajectory has to
    be stored; numerically identical to :func:`propagator` with stride 1.
    """
    inc, m = _unpack_noise(noise, config)
    lin, gain, kick = linear_factors(spec, config)
    sk = spec.sigma * kick / m
    u = np.array(u0, dtype=float)
    if inc is not None:
        u = np.broadcast_to(u, inc.shape[:-2] + u.shape[-1:]).copy()
    v = np.eye(spec.n_modes) if v0 is None else np.asarray(v0, dtype=float)
    v = np.broadcast_to(v, u.shape[:-1] + v.shape[-2:]).copy()
    yield u, v
    for n in range(config.n_steps):
        if spec.nonlinear:
            # shared grid values of u feed both the state and the tangent update
            gu = to_grid(u, spec)
            dv = from_grid(-3.0 * (gu * gu)[..., None, :] * to_grid(v, spec), spec)
            new_v = lin * v + gain * dv
            new_u = lin * u + gain * from_grid(-(gu**3), spec)
        else:
            new_v = lin * v
            new_u = lin * u
        if inc is not None and spec.sigma != 0:
            new_u += sk * inc[..., n // m, :]
        u, v = new_u, new_v
        _check(u, config.blowup, (n + 1) * config.dt_fast)
        yield u, v


def ftle_along(
    u0,
    spec: ModelSpec,
    config: SolverConfig,
    noise=None,
    times: Sequence[float] | None = None,
    observer: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """FTLEs at the requested fast times (default: ``t_end``), shape ``(..., len(times))``.

    ``observer(n, u)`` is called on every state, which lets callers collect
    path statistics in the same pass.
    """
    times = [config.t_end] if times is None else list(times)
    idx = {}
    for j, t in enumerate(times):
        r = t / config.dt_fast
        n = int(round(r))
        if n < 1 or n > config.n_steps or abs(r - n) > 1e-9 * r:
            raise GridError(f"FTLE time {t} is not a positive grid time within t_end")
        idx.setdefault(n, []).append(j)
    out = None
    for n, (u, v) in enumerate(iterate_with_variation(u0, spec, config, noise)):
        if observer is not None:
            observer(n, u)
        if n in idx:
            s = top_singular_value(v)
            if not np.all(np.isfinite(s) & (s > 0)):
                raise FloatingPointError("degenerate propagator")
            if out is None:
                out = np.empty(s.shape + (len(times),))
            for j in idx[n]:
                out[..., j] = np.log(s) / (n * config.dt_fast)
    return out


def write_propagator(p: Propagator, dest) -> None:
    """CSV matrix dump with a leading ``# time, ftle`` record."""
    header = f"time={p.time:.17g},ftle={ftle(p):.17g}"
    np.savetxt(dest, p.matrix, delimiter=",", header=header, fmt="%.17g")
