"""Self-checks of the noise generator and the Galerkin model.

Both return plain dictionaries with a ``passed`` flag, so the command line
and the test-suite share one implementation.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import ks_2samp

from .fbm import fbm_covariance, sample_fgn_batch, substream
from .model import (
    ModelSpec,
    fc_coefficient,
    inner,
    jacobian_apply,
    lp_norm,
    nonlinearity,
)
from .stats import loglog_slope

__all__ = ["fbm_check", "model_check", "random_fields"]


def fbm_check(
    hurst: float,
    replicas: int = 5000,
    seed: int = 12345,
    n_steps: int = 64,
    n_points: int = 8,
    max_z: float = 5.0,
    ks_level: float = 0.01,
    scale: float = 0.25,
) -> dict:
    """Covariance and self-similarity of sampled fBm on ``[0, 1]``.

    The covariance of the path at ``n_points`` equispaced times is compared
    entrywise with the exact kernel in units of its Monte Carlo standard
    error. Self-similarity is a two-sample KS test between ``B(1)`` and
    ``scale**(-H) B(scale)`` drawn from disjoint replica sets.
    """
    dt = 1.0 / n_steps
    stride = n_steps // n_points
    rngs = [substream(seed, r) for r in range(2 * replicas)]
    inc = sample_fgn_batch(n_steps, dt, hurst, rngs)
    paths = np.cumsum(inc, axis=1)
    idx = stride * np.arange(1, n_points + 1) - 1
    x = paths[:replicas, idx]
    times = dt * (idx + 1)
    exact = fbm_covariance(times[:, None], times[None, :], hurst)
    prod = x[:, :, None] * x[:, None, :]
    se = prod.std(axis=0, ddof=1) / np.sqrt(replicas)
    z = np.abs(prod.mean(axis=0) - exact) / se
    j = int(round(scale * n_steps)) - 1
    other = paths[replicas:]
    ks = ks_2samp(other[: replicas // 2, -1], scale**-hurst * other[replicas // 2 :, j])
    return {
        "hurst": hurst,
        "replicas": replicas,
        "max_z": float(z.max()),
        "ks_pvalue": float(ks.pvalue),
        "passed": bool(z.max() <= max_z and ks.pvalue >= ks_level),
    }


def random_fields(n: int, spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Random fields with coefficients ``N(0, 1) / k``, shape ``(n, n_modes)``."""
    k = np.arange(1, spec.n_modes + 1)
    return rng.standard_normal((n, spec.n_modes)) / k


def model_check(pairs: int = 1000, seed: int = 12345, n_modes: int = 32) -> dict:
    """Monotonicity of the cubic, sign of its derivative, ``c_F`` and a Taylor test."""
    spec = ModelSpec(n_modes=n_modes)
    rng = substream(seed, 0)
    u, v = random_fields(pairs, spec, rng), random_fields(pairs, spec, rng)
    d = u - v
    lhs = inner(nonlinearity(u, spec) - nonlinearity(v, spec), d)
    monotone = lhs + 0.25 * lp_norm(d, spec, 4) ** 4
    sign = inner(jacobian_apply(u, v, spec), v)
    cf_err = abs(fc_coefficient() - 3 / (2 * np.pi))
    taus = np.array([1e-1, 1e-2, 1e-3, 1e-4])
    uu, hh = u[0], v[0]
    fd = [
        np.linalg.norm((nonlinearity(uu + t * hh, spec) - nonlinearity(uu, spec)) / t
                       - jacobian_apply(uu, hh, spec))
        for t in taus
    ]
    order = loglog_slope(taus, fd)
    return {
        "pairs": pairs,
        "max_monotonicity_margin": float(monotone.max()),
        "max_sign": float(sign.max()),
        "fc_error": float(cf_err),
        "taylor_order": order,
        "passed": bool(monotone.max() <= 1e-10 and sign.max() <= 1e-10
                       and cf_err <= 1e-8 and order >= 0.9),
    }
