"""
Spectral Galerkin model
=======================

``A = d^2/dx^2 + 1`` on ``(0, pi)`` with Dirichlet boundary conditions,
expanded in the orthonormal sine basis ``e_k(x) = sqrt(2/pi) sin(k x)``,
so ``A e_k = (1 - k^2) e_k``: the kernel is spanned by ``e_1`` and the
spectral gap on the stable part is 3. The nonlinearity is ``F(u) = -u^3``.

Fields are plain arrays of sine coefficients with the mode index on the
last axis; every operation broadcasts over leading (replica / column)
axes. Products are formed on an interior collocation grid of
``M - 1`` points, ``x_j = pi j / M`` with ``M = collocation_factor * N``;
this grid integrates trigonometric polynomials of degree below ``2M``
exactly, so for ``M >= 2N + 1`` the cubic is projected without aliasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .fbm import default_mode_weights

__all__ = [
    "ModelSpec",
    "eigenvalue",
    "basis_vector",
    "project_kernel",
    "project_stable",
    "to_grid",
    "from_grid",
    "collocation_points",
    "nonlinearity",
    "jacobian_apply",
    "fc_coefficient",
    "fc",
    "dfc",
    "norm",
    "lp_norm",
    "inner",
    "write_field_csv",
]


@dataclass(frozen=True)
class ModelSpec:
    n_modes: int = 64
    nu: float = 0.0
    sigma: float = 0.0
    hurst: float = 0.5
    mode_weights: tuple[float, ...] | None = None
    collocation_factor: int = 4
    nonlinear: bool = True

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0 < self.hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")
        if self.collocation_factor < 1:
            raise ValueError("collocation_factor must be a positive integer")
        q = self.mode_weights
        q = default_mode_weights(self.n_modes) if q is None else np.asarray(q, float)
        if q.shape != (self.n_modes,) or np.any(q <= 0):
            raise ValueError("mode_weights must be n_modes positive reals")
        object.__setattr__(self, "mode_weights", tuple(float(x) for x in q))

    @property
    def eigenvalues(self) -> np.ndarray:
        k = np.arange(1, self.n_modes + 1, dtype=float)
        return 1.0 - k**2

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.mode_weights)

    @property
    def grid_size(self) -> int:
        return self.collocation_factor * self.n_modes

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace

        if "n_modes" in changes and "mode_weights" not in changes:
            changes["mode_weights"] = None
        return replace(self, **changes)


def eigenvalue(k: int, spec: ModelSpec) -> float:
    """Eigenvalue ``1 - k^2`` of ``A`` for mode ``k`` (1-based)."""
    if not 1 <= k <= spec.n_modes:
        raise IndexError(f"mode {k} outside 1..{spec.n_modes}")
    return 1.0 - k * k


def basis_vector(k: int, n_modes: int) -> np.ndarray:
    e = np.zeros(n_modes)
    e[k - 1] = 1.0
    return e


def project_kernel(u):
    return np.asarray(u)[..., 0]


def project_stable(u) -> np.ndarray:
    out = np.array(u, dtype=float, copy=True)
    out[..., 0] = 0.0
    return out


@lru_cache(maxsize=16)
def _sine_matrix(n_modes: int, grid_size: int) -> np.ndarray:
    # S[j, k] = e_{k+1}(x_j) on the interior points x_j = pi j / M
    x = np.pi * np.arange(1, grid_size) / grid_size
    k = np.arange(1, n_modes + 1)
    s = np.sqrt(2.0 / np.pi) * np.sin(np.outer(x, k))
    s.flags.writeable = False
    return s


def collocation_points(spec: ModelSpec) -> np.ndarray:
    m = spec.grid_size
    return np.pi * np.arange(1, m) / m


def to_grid(u, spec: ModelSpec) -> np.ndarray:
    """Evaluate a field on the collocation grid."""
    return np.asarray(u) @ _sine_matrix(spec.n_modes, spec.grid_size).T


def from_grid(g, spec: ModelSpec) -> np.ndarray:
    """Galerkin projection of grid values onto the first ``n_modes`` sine modes."""
    m = spec.grid_size
    return (np.pi / m) * (np.asarray(g) @ _sine_matrix(spec.n_modes, m))


def nonlinearity(u, spec: ModelSpec) -> np.ndarray:
    """Sine coefficients of ``-u(x)^3``."""
    g = to_grid(u, spec)
    return from_grid(-(g**3), spec)


def jacobian_apply(u, h, spec: ModelSpec) -> np.ndarray:
    """``DF(u) h = -3 u^2 h``; ``u`` broadcasts against ``h`` (e.g. ``u[..., None, :]``)."""
    gu = to_grid(u, spec)
    gh = to_grid(h, spec)
    return from_grid(-3.0 * gu**2 * gh, spec)


@lru_cache(maxsize=1)
def fc_coefficient() -> float:
    """``c_F = int_0^pi e_1^4 dx`` (equals ``3 / (2 pi)``)."""
    val, _ = integrate.quad(
        lambda x: (2.0 / np.pi) ** 2 * np.sin(x) ** 4, 0.0, np.pi, epsabs=1e-14, epsrel=1e-14
    )
    return float(val)


def fc(b, c_cubic: float | None = None):
    c = fc_coefficient() if c_cubic is None else c_cubic
    return -c * np.asarray(b) ** 3


def dfc(b, c_cubic: float | None = None):
    c = fc_coefficient() if c_cubic is None else c_cubic
    return -3.0 * c * np.asarray(b) ** 2


def inner(u, v) -> np.ndarray:
    return np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def norm(u) -> np.ndarray:
    """H-norm via Parseval."""
    return np.linalg.norm(u, axis=-1)


def lp_norm(u, spec: ModelSpec, p: float = 4.0) -> np.ndarray:
    """``L^p(0, pi)`` norm by collocation quadrature (exact for ``|u|^p`` band-limited)."""
    g = to_grid(u, spec)
    return ((np.pi / spec.grid_size) * np.sum(np.abs(g) ** p, axis=-1)) ** (1.0 / p)


def write_field_csv(u, dest) -> None:
    u = np.asarray(u, dtype=float)
    data = np.column_stack([np.arange(1, len(u) + 1), u])
    np.savetxt(dest, data, delimiter=",", header="mode,coefficient", comments="", fmt=["%d", "%.17g"])
