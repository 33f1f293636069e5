"""Sampling fractional noise and looking at the cubic model it drives.

Run with ``python demos/noise_and_model.py``.
"""

import numpy as np

from fracftle.checks import fbm_check, model_check
from fracftle.fbm import FgnSpec, sample_fbm
from fracftle.model import ModelSpec, basis_vector
from fracftle.spde import SolverConfig, simulate

# Var B(t) = t^{2H}: the empirical exponent should track H.
for hurst in (0.25, 0.5, 0.75):
    paths = np.stack([sample_fbm(FgnSpec(1024, 1 / 1024, hurst, seed=1), r).values
                      for r in range(400)])
    t = np.arange(1025) / 1024
    sel = [16, 64, 256, 1024]
    slope = np.polyfit(np.log(t[sel]), np.log(paths[:, sel].var(axis=0)), 1)[0]
    print(f"H={hurst}: variance exponent {slope:.3f} (target {2 * hurst:.2f})")

for hurst in (0.3, 0.7):
    res = fbm_check(hurst, replicas=2000)
    print(f"H={hurst}: covariance max z-score {res['max_z']:.2f}, KS p-value {res['ks_pvalue']:.2f}")

res = model_check(pairs=500)
print(f"model check passed: {res['passed']} (Taylor order {res['taylor_order']:.3f})")

# Past the bifurcation the kernel mode settles near sqrt(nu / c_F).
spec = ModelSpec(n_modes=32, nu=0.1)
traj = simulate(0.01 * basis_vector(1, 32), spec, SolverConfig(dt_fast=0.01, t_end=200.0))
print(f"nu=0.1: kernel amplitude {traj.states[-1, 0]:.4f}, "
      f"predicted {np.sqrt(0.1 / (3 / (2 * np.pi))):.4f}")
