"""How well the scalar amplitude equation tracks the full SPDE.

The SPDE and the amplitude equation are driven by the same slow noise path.
The sup distance between ``u`` and ``eps * b e_1`` shrinks like a power of
``eps`` whose exponent grows with the Hurst index, up to 2.
Run with ``python demos/amplitude_reduction.py`` (about a minute).
"""

import numpy as np

from fracftle.amplitude import AeSpec, ae_ftle, pitchfork_closed_form, simulate_ae
from fracftle.experiments import RegimeConfig, approx_error_study

# the noiseless amplitude equation has a closed form to compare against
spec = AeSpec(1.0, 1.0, 0.0, 0.5, 1e-3, 2.0, 0.1)
path = simulate_ae(spec, np.zeros(spec.n_steps))
b_exact, lam_exact = pitchfork_closed_form(0.1, 2.0)
print(f"noiseless b(2): Euler {path.b_values[-1]:.6f}, exact {b_exact:.6f}")
print(f"FTLE over [0, 2]: Euler {ae_ftle(path, 1.0, 1.0):.4f}, exact {lam_exact:.4f}")

for hurst in (0.3, 0.75):
    res = approx_error_study([0.2, 0.14, 0.1], hurst, RegimeConfig(replicas=6, n_modes=16))
    errs = ", ".join(f"{e:g}: {m:.2e}" for e, m in zip(res["epsilons"], res["median_sup_error"]))
    print(f"H={hurst}: median sup error by eps {errs}")
    print(f"  fitted exponent {res['slope']:.2f}, expected about {res['expected_slope']:.2f}")
