"""Small Monte Carlo runs of the four parameter regimes.

The sizes here are a fraction of the acceptance runs, so the numbers are noisy
but the qualitative picture is the same. Run with ``python demos/regimes.py``.
"""

from fracftle.experiments import RegimeConfig, run_case

runs = [
    RegimeConfig(case_id="I", hurst=0.3, replicas=20, n_modes=16),
    RegimeConfig(case_id="II", hurst=0.5, epsilons=(0.2, 0.1), replicas=8, n_modes=16),
    RegimeConfig(case_id="III", hurst=0.5, epsilons=(0.2, 0.1), replicas=8, noise_ratio=0.1,
                 n_modes=16),
    RegimeConfig(case_id="IV", hurst=0.5, replicas=20, n_modes=16),
    RegimeConfig(case_id="IV_shifted", hurst=0.5, replicas=20, ratio=0.05, n_modes=16),
]

for cfg in runs:
    rep = run_case(cfg)
    print(f"case {cfg.case_id}  ({rep.wall_clock:.1f}s)")
    if cfg.case_id == "I":
        print(f"  max FTLE - nu = {rep.aggregates['max_ftle_minus_nu']:.4f}")
    for scale in rep.aggregates.get("scales", []):
        shown = {k: v for k, v in scale.items() if isinstance(v, (int, float))}
        print("  " + ", ".join(f"{k}={v:.4g}" for k, v in shown.items()))
    for name, ok in rep.checks.items():
        print(f"  {'PASS' if ok else 'FAIL'} {name}")
