"""Small statistical helpers shared by the experiment harness."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

__all__ = ["wilson_interval", "wilson_halfwidth", "loglog_slope"]


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError(f"invalid counts: {successes} successes in {trials} trials")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    z = norm.ppf(0.5 + 0.5 * confidence)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + 0.5 * z2n) / (1 + z2n)
    half = z / (1 + z2n) * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    lo, hi = centre - half, centre + half
    # exact endpoints at the boundaries, free of rounding
    if successes == 0:
        lo = 0.0
    if successes == trials:
        hi = 1.0
    return float(max(lo, 0.0)), float(min(hi, 1.0))


def wilson_halfwidth(successes: int, trials: int, confidence: float = 0.95) -> float:
    lo, hi = wilson_interval(successes, trials, confidence)
    return 0.5 * (hi - lo)


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log regression needs at least two positive points")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
