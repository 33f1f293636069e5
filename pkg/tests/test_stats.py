import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracftle.stats import loglog_slope, wilson_halfwidth, wilson_interval


@pytest.mark.parametrize("n", [1, 10, 2000])
def test_wilson_boundaries(n):
    assert wilson_interval(0, n)[0] == 0.0
    assert wilson_interval(n, n)[1] == 1.0


def test_wilson_reference_value():
    lo, hi = wilson_interval(50, 100, 0.95)
    assert lo == pytest.approx(0.4038, abs=1e-3)
    assert hi == pytest.approx(0.5962, abs=1e-3)
    assert wilson_halfwidth(50, 100) == pytest.approx((hi - lo) / 2)


@given(st.integers(1, 5000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))),
       st.floats(0.5, 0.999))
def test_wilson_contains_the_estimate(counts, conf):
    k, n = counts
    lo, hi = wilson_interval(k, n, conf)
    assert 0 <= lo <= k / n <= hi <= 1


@pytest.mark.parametrize("k, n, conf", [(-1, 10, 0.95), (11, 10, 0.95), (0, 0, 0.95), (1, 2, 1.0)])
def test_wilson_rejects_invalid_input(k, n, conf):
    with pytest.raises(ValueError):
        wilson_interval(k, n, conf)


def test_loglog_slope():
    x = np.array([1.0, 2.0, 4.0])
    assert loglog_slope(x, 3 * x**1.7) == pytest.approx(1.7)
    with pytest.raises(ValueError):
        loglog_slope([1.0], [1.0])
    with pytest.raises(ValueError):
        loglog_slope([1.0, 2.0], [0.0, 1.0])
