import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.stats import ks_2samp

from fracftle.amplitude import (
    AePath,
    AeSpec,
    ae_ftle,
    ae_ftle_series,
    default_eta,
    estimate_p_theta,
    noise_smallness_event,
    occupation_series,
    occupation_study,
    occupation_time,
    pitchfork_closed_form,
    simulate_ae,
    slow_noise,
    write_ae_csv,
)
from fracftle.fbm import FgnSpec, ScalarPath, rescale_fbm, sample_fbm
from fracftle.stats import wilson_interval


def _path(b, dt=1e-3):
    b = np.asarray(b, float)
    return AePath(dt * np.arange(b.shape[-1]), b)


def test_fixed_point_without_noise():
    spec = AeSpec(a=1, cubic=1, noise_amp=0, b0=1.0)
    b = simulate_ae(spec, np.zeros(spec.n_steps)).b_values
    assert np.max(np.abs(b - 1)) < 1e-10


def test_pure_noise_is_reproduced_exactly():
    spec = AeSpec(a=0, cubic=0, noise_amp=1, hurst=0.3, b0=0.25)
    noise = sample_fbm(FgnSpec(spec.n_steps, spec.dt_slow, 0.3, seed=4))
    b = simulate_ae(spec, noise).b_values
    assert np.allclose(b, 0.25 + noise.values, atol=1e-13)


@pytest.mark.parametrize("b0, T, b, lam", [(0.0, 1.5, 0.0, 1.0), (1.0, 0.7, 1.0, -2.0)])
def test_closed_form_trivial_cases(b0, T, b, lam):
    assert pitchfork_closed_form(b0, T) == pytest.approx((b, lam), abs=1e-14)


def test_closed_form_against_fine_integration():
    # frozen value: fine-step integration of db = (b - b^3) dT from b0 = 0.1 to T = 2
    b, lam = pitchfork_closed_form(0.1, 2.0)
    assert b == pytest.approx(0.5962054906964936, abs=1e-10)
    assert lam == pytest.approx(0.6781228070515752, abs=1e-10)
    sol = solve_ivp(lambda t, y: [y[0] - y[0] ** 3, y[0] ** 2], (0, 2), [0.1, 0.0],
                    rtol=1e-12, atol=1e-14)
    assert b == pytest.approx(sol.y[0, -1], abs=1e-9)
    assert lam == pytest.approx(1 - 3 * sol.y[1, -1] / 2, abs=1e-9)


def test_euler_converges_to_closed_form_at_first_order():
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        spec = AeSpec(a=1, cubic=1, noise_amp=0, dt_slow=dt, t0_slow=2.0, b0=0.1)
        errs.append(abs(simulate_ae(spec, np.zeros(spec.n_steps)).b_values[-1] - pitchfork_closed_form(0.1, 2.0)[0]))
    assert min(np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])) >= 0.9


def test_ftle_matches_closed_form():
    spec = AeSpec(a=1, cubic=1, noise_amp=0, dt_slow=1e-4, t0_slow=2.0, b0=0.1)
    path = simulate_ae(spec, np.zeros(spec.n_steps))
    assert ae_ftle(path, 1, 1) == pytest.approx(pitchfork_closed_form(0.1, 2.0)[1], abs=1e-4)


@pytest.mark.parametrize("level, a, expected", [(0.0, 1, 1.0), (1.0, 1, -2.0)])
def test_ftle_of_constant_paths(level, a, expected):
    assert ae_ftle(_path(np.full(11, level)), a, 1.0) == pytest.approx(expected)


def test_ftle_series_ends_with_ftle(rng):
    b = rng.standard_normal((3, 50))
    series = ae_ftle_series(b, 0.01, 0.5, 2.0)
    assert np.allclose(series[:, -1], ae_ftle(_path(b, 0.01), 0.5, 2.0))


def test_ftle_rejects_degenerate_paths():
    with pytest.raises(ValueError):
        ae_ftle(AePath([0.0], [1.0]), 1, 1)


def test_blow_up_guard():
    spec = AeSpec(a=1, cubic=0, noise_amp=0, dt_slow=0.5, t0_slow=50.0, b0=1.0)
    with pytest.raises(FloatingPointError):
        simulate_ae(spec, np.zeros(spec.n_steps))


def test_spec_validation():
    with pytest.raises(ValueError):
        AeSpec(dt_slow=0.3, t0_slow=1.0)
    with pytest.raises(ValueError):
        AeSpec(cubic=-1.0)


def test_smallness_event_basic():
    t = np.linspace(0, 1, 11)
    assert noise_smallness_event(ScalarPath(t, np.zeros(11)), 0.1, 1.0)
    eta = 0.3
    const = np.r_[0.0, np.full(10, eta)]
    assert not noise_smallness_event(ScalarPath(t, const), eta, 1.0)
    # two-sided: a negative excursion counts too
    assert not noise_smallness_event(ScalarPath(t, -const), eta, 1.0)


def test_smallness_probability_matches_brownian_series():
    # P(sup_[0,1] |B| <= a) = (4/pi) sum_n (-1)^n/(2n+1) exp(-(2n+1)^2 pi^2 / (8 a^2))
    a, n, reps = 1.0, 1000, 4000
    inc = slow_noise(n, 1 / n, 0.5, 3, range(reps))
    values = np.concatenate([np.zeros((reps, 1)), np.cumsum(inc, 1)], 1)
    p = noise_smallness_event(values, 2 * a, 1.0, 1 / n).mean()
    k = np.arange(20)
    exact = 4 / np.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * np.pi**2 / (8 * a * a)))
    se = np.sqrt(exact * (1 - exact) / reps)
    # the grid sup misses excursions between points, which biases p upwards slightly
    assert exact - 4 * se < p < exact + 4 * se + 0.02


@pytest.mark.xfail(strict=True, reason="P(sup_[0,1] |B| <= 0.25) is about 3e-9; see the decisions ledger")
def test_smallness_event_positive_at_eta_half():
    inc = slow_noise(1000, 1e-3, 0.5, 12345, range(2000))
    values = np.concatenate([np.zeros((2000, 1)), np.cumsum(inc, 1)], 1)
    hits = int(noise_smallness_event(values, 0.5, 1.0, 1e-3).sum())
    assert wilson_interval(hits, 2000)[0] > 0


def test_default_eta_satisfies_the_margin():
    eta = default_eta(1.0, 1.0)
    assert (1 + 1.0) * eta * np.e < 0.5


@pytest.mark.parametrize("level, expected", [(0.0, 1.0), (0.6, 0.0)])
def test_occupation_of_constant_paths(level, expected):
    assert occupation_time(_path(np.full(1001, level)), 0.3) == pytest.approx(expected)


def test_occupation_of_a_ramp():
    s = np.linspace(0, 1, 1001)
    assert occupation_time(_path(s), 0.3) == pytest.approx(0.3, abs=1e-3)
    assert occupation_series(s, 1e-3, 0.3)[-1] == pytest.approx(0.3, abs=1e-3)


def test_p_theta_limits_and_monotonicity():
    spec = AeSpec(a=0, cubic=1, noise_amp=1, hurst=0.5, dt_slow=1e-2, t0_slow=1.0, b0=0.5)
    occ = occupation_study(spec, [0.0, 0.1, 0.3, 100.0], 200, seed=1)
    assert np.all(occ[:, 0] == 0)
    assert np.allclose(occ[:, -1], 1.0)
    assert np.all(np.diff(occ, axis=1) >= 0)
    assert estimate_p_theta(spec, 100.0, 100) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        estimate_p_theta(spec, 0.1, 50)


@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_occupation_is_monotone_in_theta(t1, t2):
    b = np.sin(np.linspace(0, 7, 300))
    lo, hi = sorted((t1, t2))
    assert occupation_time(_path(b), lo) <= occupation_time(_path(b), hi)


def test_quarter_bound_on_the_smallness_event():
    t0 = 1e-2
    eta = default_eta(1.0, t0)
    spec = AeSpec(a=1, cubic=1, noise_amp=1, hurst=0.5, dt_slow=t0 / 1000, t0_slow=t0, b0=eta / 2)
    inc = slow_noise(spec.n_steps, spec.dt_slow, 0.5, 7, range(500))
    values = np.concatenate([np.zeros((500, 1)), np.cumsum(inc, 1)], 1)
    flag = noise_smallness_event(values, eta, t0, spec.dt_slow)
    b = simulate_ae(spec, inc).b_values
    assert flag.sum() > 50
    assert np.all(np.abs(b[flag]).max(axis=1) < 0.5)
    assert np.all(ae_ftle_series(b[flag], spec.dt_slow, 1, 1).min(axis=1) >= 0.25 - 0.02)


def test_self_similar_noise_gives_the_same_ftle_law():
    # slow fBm drawn directly versus a fast path rescaled with gamma = 1/eps
    h, eps, t0, dt = 0.7, 0.5, 1.0, 1e-2
    spec = AeSpec(a=1, cubic=1, noise_amp=0.5, hurst=h, dt_slow=dt, t0_slow=t0, b0=0.0)
    direct = simulate_ae(spec, slow_noise(spec.n_steps, dt, h, 1, range(1500)))
    fast = [sample_fbm(FgnSpec(spec.n_steps, dt / eps**2, h, seed=2), replica=r) for r in range(1500)]
    slow = np.stack([rescale_fbm(p, eps, h).increments for p in fast])
    rescaled = simulate_ae(spec, slow)
    assert ks_2samp(ae_ftle(direct, 1, 1), ae_ftle(rescaled, 1, 1)).pvalue > 0.01


def test_ae_csv(tmp_path):
    write_ae_csv(_path([0.0, 0.5, 1.0], 0.5), tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines() == ["time,b", "0,0", "0.5,0.5", "1,1"]
