import json

import numpy as np
import pytest

from fracftle.fbm import GridError, HilbertNoiseSpec, hilbert_increments, sample_hilbert_fbm
from fracftle.model import ModelSpec, basis_vector, fc_coefficient
from fracftle.spde import (
    BlowUpError,
    SolverConfig,
    iterate,
    phi1,
    simulate,
    step,
    stochastic_convolution,
    write_trajectory,
)


def test_phi1():
    assert phi1(0.0) == 1.0
    assert phi1(np.array([1e-3]))[0] == pytest.approx((np.exp(1e-3) - 1) / 1e-3, rel=1e-14)


def test_config_validation():
    with pytest.raises(GridError):
        SolverConfig(dt_fast=0.3, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(scheme="rk4")
    assert SolverConfig(dt_fast=0.1, t_end=1.0).n_steps == 10


@pytest.mark.parametrize("scheme", ["exponential_euler", "semi_implicit"])
def test_zero_stays_zero(scheme):
    spec = ModelSpec(n_modes=8)
    traj = simulate(np.zeros(8), spec, SolverConfig(0.01, 1.0, scheme))
    assert not np.any(traj.states)


def test_linear_flow_is_exact():
    spec = ModelSpec(n_modes=8, nonlinear=False)
    traj = simulate(basis_vector(2, 8), spec, SolverConfig(0.01, 2.0))
    assert np.allclose(traj.states[:, 1], np.exp(-3 * traj.times), rtol=1e-13, atol=0)
    assert np.all(traj.states[:, [0, 2, 3]] == 0)


def test_kernel_mode_follows_cubic_ode():
    b0, spec = 0.5, ModelSpec(n_modes=64)
    traj = simulate(b0 * basis_vector(1, 64), spec, SolverConfig(1e-3, 1.0))
    exact = b0 / np.sqrt(1 + 2 * fc_coefficient() * b0**2 * 1.0)
    assert traj.states[-1, 0] == pytest.approx(exact, abs=1e-3)


def test_deterministic_convergence_order():
    spec = ModelSpec(n_modes=16)
    u0 = np.array([1.0, 0.5, -0.4, 0.3] + [0.0] * 12)
    ends = [simulate(u0, spec, SolverConfig(dt, 1.0)).states[-1] for dt in (0.02, 0.01, 0.005, 0.0025)]
    err = [np.linalg.norm(ends[i] - ends[i + 1]) for i in range(3)]
    order = np.log2(err[0] / err[1]), np.log2(err[1] / err[2])
    assert min(order) >= 0.9


def test_dissipativity_for_negative_nu():
    spec = ModelSpec(n_modes=16, nu=-0.5)
    u0 = 2.0 / np.arange(1, 17)
    norms = np.linalg.norm(simulate(u0, spec, SolverConfig(1e-3, 1.0)).states, axis=1)
    assert np.all(np.diff(norms) <= 1e-3 * norms[:-1])


def test_contraction_of_two_solutions():
    nu, dt = -0.5, 1e-3
    spec = ModelSpec(n_modes=16, nu=nu, sigma=0.3, hurst=0.4)
    cfg = SolverConfig(dt, 2.0)
    noise = sample_hilbert_fbm(HilbertNoiseSpec(16, 0.4, cfg.n_steps, dt, seed=5))
    a = simulate(np.full(16, 0.2), spec, cfg, noise).states
    b = simulate(np.full(16, -0.1), spec, cfg, noise).states
    d = np.linalg.norm(a - b, axis=1)
    t = cfg.dt_fast * np.arange(len(d))
    assert np.all(d <= np.exp(nu * t) * d[0] * (1 + 1e-6))


def test_simulate_is_deterministic_and_strided():
    spec = ModelSpec(n_modes=8, sigma=0.5, hurst=0.3)
    cfg = SolverConfig(0.01, 1.0, store_stride=10)
    noise = sample_hilbert_fbm(HilbertNoiseSpec(8, 0.3, 100, 0.01, seed=2))
    a = simulate(np.zeros(8), spec, cfg, noise)
    b = simulate(np.zeros(8), spec, cfg, noise)
    assert a.states.tobytes() == b.states.tobytes()
    assert len(a.times) == 11 and a.dt == pytest.approx(0.1)
    assert np.array_equal(a.at(0.5), a.states[5])
    with pytest.raises(GridError):
        a.at(0.55)


def test_step_matches_iterate():
    spec = ModelSpec(n_modes=8, nu=0.2, sigma=0.4)
    cfg = SolverConfig(0.01, 0.05)
    inc = hilbert_increments(HilbertNoiseSpec(8, 0.5, 5, 0.01, seed=1), [0])[0]
    u = np.linspace(-1, 1, 8)
    it = list(iterate(u, spec, cfg, (inc, 0.01)))
    for n in range(5):
        u = step(u, inc[n], spec, cfg)
    assert np.allclose(u, it[-1], rtol=0, atol=1e-15)


def test_coarse_noise_is_split_over_substeps():
    spec = ModelSpec(n_modes=4, sigma=1.0, nonlinear=False)
    inc = np.ones((2, 4))
    traj = simulate(np.zeros(4), spec, SolverConfig(0.1, 0.4), (inc, 0.2))
    z = stochastic_convolution((inc, 0.2), spec, SolverConfig(0.1, 0.4))
    # the kernel mode is undamped, so both recursions just accumulate the noise
    assert np.allclose(traj.states[:, 0], [0, 0.5, 1.0, 1.5, 2.0])
    assert np.allclose(z.states[:, 0], traj.states[:, 0])
    # stable modes: u <- e^{ah} u + dW versus Z <- e^{ah} (Z + dW)
    decay = np.exp(-3 * 0.1)
    assert traj.states[1, 1] == pytest.approx(0.5)
    assert z.states[1, 1] == pytest.approx(0.5 * decay)
    with pytest.raises(GridError):
        simulate(np.zeros(4), spec, SolverConfig(0.1, 0.4), (inc, 0.15))
    with pytest.raises(GridError):
        simulate(np.zeros(4), spec, SolverConfig(0.1, 0.6), (inc, 0.2))


def test_batched_replicas_match_single_runs():
    spec = ModelSpec(n_modes=8, nu=0.1, sigma=0.3)
    cfg = SolverConfig(0.01, 0.5)
    inc = hilbert_increments(HilbertNoiseSpec(8, 0.5, 50, 0.01, seed=4), range(3))
    batch = simulate(np.full(8, 0.1), spec, cfg, (inc, 0.01)).states
    single = simulate(np.full(8, 0.1), spec, cfg, (inc[2], 0.01)).states
    assert np.allclose(batch[:, 2], single, atol=1e-14)


def test_stochastic_convolution_kernel_mode_is_the_noise():
    spec = ModelSpec(n_modes=6)
    noise = sample_hilbert_fbm(HilbertNoiseSpec(6, 0.7, 200, 0.01, seed=8))
    z = stochastic_convolution(noise, spec, SolverConfig(0.01, 2.0))
    assert np.allclose(z.states[:, 0], noise.values[:, 0], atol=1e-13)
    zero = stochastic_convolution((np.zeros((200, 6)), 0.01), spec, SolverConfig(0.01, 2.0))
    assert not np.any(zero.states)


def test_solution_is_order_eps_in_natural_scaling():
    eps, h = 0.2, 0.5
    spec = ModelSpec(n_modes=32, nu=eps**2, sigma=eps ** (2 * h + 1), hurst=h)
    cfg = SolverConfig(1e-2, 1 / eps**2)
    inc = hilbert_increments(HilbertNoiseSpec(32, h, cfg.n_steps, 1e-2, seed=3), range(8))
    u = simulate(eps * 0.5 * basis_vector(1, 32), spec, cfg, (inc, 1e-2)).states
    c = np.max(np.linalg.norm(u, axis=-1)) / eps
    assert c <= 5


def test_blow_up_guard():
    spec = ModelSpec(n_modes=4, sigma=1.0, nonlinear=False)
    with pytest.raises(BlowUpError):
        simulate(np.zeros(4), spec, SolverConfig(0.1, 0.2, blowup=1.0), (np.full((2, 4), 5.0), 0.1))


def test_trajectory_export(tmp_path):
    spec = ModelSpec(n_modes=3)
    traj = simulate(np.array([0.1, 0.0, 0.2]), spec, SolverConfig(0.1, 0.3))
    sidecar = write_trajectory(traj, tmp_path / "u.csv", model=spec, seed=7)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "time,u1,u2,u3" and len(lines) == 5
    meta = json.loads(sidecar.read_text())
    assert meta["seed"] == 7 and meta["model"]["n_modes"] == 3
