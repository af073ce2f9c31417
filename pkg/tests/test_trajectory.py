import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipmlab.experiments import make_gaussian
from ipmlab.lagrangian import Trajectory, trace_trajectories
from ipmlab.spectral import Grid
from ipmlab.transport import SolverConfig
from ipmlab.trajectory import MIN_SAMPLES, analyticity_probe, chebyshev_coefficients, default_degree, fit_decay


def make_traj(fn, n=201, T=1.0):
    t = np.linspace(0.0, T, n)
    pos = np.stack(fn(t), axis=1)
    return Trajectory((float(pos[0, 0]), float(pos[0, 1])), t, pos)


def test_constant_trajectory_has_machine_floor_tail():
    res = analyticity_probe(make_traj(lambda t: (np.full_like(t, 3.0), np.full_like(t, -1.0))))
    assert np.abs(res.coefficients[:, 1:]).max() <= 1e-14
    assert np.isnan(res.decay_rate)


def test_linear_trajectory_keeps_two_coefficients():
    res = analyticity_probe(make_traj(lambda t: (2.0 + 0.5 * t, 1.0 - 0.25 * t)))
    c = res.coefficients
    assert np.abs(c[:, :2]).max() > 0.1
    assert np.abs(c[:, 2:]).max() <= 1e-14
    assert np.isnan(res.decay_rate)


@pytest.mark.parametrize("a", [1.5, 2.0, 3.0])
def test_pole_gives_its_bernstein_rate(a):
    # 1/(a - tau) on [-1, 1] has c_k proportional to (a - sqrt(a^2 - 1))^k
    def fn(t):
        tau = 2 * t - 1
        return 1.0 / (a - tau), 0.5 / (a - tau)

    res = analyticity_probe(make_traj(fn, n=401))
    expected = np.log(a - np.sqrt(a * a - 1))
    assert res.decay_rate == pytest.approx(expected, rel=0.05)
    assert res.fit_quality > 0.999
    assert res.geometric()


@given(st.floats(-3.0, -0.3), st.floats(1e-3, 10.0))
def test_fit_recovers_exact_geometric_sequences(rate, scale):
    c = scale * np.exp(rate * np.arange(40))
    fit = fit_decay(c)
    if fit.fit_range[1] - fit.fit_range[0] >= 2:
        assert fit.decay_rate == pytest.approx(rate, rel=1e-6)
        assert fit.r2 > 0.9999


def test_envelope_ignores_parity_zeros():
    c = np.exp(-0.8 * np.arange(30))
    c[3::2] = 0.0  # even function: odd coefficients vanish
    fit = fit_decay(c)
    assert fit.decay_rate == pytest.approx(-0.8, abs=0.1)


def test_chebyshev_coefficients_of_polynomial():
    t = np.linspace(2.0, 4.0, 65)
    tau = t - 3.0
    c = chebyshev_coefficients(t, 2 * tau**2 - 1 + 0.5 * tau, 6)
    assert np.allclose(c, [0, 0.5, 1, 0, 0, 0, 0], atol=1e-13)


def test_default_degree_is_bounded():
    assert default_degree(64) == 16
    assert default_degree(10_000) == 40


def test_too_few_samples_are_rejected():
    with pytest.raises(ValueError, match="at least"):
        analyticity_probe(make_traj(lambda t: (t, t), n=MIN_SAMPLES - 1))


def test_non_uniform_samples_are_rejected():
    t = np.linspace(0, 1, 100) ** 2
    tr = Trajectory((0.0, 0.0), t, np.stack([t, t], axis=1))
    with pytest.raises(ValueError, match="uniform"):
        analyticity_probe(tr)


def test_gaussian_corpus_trajectories_decay_geometrically():
    # Gaussian data are entire in space; their trajectories give clean geometric tails
    grid = Grid()
    rho0 = make_gaussian(grid, (14.0, 16.0), 1.5, 2.0)
    pts = np.array([14.0, 16.0]) + np.random.default_rng(0).uniform(-3.0, 3.0, size=(10, 2))
    results = [analyticity_probe(tr) for tr in trace_trajectories(pts, rho0, SolverConfig())]
    assert all(r.geometric() for r in results), [(r.decay_rate, r.fit_quality) for r in results]
