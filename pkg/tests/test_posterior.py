import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from bnnreach.core import Box
from bnnreach.neural import MLPArchitecture, forward
from bnnreach.posterior import (
    DiagGaussianPosterior,
    DynamicsDataset,
    TrainingError,
    VIConfig,
    box_mass,
    elbo,
    elbo_and_grad,
    fit_vi,
    load_posterior,
    predictive_rmse,
    sample_weights,
    save_posterior,
)


def test_validation():
    a = MLPArchitecture.build(1, [], 1)
    with pytest.raises(ValueError):
        DiagGaussianPosterior(a, [0, 0], [1, 0], 0.1)
    with pytest.raises(ValueError):
        DiagGaussianPosterior(a, [0, 0, 0], [1, 1, 1], 0.1)
    with pytest.raises(ValueError):
        DiagGaussianPosterior(a, [0, 0], [1, 1], 0.0)


def test_sampling_degenerate_and_seeded():
    a = MLPArchitecture.build(2, [3], 1)
    mean = np.arange(a.n_params, dtype=float)
    p = DiagGaussianPosterior(a, mean, np.full(a.n_params, 1e-12), 0.1)
    assert np.allclose(sample_weights(p, np.random.default_rng(0)), mean, atol=1e-9)
    q = DiagGaussianPosterior(a, mean, np.ones(a.n_params), 0.1)
    assert np.array_equal(sample_weights(q, np.random.default_rng(7)), sample_weights(q, np.random.default_rng(7)))


def test_sampling_moments():
    a = MLPArchitecture.build(1, [], 1)
    p = DiagGaussianPosterior(a, [0.3, -1.0], [2.0, 0.5], 0.1)
    S = sample_weights(p, np.random.default_rng(1), size=100_000)
    n = S.shape[0]
    for j in range(2):
        m, s = S[:, j].mean(), S[:, j].std(ddof=1)
        assert abs(m - p.mean[j]) <= 3 * p.stddev[j] / np.sqrt(n)
        # standard error of the sample stddev ~ s / sqrt(2 n)
        assert abs(s - p.stddev[j]) <= 3 * p.stddev[j] / np.sqrt(2 * n)


def test_box_mass_examples():
    p1 = DiagGaussianPosterior(MLPArchitecture.build(1, [], 1), [0.0, 0.0], [1.0, 1.0], 0.1)
    assert box_mass(p1, Box([-1.0], [1.0]), coords=[0]) == pytest.approx(0.6826895, abs=1e-7)
    assert box_mass(p1, Box([-1.0, -1.0], [1.0, 1.0])) == pytest.approx(0.4660649, abs=1e-7)
    assert box_mass(p1, Box([0.2, 0.2], [0.2, 0.7])) == 0.0
    assert box_mass(p1, Box([-np.inf, -np.inf], [np.inf, np.inf])) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        box_mass(p1, Box([0.0], [1.0]))


def test_box_mass_matches_quadrature():
    rng = np.random.default_rng(2)
    for _ in range(10):
        mu, sd = rng.normal(size=2), rng.uniform(0.2, 2.0, 2)
        p = DiagGaussianPosterior(MLPArchitecture.build(1, [], 1), mu, sd, 0.1)
        lo = rng.normal(size=2)
        hi = lo + rng.uniform(0, 2, 2)
        dens = lambda y, x: np.exp(-0.5 * ((x - mu[0]) / sd[0]) ** 2 - 0.5 * ((y - mu[1]) / sd[1]) ** 2) / (2 * np.pi * sd[0] * sd[1])
        ref, _ = integrate.dblquad(dens, lo[0], hi[0], lo[1], hi[1], epsabs=1e-12)
        assert abs(box_mass(p, Box(lo, hi)) - ref) <= 1e-8


def test_box_mass_tail_precision():
    p = DiagGaussianPosterior(MLPArchitecture.build(1, [], 1), [0.0, 0.0], [1.0, 1.0], 0.1)
    # far-tail interval: direct cdf difference would round to zero
    m = box_mass(p, Box([9.0], [10.0]), coords=[0])
    assert 1e-20 < m < 1e-18


boxes = st.lists(st.tuples(st.floats(-3, 3), st.floats(0, 3), st.floats(0, 1), st.floats(0, 1)), min_size=3, max_size=3)


@given(boxes)
def test_box_mass_monotone_under_inclusion(spec):
    p = DiagGaussianPosterior(MLPArchitecture.build(2, [], 1), [0.1, -0.2, 0.3], [0.5, 1.0, 2.0], 0.1)
    lo = np.array([s[0] for s in spec])
    hi = lo + np.array([s[1] for s in spec])
    a = np.array([min(s[2], s[3]) for s in spec])
    b = np.array([max(s[2], s[3]) for s in spec])
    inner = Box(lo + a * (hi - lo), lo + b * (hi - lo))
    assert box_mass(p, inner) <= box_mass(p, Box(lo, hi)) + 1e-15


@given(boxes, st.integers(0, 2), st.floats(0, 1))
def test_box_mass_additive_over_split(spec, axis, frac):
    p = DiagGaussianPosterior(MLPArchitecture.build(2, [], 1), [0.1, -0.2, 0.3], [0.5, 1.0, 2.0], 0.1)
    lo = np.array([s[0] for s in spec])
    hi = lo + np.array([s[1] for s in spec])
    cut = lo[axis] + frac * (hi[axis] - lo[axis])
    h1, l2 = hi.copy(), lo.copy()
    h1[axis] = cut
    l2[axis] = cut
    whole = box_mass(p, Box(lo, hi))
    assert box_mass(p, Box(lo, h1)) + box_mass(p, Box(l2, hi)) == pytest.approx(whole, abs=1e-12)


def test_subset_coordinates_integrate_rest():
    a = MLPArchitecture.build(2, [], 1)
    p = DiagGaussianPosterior(a, [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], 0.1)
    full = Box([-np.inf, 0.0, -np.inf], [np.inf, 2.0, np.inf])
    assert box_mass(p, Box([0.0], [2.0]), coords=[1]) == pytest.approx(box_mass(p, full), abs=1e-15)


def test_posterior_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    a = MLPArchitecture.build(3, [4], 2, "tanh")
    p = DiagGaussianPosterior(a, rng.normal(size=a.n_params), rng.uniform(0.01, 1, a.n_params), 0.05)
    save_posterior(p, tmp_path / "p.json")
    q = load_posterior(tmp_path / "p.json")
    assert np.array_equal(p.mean, q.mean) and np.array_equal(p.stddev, q.stddev)
    assert q.likelihood_sigma == p.likelihood_sigma and q.arch == p.arch
    assert '"format_version"' in (tmp_path / "p.json").read_text()


def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    d = DynamicsDataset(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), rng.normal(size=(5, 2)))
    d.save_csv(tmp_path / "d.csv")
    e = DynamicsDataset.load_csv(tmp_path / "d.csv")
    assert np.array_equal(d.x, e.x) and np.array_equal(d.u, e.u) and np.array_equal(d.x_next, e.x_next)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "x0,x1,u0,x_next0,x_next1"
    with pytest.raises(ValueError):
        DynamicsDataset(np.zeros((3, 1)), np.zeros((2, 1)), np.zeros((3, 1)))


def _toy_data(n=40, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 1))
    u = rng.uniform(-1, 1, size=(n, 1))
    return DynamicsDataset(x, u, np.tanh(0.8 * x - 0.5 * u) + 0.1)


def test_elbo_gradient_finite_differences():
    arch = MLPArchitecture((2, 1, 1), ("tanh",))
    assert arch.n_params == 5
    data = _toy_data()
    rng = np.random.default_rng(6)
    mu = rng.normal(size=5)
    rho = rng.normal(size=5) - 1.0
    eps = rng.standard_normal((3, 5))
    args = (1.0, 0.3)
    _, g_mu, g_rho = elbo_and_grad(arch, data, mu, rho, eps, *args)
    h = 1e-6
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        num_mu = (elbo(arch, data, mu + e, rho, eps, *args) - elbo(arch, data, mu - e, rho, eps, *args)) / (2 * h)
        num_rho = (elbo(arch, data, mu, rho + e, eps, *args) - elbo(arch, data, mu, rho - e, eps, *args)) / (2 * h)
        assert abs(g_mu[j] - num_mu) <= 1e-3 * max(1.0, abs(num_mu))
        assert abs(g_rho[j] - num_rho) <= 1e-3 * max(1.0, abs(num_rho))


def _linear_target_data():
    x = np.linspace(-1, 1, 50)[:, None]
    return DynamicsDataset(x, np.zeros((50, 0)), 0.5 * x)


def test_fit_vi_recovers_linear_weight():
    res = fit_vi(_linear_target_data(), MLPArchitecture.build(1, [], 1), VIConfig(epochs=2000, lr=0.01, likelihood_sigma=0.05, seed=0))
    assert abs(res.posterior.mean[0] - 0.5) <= 0.1
    assert res.final_elbo >= res.initial_elbo
    assert np.all(res.posterior.stddev > 0)


def test_fit_vi_beats_dataset_variance_and_is_deterministic():
    data = _toy_data()
    arch = MLPArchitecture.build(2, [8], 1, "tanh")
    cfg = VIConfig(epochs=800, lr=0.02, likelihood_sigma=0.05, seed=3)
    a = fit_vi(data, arch, cfg)
    b = fit_vi(data, arch, cfg)
    assert np.array_equal(a.posterior.mean, b.posterior.mean)
    assert np.array_equal(a.posterior.stddev, b.posterior.stddev)
    assert predictive_rmse(a.posterior, data) ** 2 < data.x_next.var()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_vi_errors():
    arch = MLPArchitecture.build(2, [], 1)
    with pytest.raises(ValueError):
        fit_vi(_linear_target_data(), arch, VIConfig(epochs=1))
    with pytest.raises(ValueError):
        VIConfig(lr=0.0)
    x = np.ones((4, 1))
    bad = DynamicsDataset(x, x, np.full((4, 1), 1e200))
    with pytest.raises(TrainingError):
        fit_vi(bad, arch, VIConfig(epochs=5))
