import math

import numpy as np
import pytest

from netsmooth.analysis import (NoiseStats, ReferenceNotReached, ReferenceSolution,
                                check_recursion_bound, gradient_noise_stats, iterate_bound,
                                msd_curve, solve_reference, theoretical_rate, write_msd_csv)
from netsmooth.data import (AgentDataset, NetworkDataset, SplitIndices, small_fixture,
                            train_test_split)
from netsmooth.graph import laplacian, metropolis_weights
from netsmooth.model import ModelConstants, compute_constants, smoothed_cost, smoothed_cost_grad
from netsmooth.train import HyperParams, NetworkState, train_global_smoothing, train_noncooperative

from oracles import random_fixture


def two_agent_separable(N=10, seed=0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(N) < 0.5, 1, -1)
    u1, u2 = rng.uniform(-1, 1, N), rng.uniform(-1, 1, N)
    h1 = (y * (1 + 0.02 * u1))[:, None]
    h2 = (y * (0.6 + 0.02 * u2))[:, None]
    ds = NetworkDataset((AgentDataset(h1, y), AgentDataset(h2, y)), "uniform")
    return ds, SplitIndices(np.arange(N), np.array([], dtype=int))


def fixture_problem(seed=0):
    g, ds = small_fixture(seed)
    L = laplacian(metropolis_weights(g), g)
    return ds, train_test_split(ds, 0.7, 0), L


def test_pure_l2_reference_is_zero():
    ds = NetworkDataset((AgentDataset(np.zeros((6, 3)), np.array([1, -1] * 3)),), "uniform")
    split = SplitIndices(np.arange(4), np.arange(4, 6))
    ref = solve_reference(ds, split, np.zeros((1, 1)), eta=0.3, rho=0.5)
    np.testing.assert_array_equal(ref.W_star, 0)


def test_reference_gradient_norm_and_local_minimality():
    ds, split, L = fixture_problem()
    ref = solve_reference(ds, split, L, eta=0.1, rho=0.5)
    g = smoothed_cost_grad(ref.W_star, ds, split.train, L, 0.1, 0.5)
    assert np.linalg.norm(g) <= 1e-10
    assert ref.achieved_grad_norm <= 1e-10 and ref.rho == 0.5
    f0 = smoothed_cost(ref.W_star, ds, split.train, L, 0.1, 0.5)
    rng = np.random.default_rng(0)
    mask = np.arange(ds.X.shape[2])[None] < ds.dims[:, None]
    for _ in range(100):
        d = rng.standard_normal(ref.W_star.shape) * mask
        d *= 1e-3 / np.linalg.norm(d)
        assert smoothed_cost(ref.W_star + d, ds, split.train, L, 0.1, 0.5) > f0


def test_reference_requires_eta_and_reports_budget():
    ds, split, L = fixture_problem()
    with pytest.raises(ValueError):
        solve_reference(ds, split, L, eta=0.0, rho=0.5)
    with pytest.raises(ReferenceNotReached) as err:
        solve_reference(ds, split, L, eta=0.1, rho=0.5, max_iters=2)
    assert err.value.grad_norm > 1e-10


def long_run_sgd(ds, mu, eta, rho, steps, seed):
    """Plain-Python two-agent SGD, written independently of the library."""
    h = [[float(v) for v in a.features[:, 0]] for a in ds.agents]
    y = [int(v) for v in ds.agents[0].labels]
    draws = np.random.default_rng(seed).integers(0, ds.N, size=steps).tolist()
    w0 = w1 = 0.0
    s0 = s1 = 0.0
    start = steps // 2
    for i, n in enumerate(draws):
        a, b = h[0][n], h[1][n]
        p0, p1 = a * w0, b * w1
        d0 = -y[n] / (1.0 + math.exp(y[n] * p0))
        d1 = -y[n] / (1.0 + math.exp(y[n] * p1))
        # Laplacian of A = [[.5, .5], [.5, .5]] applied to the predictions
        c = 0.5 * (p0 - p1)
        g0 = d0 * a + 2 * eta * w0 + rho * c * a
        g1 = d1 * b + 2 * eta * w1 - rho * c * b
        w0, w1 = w0 - mu * g0, w1 - mu * g1
        if i >= start:
            s0 += w0
            s1 += w1
    return np.array([s0, s1]) / (steps - start)


def test_reference_matches_long_run_sgd():
    ds, split = two_agent_separable()
    L = np.array([[0.5, -0.5], [-0.5, 0.5]])
    ref = solve_reference(ds, split, L, eta=0.1, rho=1.0)
    avg = long_run_sgd(ds, mu=1e-4, eta=0.1, rho=1.0, steps=10 ** 6, seed=1)
    assert np.abs(ref.W_star[:, 0] - avg).max() <= 1e-4


def test_noise_single_sample_is_zero():
    ds = NetworkDataset((AgentDataset(np.array([[0.3, -1.0]]), np.array([1])),
                         AgentDataset(np.array([[2.0]]), np.array([1]))), "uniform")
    split = SplitIndices(np.array([0]), np.array([], dtype=int))
    L = np.array([[0.5, -0.5], [-0.5, 0.5]])
    W = np.array([[0.2, 0.1], [-0.4, 0.0]])
    ns = gradient_noise_stats(W, ds, split, L, 0.1, 0.7)
    assert ns.empirical_mean_norm == pytest.approx(0, abs=1e-15)
    assert ns.empirical_second_moment == pytest.approx(0, abs=1e-30)
    assert ns.B_spread == 0


@pytest.mark.parametrize("seed", range(5))
def test_noise_zero_mean_and_rho_zero_constant(seed):
    _, _, L, ds = random_fixture(seed, K=5, N=30)
    split = SplitIndices(np.arange(20), np.arange(20, 30))
    W = np.random.default_rng(seed).standard_normal((ds.K, ds.X.shape[2]))
    ns = gradient_noise_stats(W, ds, split, L, 0.1, 0.8)
    assert ns.empirical_mean_norm <= 1e-12
    assert ns.empirical_second_moment >= 0 and ns.sigma_s_sq >= 0 and ns.B_spread >= 0
    delta = compute_constants(ds, 0.1).delta
    ns0 = gradient_noise_stats(W, ds, split, L, 0.1, 0.0)
    assert ns0.beta_s_sq == pytest.approx(8 * delta ** 2, rel=1e-15)


def zero_noise(sigma_sq=0.0):
    return NoiseStats(0.0, 0.0, 0.0, sigma_sq, 0.0, np.zeros((1, 1)))


def test_rate_example():
    rate = theoretical_rate(ModelConstants(0.2, 1.2), zero_noise(), 0.1)
    assert rate.lambda_ == pytest.approx(0.9744, abs=1e-12)
    assert rate.mu_bound == pytest.approx(0.4 / 1.44)
    with pytest.raises(ValueError, match="admissible"):
        theoretical_rate(ModelConstants(0.2, 1.2), zero_noise(), rate.mu_bound)


def test_rate_small_step_limits():
    consts, noise = ModelConstants(0.2, 1.2), zero_noise(3.0)
    r = theoretical_rate(consts, noise, 1e-7)
    assert r.lambda_ < 1 and r.lambda_ == pytest.approx(1, abs=1e-6)
    assert r.steady_state_bound == pytest.approx(3.0 * 1e-7 / 0.4, rel=1e-5)


def test_iterate_bound_closed_form():
    rate = theoretical_rate(ModelConstants(0.2, 1.2), zero_noise(2.0), 0.05)
    x = iterate_bound(5.0, rate, 5000)
    lam, c = rate.lambda_, rate.mu ** 2 * rate.sigma_s_sq
    i = np.arange(5001)
    closed = lam ** i * 5.0 + c * (1 - lam ** i) / (1 - lam)
    assert np.abs(x - closed).max() <= 1e-12
    assert x[-1] == pytest.approx(rate.steady_state_bound, rel=1e-3)
    # above the fixed point the envelope decreases monotonically
    assert np.all(np.diff(x) <= 0)


def test_bound_check_zero_curve_and_violation():
    rate = theoretical_rate(ModelConstants(0.2, 1.2), zero_noise(1.0), 0.05)
    assert check_recursion_bound(np.zeros(50), rate).holds
    curve = np.zeros(50)
    curve[10] = 1.0
    res = check_recursion_bound(curve, rate)
    assert not res.holds and res.first_violation == 10
    assert res.fraction_satisfied == pytest.approx(48 / 49)


def test_msd_curve_single_record_and_mismatch(tmp_path):
    ds, split, L = fixture_problem()
    ref = solve_reference(ds, split, L, eta=0.1, rho=0.5)
    hp = HyperParams(mu=0.01, rho=0.5, eta=0.1, passes=2)
    _, rec = train_global_smoothing(ds, split, L, hp, reference=ref.W_star)
    mean, se = msd_curve([rec], ref)
    assert len(mean) == rec.iterations + 1
    np.testing.assert_array_equal(mean[1:], rec.msd)
    assert mean[0] == pytest.approx((ref.W_star ** 2).sum())
    assert not se.any()
    _, other = train_noncooperative(ds, split, hp, reference=ref.W_star)
    with pytest.raises(ValueError, match="rho"):
        msd_curve([rec, other], ref)
    write_msd_csv(tmp_path / "msd.csv", mean, se)
    assert (tmp_path / "msd.csv").read_text().startswith("iter,msd_mean,msd_stderr")


def test_start_at_optimum_with_tiny_step_stays_put():
    ds, split, L = fixture_problem()
    ref = solve_reference(ds, split, L, eta=0.1, rho=0.5)
    hp = HyperParams(mu=1e-7, rho=0.5, eta=0.1, passes=5)
    _, rec = train_global_smoothing(ds, split, L, hp, init=NetworkState(ref.W_star, ds.dims),
                                    reference=ref.W_star)
    mean, _ = msd_curve([rec], ref)
    assert mean.max() <= 1e-10


def test_plateau_within_ten_times_bound():
    ds, split, L = fixture_problem()
    eta, rho, mu = 0.1, 0.5, 0.01
    ref = solve_reference(ds, split, L, eta, rho)
    noise = gradient_noise_stats(ref.W_star, ds, split, L, eta, rho, ref)
    rate = theoretical_rate(compute_constants(ds, eta), noise, mu)
    records = [train_global_smoothing(ds, split, L, HyperParams(mu=mu, rho=rho, eta=eta,
                                                                passes=300, seed=s,
                                                                eval_every=10 ** 9),
                                      reference=ref.W_star)[1] for s in range(8)]
    mean, se = msd_curve(records, ref)
    plateau = mean[len(mean) // 2:].mean()
    assert plateau <= 10 * rate.steady_state_bound
    assert check_recursion_bound(mean, rate, se).fraction_satisfied >= 0.99


def test_reference_solution_stacked():
    ref = ReferenceSolution(np.array([[1.0, 0.0], [2.0, 3.0]]), 0.0, 0.0)
    np.testing.assert_array_equal(ref.stacked(np.array([1, 2])), [1.0, 2.0, 3.0])
