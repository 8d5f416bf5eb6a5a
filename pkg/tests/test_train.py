import numpy as np
import pytest

from netsmooth import experiments
from netsmooth.data import (AgentDataset, NetworkDataset, SplitIndices, small_fixture,
                            train_test_split)
from netsmooth.graph import laplacian, metropolis_weights
from netsmooth.model import (local_cost_grad, singleton_cluster_map, smoothed_cost_grad, stack,
                             uniform_cluster_map)
from netsmooth.train import (DivergedError, HyperParams, NetworkState, RunRecord,
                             block_recursion_step, evaluate, feature_block,
                             global_smoothing_step, load_state, local_smoothing_step,
                             sample_indices, save_state, stacked_loss_gradient,
                             train_global_smoothing, train_local_smoothing,
                             train_noncooperative, train_single_agent)

from oracles import block_equivalence_deviation, random_fixture, random_weights


def two_agent(labels=(1, 1), feats=(1.0, 1.0)):
    agents = tuple(AgentDataset(np.array([[f]]), np.array([y])) for f, y in zip(feats, labels))
    return NetworkDataset(agents, "uniform")


def test_hyperparams_validation():
    for bad in ({"mu": 0}, {"mu": 1e-2, "rho": -1}, {"mu": 1e-2, "eta": -0.1},
                {"mu": 1e-2, "passes": 0}, {"mu": 1e-2, "grad_mode": "half"}):
        with pytest.raises(ValueError):
            HyperParams(**bad)


def test_hand_built_step():
    # K=2, M=1, h=1, w=0, labels +1, A = [[.5,.5],[.5,.5]], mu=0.1, rho=1, eta=0:
    # predictions 0, loss derivative -0.5, no coupling, w -> 0.05
    L = np.array([[0.5, -0.5], [-0.5, 0.5]])
    W = global_smoothing_step(np.zeros((2, 1)), np.ones((2, 1)), np.ones(2), L,
                              mu=0.1, rho=1.0, eta=0.0)
    np.testing.assert_allclose(W, [[0.05], [0.05]], atol=1e-15)


def test_coupling_sign_and_literal_flag():
    L = np.array([[0.5, -0.5], [-0.5, 0.5]])
    W = np.array([[1.0], [0.0]])
    h, y = np.ones((2, 1)), np.ones(2)
    mu, rho = 0.1, 2.0
    plain = global_smoothing_step(W, h, y, L, mu, 0.0, 0.0)
    smooth = global_smoothing_step(W, h, y, L, mu, rho, 0.0)
    literal = global_smoothing_step(W, h, y, L, mu, rho, 0.0, literal=True)
    # (L g)_0 = 0.5, (L g)_1 = -0.5: smoothing pulls the two predictions together
    np.testing.assert_allclose(smooth - plain, -mu * rho * np.array([[0.5], [-0.5]]), atol=1e-15)
    np.testing.assert_allclose(literal - plain, mu * mu * rho * np.array([[0.5], [-0.5]]),
                               atol=1e-15)


def test_rho_zero_bit_identical_to_single_agents():
    g, ds = small_fixture(4, K=6, dims=[1, 2, 3, 3, 2, 1])
    L = laplacian(metropolis_weights(g), g)
    split = train_test_split(ds, 0.7, 1)
    hp = HyperParams(mu=0.05, rho=0.0, eta=0.1, passes=3, seed=9)
    # trajectory: network step vs K single-agent steps at every iteration
    W = np.zeros((ds.K, 3))
    singles = [np.zeros((1, 3)) for _ in range(ds.K)]
    for n in sample_indices(split, 60, hp.seed):
        W = global_smoothing_step(W, ds.X[:, n], ds.Y[:, n], L, hp.mu, 0.0, hp.eta)
        for k in range(ds.K):
            singles[k] = global_smoothing_step(singles[k], ds.X[k:k + 1, n], ds.Y[k:k + 1, n],
                                               np.zeros((1, 1)), hp.mu, 0.0, hp.eta)
            assert np.array_equal(W[k], singles[k][0])
    # trainers
    net, _ = train_global_smoothing(ds, split, L, hp)
    nc, _ = train_noncooperative(ds, split, hp)
    for k in range(ds.K):
        single, _ = train_single_agent(ds, split, hp, k)
        M = ds.dims[k]
        assert np.array_equal(net.W[k, :M], single.W[0, :M])
        assert np.array_equal(nc.W[k, :M], single.W[0, :M])


@pytest.mark.parametrize("mode", ["full", "own-term"])
def test_singleton_clusters_reduce_to_noncooperative(mode):
    g, ds = small_fixture(5, K=5)
    split = train_test_split(ds, 0.7, 2)
    hp = HyperParams(mu=0.05, eta=0.1, passes=4, seed=3, grad_mode=mode)
    cm = singleton_cluster_map(ds.K)
    local, lrec = train_local_smoothing(ds, split, hp, cm)
    nc, nrec = train_noncooperative(ds, split, hp)
    assert np.array_equal(local.W, nc.W)
    L0 = np.zeros((ds.K, ds.K))
    W, V = np.zeros_like(nc.W), np.zeros_like(nc.W)
    for n in lrec.n:
        W = local_smoothing_step(W, ds.X[:, n], ds.Y[:, n], cm, hp.mu, hp.eta, mode)
        V = global_smoothing_step(V, ds.X[:, n], ds.Y[:, n], L0, hp.mu, 0.0, hp.eta)
        assert np.array_equal(W, V)


@pytest.mark.parametrize("seed", range(5))
def test_block_recursion_equivalence(seed):
    assert block_equivalence_deviation(seed) <= 1e-12


def test_block_recursion_trivial_cases():
    _, _, L, ds = random_fixture(1)
    rng = np.random.default_rng(0)
    w = stack(random_weights(ds, rng), ds.dims)
    Hi = feature_block(ds, 3)
    grad = stacked_loss_gradient(w, ds, 3, 0.1)
    np.testing.assert_array_equal(block_recursion_step(w, Hi, L, grad, 0.0, 0.7), w)
    np.testing.assert_allclose(block_recursion_step(w, Hi, L, grad, 0.1, 0.0), w - 0.1 * grad,
                               atol=1e-15)
    with pytest.raises(ValueError):
        block_recursion_step(w[:-1], Hi, L, grad, 0.1, 0.0)


def test_feature_block_is_rank_one_per_agent():
    _, _, _, ds = random_fixture(2)
    Hi = feature_block(ds, 0)
    B = Hi @ Hi.T
    offsets = np.concatenate([[0], np.cumsum(ds.dims)])
    for k in range(ds.K):
        for ell in range(ds.K):
            if k != ell:
                assert not B[offsets[k]:offsets[k + 1], offsets[ell]:offsets[ell + 1]].any()


def test_average_update_direction_is_exact_gradient():
    g, ds = small_fixture(6, K=3)
    A = metropolis_weights(g)
    L = laplacian(A, g)
    cm = uniform_cluster_map(g, A)
    W = random_weights(ds, np.random.default_rng(1))
    idx = np.arange(ds.N)
    mu, eta, rho = 0.1, 0.1, 0.8
    loc = np.mean([(W - local_smoothing_step(W, ds.X[:, n], ds.Y[:, n], cm, mu, eta)) / mu
                   for n in idx], axis=0)
    np.testing.assert_allclose(loc, local_cost_grad(W, ds, idx, cm, eta), atol=1e-12)
    glob = np.mean([(W - global_smoothing_step(W, ds.X[:, n], ds.Y[:, n], L, mu, rho, eta)) / mu
                    for n in idx], axis=0)
    np.testing.assert_allclose(glob, smoothed_cost_grad(W, ds, idx, L, eta, rho), atol=1e-12)


def test_uniform_sampling_frequencies():
    train = np.arange(40) * 3
    draws = sample_indices(SplitIndices(train, np.array([], dtype=int)), 100_000, seed=5)
    counts = np.array([(draws == t).sum() for t in train])
    assert counts.sum() == 100_000
    p = 1 / len(train)
    sd = np.sqrt(100_000 * p * (1 - p))
    assert np.abs(counts - 100_000 * p).max() <= 5 * sd


def test_evaluate_sign_convention_and_errors():
    ds = NetworkDataset((AgentDataset(np.ones((4, 2)), np.array([1, -1, -1, 1])),
                         AgentDataset(np.ones((4, 1)), np.array([-1, -1, -1, 1]))), "external")
    per_agent, avg = evaluate(NetworkState.zeros(ds), ds, np.arange(4))
    np.testing.assert_array_equal(per_agent, [0.5, 0.75])
    assert avg == 0.625
    with pytest.raises(ValueError):
        evaluate(NetworkState.zeros(ds), ds, [])
    with pytest.raises(ValueError):
        evaluate(NetworkState.zeros(ds), ds, [0], rule="neighborhood")


def test_separable_fixture_reaches_zero_error():
    ds = NetworkDataset((AgentDataset(np.array([[1.0], [-1.0]] * 5), np.array([1, -1] * 5)),),
                        "uniform")
    split = SplitIndices(np.arange(10), np.arange(10))
    state, _ = train_noncooperative(ds, split, HyperParams(mu=0.5, eta=0.0, passes=5))
    assert evaluate(state, ds, split.test)[1] == 0.0


def test_divergence_is_reported():
    ds = two_agent(feats=(50.0, 50.0))
    split = SplitIndices(np.array([0]), np.array([], dtype=int))
    L = np.array([[0.5, -0.5], [-0.5, 0.5]])
    with pytest.raises(DivergedError) as err:
        train_global_smoothing(ds, split, L, HyperParams(mu=10.0, eta=50.0, passes=200))
    assert err.value.iteration >= 1
    assert str(err.value.iteration) in str(err.value)


def test_record_shapes_csv_and_state_round_trip(tmp_path):
    g, ds = small_fixture(0)
    L = laplacian(metropolis_weights(g), g)
    split = train_test_split(ds, 0.7, 0)
    hp = HyperParams(mu=0.05, rho=0.5, passes=2, eval_every=7)
    state, rec = train_global_smoothing(ds, split, L, hp, reference=np.zeros_like(ds.X[:, 0]))
    T = 2 * len(split.train)
    assert isinstance(rec, RunRecord) and rec.iterations == T and state.iteration == T
    assert len(rec.avg_train_loss) == len(rec.avg_test_err) == len(rec.msd) == T
    pts = rec.eval_points()
    np.testing.assert_array_equal(pts, sorted(set(range(6, T, 7)) | {T - 1}))
    rec.to_csv(tmp_path / "run.csv")
    lines = (tmp_path / "run.csv").read_text().splitlines()
    assert lines[0] == "iter,n,avg_train_loss,avg_test_err,msd"
    assert len(lines) == T + 1
    save_state(state, tmp_path / "s.json")
    back = load_state(tmp_path / "s.json")
    np.testing.assert_array_equal(back.W, state.W)
    np.testing.assert_array_equal(back.dims, ds.dims)


def test_training_is_deterministic():
    g, ds = small_fixture(1)
    A = metropolis_weights(g)
    L = laplacian(A, g)
    split = train_test_split(ds, 0.7, 0)
    hp = HyperParams(mu=0.05, rho=0.5, passes=3, seed=4)
    a = train_global_smoothing(ds, split, L, hp, uniform_cluster_map(g, A))
    b = train_global_smoothing(ds, split, L, hp, uniform_cluster_map(g, A))
    assert np.array_equal(a[0].W, b[0].W)
    assert np.array_equal(a[1].avg_test_err, b[1].avg_test_err, equal_nan=True)


@pytest.mark.xfail(strict=True, reason="single-sample test-error quanta make the 50-iteration "
                   "moving average rise slightly after the first pass")
def test_moving_average_test_error_non_increasing():
    cfg = experiments.canned_config("exp1-uniform").with_seed(0)
    net = experiments.build_network(cfg)
    t = cfg.train
    pass_len = len(net.split.train)
    for algorithm, rho in (("global", 0.1), ("local", 0.0), ("noncoop", 0.0)):
        hp = experiments.hyperparams(t, rho=rho, eval_every=1)
        _, rec = experiments.train_network(net, algorithm, hp)
        avg = np.convolve(rec.avg_test_err, np.ones(50) / 50, mode="valid")
        tail = avg[pass_len:]
        assert np.all(np.diff(tail) <= 0), algorithm
