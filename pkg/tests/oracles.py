"""Independent reference computations shared by the module and acceptance tests."""

import numpy as np

from netsmooth.data import FeatureSpec, generate_synthetic, train_test_split
from netsmooth.graph import laplacian, metropolis_weights, random_geometric_graph
from netsmooth.model import (build_cluster_map, local_cost, local_cost_grad, smoothed_cost,
                             smoothed_cost_grad, stack)
from netsmooth.train import (HyperParams, NetworkState, block_recursion_step, feature_block,
                             global_smoothing_step, sample_indices, stacked_loss_gradient,
                             train_global_smoothing)

FD_STEP = 1e-5


def random_fixture(seed, K=5, N=20):
    """Random geometric graph with synthetic uniform-label data."""
    g = random_geometric_graph(K, 0.7, seed)
    A = metropolis_weights(g)
    L = laplacian(A, g)
    ds = generate_synthetic(g, FeatureSpec(), "uniform", N, seed)
    return g, A, L, ds


def random_weights(ds, rng, scale=1.0):
    mask = np.arange(ds.X.shape[2])[None, :] < ds.dims[:, None]
    return scale * rng.standard_normal((ds.K, ds.X.shape[2])) * mask


def central_difference(f, W, dims):
    """Central finite-difference gradient of `f` over the active entries of W."""
    G = np.zeros_like(W)
    for k, M in enumerate(dims):
        for m in range(M):
            E = np.zeros_like(W)
            E[k, m] = FD_STEP
            G[k, m] = (f(W + E) - f(W - E)) / (2 * FD_STEP)
    return G


def rel_error(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def smoothed_gradient_error(seed):
    rng = np.random.default_rng(seed)
    _, _, L, ds = random_fixture(seed, K=int(rng.integers(2, 7)), N=12)
    W = random_weights(ds, rng)
    rho, eta = rng.uniform(0, 2), rng.uniform(0.01, 0.5)
    idx = np.arange(ds.N)
    an = smoothed_cost_grad(W, ds, idx, L, eta, rho)
    fd = central_difference(lambda V: smoothed_cost(V, ds, idx, L, eta, rho), W, ds.dims)
    return rel_error(fd, an)


def local_gradient_error(seed):
    rng = np.random.default_rng(seed)
    g, A, _, ds = random_fixture(seed, K=int(rng.integers(2, 7)), N=12)
    cm = build_cluster_map(g, A, rng.choice([-1, 1], size=g.K))
    W = random_weights(ds, rng)
    eta = rng.uniform(0.01, 0.5)
    idx = np.arange(ds.N)
    an = local_cost_grad(W, ds, idx, cm, eta)
    fd = central_difference(lambda V: local_cost(V, ds, idx, cm, eta), W, ds.dims)
    return rel_error(fd, an)


def block_equivalence_deviation(seed, iters=100, mu=0.05, rho=0.7, eta=0.1):
    """Max entrywise gap between the per-agent loop and the stacked block recursion.

    Both the raw step function (compared after every iteration) and the
    trainer's final state are checked.
    """
    rng = np.random.default_rng(seed)
    _, _, L, ds = random_fixture(seed, K=5, N=20)
    split = train_test_split(ds, 0.5, seed)
    passes = iters // len(split.train)
    hp = HyperParams(mu=mu, rho=rho, eta=eta, passes=passes, seed=seed, eval_every=10 ** 9)
    W0 = random_weights(ds, rng, 0.5)
    state, record = train_global_smoothing(ds, split, L, hp, init=NetworkState(W0, ds.dims))

    draws = sample_indices(split, passes * len(split.train), seed)
    np.testing.assert_array_equal(draws, record.n)
    W, w = W0.copy(), stack(W0, ds.dims)
    worst = 0.0
    for n in draws:
        W = global_smoothing_step(W, ds.X[:, n], ds.Y[:, n], L, mu, rho, eta)
        w = block_recursion_step(w, feature_block(ds, n), L,
                                 stacked_loss_gradient(w, ds, n, eta), mu, rho)
        worst = max(worst, float(np.abs(stack(W, ds.dims) - w).max()))
    worst = max(worst, float(np.abs(state.stacked() - w).max()))
    return worst
