"""
Stochastic-gradient training of network classifiers.

Three engines share one synchronous loop: at every iteration a single
training index n is drawn for the whole network, every agent computes its
gradient from the frozen previous weights, and all weights are updated
together.

* global smoothing: logistic loss plus a Laplacian penalty on the vector of
  linear predictions at sample n;
* local smoothing: agents predict with the weighted average of same-class
  neighbours' predictions;
* non-cooperative: global smoothing with ``rho = 0``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import NetworkDataset, SplitIndices
from .model import (ClusterMap, linear_predictions, logistic_loss, loss_grad_scalar,
                    singleton_cluster_map, stack)

GRAD_MODES = ("full", "own-term")
ALGORITHMS = ("global", "local", "noncoop")
RULES = ("linear", "neighborhood")

_WEIGHT_LIMIT = 1e12


class DivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"training diverged at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class HyperParams:
    mu: float
    rho: float = 0.0
    eta: float = 0.1
    passes: int = 1
    seed: int = 0
    grad_mode: str = "full"
    eval_every: int = 10
    literal_alg1: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"step size mu must be positive, got {self.mu}")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.passes < 1:
            raise ValueError("passes must be at least 1")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")


@dataclass
class NetworkState:
    """Padded weights ``W`` (K, M_max); agent k owns ``W[k, :dims[k]]``."""

    W: np.ndarray
    dims: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, ds: NetworkDataset) -> "NetworkState":
        return cls(np.zeros((ds.K, ds.X.shape[2])), ds.dims.copy())

    def weights(self) -> list[np.ndarray]:
        return [self.W[k, :M].copy() for k, M in enumerate(self.dims)]

    def stacked(self) -> np.ndarray:
        return stack(self.W, self.dims)

    def to_json(self) -> dict:
        return {"iteration": self.iteration,
                "agents": [{"k": k, "w": [float(x) for x in w]}
                           for k, w in enumerate(self.weights())]}

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkState":
        ws = [np.asarray(a["w"], dtype=float) for a in sorted(doc["agents"], key=lambda a: a["k"])]
        dims = np.array([len(w) for w in ws])
        W = np.zeros((len(ws), dims.max()))
        for k, w in enumerate(ws):
            W[k, :len(w)] = w
        return cls(W, dims, int(doc.get("iteration", 0)))


@dataclass
class RunRecord:
    """Per-iteration trace of one training run.

    Loss and test error are NaN except at evaluation iterations.
    """

    algorithm: str
    rho: float
    n: np.ndarray
    avg_train_loss: np.ndarray
    avg_test_err: np.ndarray
    msd: np.ndarray | None
    final: NetworkState
    train_size: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.n)

    def eval_points(self) -> np.ndarray:
        """Zero-based positions where the test error was evaluated."""
        return np.flatnonzero(~np.isnan(self.avg_test_err))

    def to_csv(self, path) -> None:
        def cell(x):
            return "" if x is None or np.isnan(x) else repr(float(x))

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "n", "avg_train_loss", "avg_test_err", "msd"])
            for i in range(self.iterations):
                msd = None if self.msd is None else self.msd[i]
                writer.writerow([i + 1, int(self.n[i]), cell(self.avg_train_loss[i]),
                                 cell(self.avg_test_err[i]), cell(msd)])


def sample_indices(split: SplitIndices, count: int, seed: int) -> np.ndarray:
    """Uniform draws (with replacement) from the training indices."""
    rng = np.random.default_rng(seed)
    return split.train[rng.integers(0, len(split.train), size=count)]


def _predict_at(W, h):
    # fixed left-to-right accumulation over attributes: zero padding adds exact
    # zeros, so an agent's arithmetic does not depend on the other agents
    out = h[:, 0] * W[:, 0]
    for m in range(1, W.shape[1]):
        out = out + h[:, m] * W[:, m]
    return out


def _check(W, iteration):
    if not np.all(np.isfinite(W)) or np.abs(W).max(initial=0.0) > _WEIGHT_LIMIT:
        raise DivergedError(iteration)


def _errors(W, X, Y, cm, rule):
    G = linear_predictions(W, X)
    if rule == "neighborhood":
        if cm is None:
            raise ValueError("the neighborhood rule needs a cluster map")
        G = cm.operator @ G
    pred = np.where(G >= 0, 1.0, -1.0)
    return (pred != Y).mean(axis=1)


def evaluate(state: NetworkState, ds: NetworkDataset, indices, cm: ClusterMap | None = None,
             rule: str = "linear"):
    """Misclassification rates on `indices`.

    Labels are predicted as ``sign(prediction)`` with ``sign(0) = +1``.

    Returns
    -------
    per_agent : ndarray, shape (K,)
    average : float
    """
    indices = np.asarray(indices)
    if indices.size == 0:
        raise ValueError("cannot evaluate on an empty index set")
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    per_agent = _errors(state.W, ds.X[:, indices], ds.Y[:, indices], cm, rule)
    return per_agent, float(per_agent.mean())


def _train_loss(W, X, Y, cm):
    G = linear_predictions(W, X)
    if cm is not None:
        G = cm.operator @ G
    return float(logistic_loss(Y, G).mean())


def _run(ds, split, hp, step, *, algorithm, train_cm, test_cm, test_rule, init, reference):
    T = hp.passes * len(split.train)
    draws = sample_indices(split, T, hp.seed)
    state = NetworkState.zeros(ds) if init is None else NetworkState(
        np.array(init.W, dtype=float), ds.dims.copy())
    W = state.W
    ref = None if reference is None else np.asarray(reference, dtype=float)
    losses = np.full(T, np.nan)
    errors = np.full(T, np.nan)
    msd = None if ref is None else np.empty(T)
    X, Y = ds.X, ds.Y
    Xtr, Ytr = X[:, split.train], Y[:, split.train]
    Xte, Yte = X[:, split.test], Y[:, split.test]
    do_test = len(split.test) > 0
    if do_test and test_rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    for i in range(T):
        n = draws[i]
        W = step(W, X[:, n, :], Y[:, n])
        _check(W, i + 1)
        if msd is not None:
            msd[i] = ((ref - W) ** 2).sum()
        if (i + 1) % hp.eval_every == 0 or i == T - 1:
            losses[i] = _train_loss(W, Xtr, Ytr, train_cm)
            if do_test:
                errors[i] = _errors(W, Xte, Yte, test_cm, test_rule).mean()
    final = NetworkState(W, ds.dims.copy(), T)
    record = RunRecord(algorithm, hp.rho, draws, losses, errors, msd, final, len(split.train))
    if ref is not None:
        record.extra["msd0"] = float(((ref - state.W) ** 2).sum())
    return final, record


def global_smoothing_step(W, h, y, L, mu, rho, eta, literal=False):
    """One synchronous update of the Laplacian-smoothed network.

    Parameters
    ----------
    W : ndarray, shape (K, M_max)
        Padded weights at the previous iteration (not modified).
    h : ndarray, shape (K, M_max)
        Padded features of every agent at the sampled index.
    y : ndarray, shape (K,)
        Labels at the sampled index.
    literal : bool
        Use ``g' = g - mu*rho*coupling`` as printed in the algorithm listing
        instead of the gradient-consistent ``g' = g + rho*coupling``.
    """
    g_hat = _predict_at(W, h)
    grad = loss_grad_scalar(y, g_hat)[:, None] * h + 2.0 * eta * W
    if rho != 0:
        # (L g_hat)_k = sum_{l in N_k} a_kl (g_hat_k - g_hat_l)
        coupling = (L @ g_hat)[:, None] * h
        grad = grad - mu * rho * coupling if literal else grad + rho * coupling
    return W - mu * grad


def local_smoothing_step(W, h, y, cm: ClusterMap, mu, eta, grad_mode="full"):
    """One synchronous update when agents predict with neighbourhood averages."""
    g_hat = cm.operator @ _predict_at(W, h)
    dq = loss_grad_scalar(y, g_hat)
    if grad_mode == "full":
        coeff = cm.operator.T @ dq
    else:
        coeff = np.diag(cm.operator) * dq
    grad = coeff[:, None] * h + 2.0 * eta * W
    return W - mu * grad


def train_global_smoothing(ds: NetworkDataset, split: SplitIndices, L, hp: HyperParams,
                           cm: ClusterMap | None = None, *, test_rule="neighborhood",
                           init: NetworkState | None = None, reference=None):
    """Train with global Laplacian smoothing of the predictions.

    Parameters
    ----------
    ds, split : dataset and its shared train/test split
    L : ndarray, shape (K, K)
        Graph Laplacian.
    hp : HyperParams
    cm : ClusterMap, optional
        Used to evaluate test error with the neighbourhood rule.
    test_rule : {'neighborhood', 'linear'}
    init : NetworkState, optional
        Starting weights; zero by default.
    reference : ndarray, optional
        Padded optimum; when given the squared distance to it is recorded
        after every iteration.

    Returns
    -------
    state : NetworkState
    record : RunRecord
    """
    L = np.asarray(L, dtype=float)
    if test_rule == "neighborhood" and cm is None:
        test_rule = "linear"

    def step(W, h, y):
        return global_smoothing_step(W, h, y, L, hp.mu, hp.rho, hp.eta, hp.literal_alg1)

    return _run(ds, split, hp, step, algorithm="global", train_cm=None, test_cm=cm,
                test_rule=test_rule, init=init, reference=reference)


def train_local_smoothing(ds: NetworkDataset, split: SplitIndices, hp: HyperParams,
                          cm: ClusterMap, *, init: NetworkState | None = None, reference=None):
    """Train with neighbourhood-average predictions over static clusters.

    ``hp.grad_mode = 'full'`` differentiates the network cost exactly (an
    agent's weights also enter its neighbours' predictions); ``'own-term'``
    keeps only the derivative through the agent's own prediction.
    """
    def step(W, h, y):
        return local_smoothing_step(W, h, y, cm, hp.mu, hp.eta, hp.grad_mode)

    return _run(ds, split, hp, step, algorithm="local", train_cm=cm, test_cm=cm,
                test_rule="neighborhood", init=init, reference=reference)


def train_noncooperative(ds: NetworkDataset, split: SplitIndices, hp: HyperParams, *,
                         init: NetworkState | None = None, reference=None):
    """Independent per-agent SGD (the ``rho = 0`` baseline), evaluated agent by agent."""
    hp = replace(hp, rho=0.0)
    L = np.zeros((ds.K, ds.K))
    state, record = train_global_smoothing(ds, split, L, hp, None, test_rule="linear",
                                           init=init, reference=reference)
    record.algorithm = "noncoop"
    return state, record


def train_single_agent(ds: NetworkDataset, split: SplitIndices, hp: HyperParams, k: int):
    """Plain logistic SGD for agent `k` alone, sharing the network's index draws."""
    sub = ds.subset_agents([k])
    return train_noncooperative(sub, split, hp)


# -- block (stacked) form --------------------------------------------------

def feature_block(ds: NetworkDataset, n: int) -> np.ndarray:
    """Block-diagonal operator of shape (sum M_k, K) with h_{k,n} in block k.

    Its transpose maps stacked weights to the vector of predictions at n.
    """
    dims = ds.dims
    H = np.zeros((dims.sum(), ds.K))
    offset = 0
    for k, a in enumerate(ds.agents):
        H[offset:offset + a.M, k] = a.features[n]
        offset += a.M
    return H


def stacked_loss_gradient(w_stacked, ds: NetworkDataset, n: int, eta: float) -> np.ndarray:
    """col{ dQ/dw_k at sample n + 2*eta*w_k } in stacked layout."""
    H = feature_block(ds, n)
    g_hat = H.T @ w_stacked
    dq = loss_grad_scalar(ds.Y[:, n], g_hat)
    return H @ dq + 2.0 * eta * w_stacked


def block_recursion_step(W, Hi, L, grad_hat, mu: float, rho: float) -> np.ndarray:
    """``(I - mu*rho*Hi L Hi^T) W - mu*grad_hat`` on stacked vectors."""
    W = np.asarray(W, dtype=float)
    Hi = np.asarray(Hi, dtype=float)
    L = np.asarray(L, dtype=float)
    grad_hat = np.asarray(grad_hat, dtype=float)
    if Hi.shape != (W.shape[0], L.shape[0]) or grad_hat.shape != W.shape:
        raise ValueError(f"inconsistent shapes: W {W.shape}, Hi {Hi.shape}, "
                         f"L {L.shape}, grad {grad_hat.shape}")
    B = Hi @ L @ Hi.T
    return W - mu * rho * (B @ W) - mu * grad_hat


def save_state(state: NetworkState, path) -> None:
    Path(path).write_text(json.dumps(state.to_json()))


def load_state(path) -> NetworkState:
    return NetworkState.from_json(json.loads(Path(path).read_text()))
