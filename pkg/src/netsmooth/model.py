"""
Logistic loss, l2 regulariser, prediction rules and the two network costs.

Weights of the whole network are held as a zero-padded array ``W`` of shape
(K, M_max); row k carries w_k in its first M_k entries. Because features are
padded with zeros as well, the padded entries never move during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import NetworkDataset
from .graph import Graph

# beyond this margin exp() is evaluated on the negated argument
_OVERFLOW_BRANCH = 30.0


@dataclass(frozen=True)
class ModelConstants:
    nu: float     # strong-convexity modulus
    delta: float  # gradient Lipschitz constant


@dataclass(frozen=True, eq=False)
class ClusterMap:
    """Same-class neighbourhoods C_k and the weights a[l, k] used by the
    neighbourhood-average prediction.

    ``operator[k, l] = a[l, k] / |C_k|`` for l in C_k and 0 otherwise, so the
    neighbourhood predictions at sample n are ``operator @ linear_predictions``.
    """

    members: tuple[tuple[int, ...], ...]
    operator: np.ndarray

    @property
    def K(self) -> int:
        return len(self.members)


def predict_linear(w, h) -> float:
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if w.shape != h.shape:
        raise ValueError(f"weight shape {w.shape} does not match feature shape {h.shape}")
    return float(h @ w)


def predict_neighborhood(states, features_at_n, cm: ClusterMap, k: int) -> float:
    """Average of same-class neighbours' linear predictions, weighted by a[l, k].

    Parameters
    ----------
    states : sequence of ndarray
        Weight vector w_l of every agent.
    features_at_n : sequence of ndarray
        Feature vector h_{l,n} of every agent at one sample index.
    cm : ClusterMap
    k : int
        Agent whose prediction is formed.
    """
    total = 0.0
    for ell in cm.members[k]:
        total += cm.operator[k, ell] * predict_linear(states[ell], features_at_n[ell])
    return total


def logistic_loss(gamma, gamma_hat):
    """``log(1 + exp(-gamma * gamma_hat))`` without overflow. Works elementwise."""
    z = -np.asarray(gamma, dtype=float) * np.asarray(gamma_hat, dtype=float)
    big = z > _OVERFLOW_BRANCH
    safe = np.where(big, -z, z)
    out = np.where(big, z + np.log1p(np.exp(safe)), np.log1p(np.exp(safe)))
    return out if out.ndim else float(out)


def loss_grad_scalar(gamma, gamma_hat):
    """Derivative of the logistic loss in the prediction: ``-gamma / (1 + exp(gamma * gamma_hat))``."""
    gamma = np.asarray(gamma, dtype=float)
    out = -gamma * expit(-gamma * np.asarray(gamma_hat, dtype=float))
    return out if out.ndim else float(out)


def regularizer(w, eta: float) -> float:
    w = np.asarray(w, dtype=float)
    return float(eta * (w * w).sum())


def regularizer_grad(w, eta: float) -> np.ndarray:
    return 2.0 * eta * np.asarray(w, dtype=float)


def compute_constants(ds: NetworkDataset, eta: float) -> ModelConstants:
    """Strong convexity and smoothness constants of logistic + l2 cost.

    ``nu = 2*eta`` and ``delta = 2*eta + max ||h||^2 / 4`` since the logistic
    curvature never exceeds 1/4.
    """
    if eta <= 0:
        raise ValueError("eta must be positive: without the l2 term the cost is not "
                         "strongly convex and the convergence bound does not apply")
    hmax = float((ds.X ** 2).sum(axis=-1).max())
    return ModelConstants(nu=2.0 * eta, delta=2.0 * eta + hmax / 4.0)


def build_cluster_map(g: Graph, A, class_of) -> ClusterMap:
    """C_k = neighbours of k sharing its class. Agent k is always a member."""
    A = np.asarray(A, dtype=float)
    class_of = np.asarray(class_of)
    members = tuple(tuple(ell for ell in nb if class_of[ell] == class_of[k])
                    for k, nb in enumerate(g.neighborhoods))
    op = np.zeros((g.K, g.K))
    for k, Ck in enumerate(members):
        for ell in Ck:
            op[k, ell] = A[ell, k] / len(Ck)
    return ClusterMap(members, op)


def uniform_cluster_map(g: Graph, A) -> ClusterMap:
    return build_cluster_map(g, A, np.ones(g.K, dtype=int))


def singleton_cluster_map(K: int) -> ClusterMap:
    """C_k = {k} with unit weight: the neighbourhood rule collapses to the linear one."""
    return ClusterMap(tuple((k,) for k in range(K)), np.eye(K))


# -- stacked representation -----------------------------------------------

def stack(W, dims) -> np.ndarray:
    """Padded (K, M_max) weights -> stacked vector col{w_k} of length sum(dims)."""
    return np.concatenate([W[k, :M] for k, M in enumerate(dims)])


def unstack(vec, dims, M_max=None) -> np.ndarray:
    dims = np.asarray(dims)
    M_max = int(dims.max()) if M_max is None else M_max
    W = np.zeros((len(dims), M_max))
    offsets = np.concatenate([[0], np.cumsum(dims)])
    for k, M in enumerate(dims):
        W[k, :M] = vec[offsets[k]:offsets[k + 1]]
    return W


def linear_predictions(W, X) -> np.ndarray:
    """Predictions h_{k,n}^T w_k for every agent and sample, shape (K, N)."""
    return np.einsum("knm,km->kn", X, W)


# -- costs -----------------------------------------------------------------

def smoothed_cost(W, ds: NetworkDataset, idx, L, eta: float, rho: float) -> float:
    """Empirical cost with the Laplacian smoothing term, averaged over `idx`.

    ``(1/|idx|) sum_n [ sum_k Q(y_k(n), h^T w_k) + 0.5*rho*g_n^T L g_n ]
    + eta * sum_k ||w_k||^2``.
    """
    X, Y = ds.X[:, idx], ds.Y[:, idx]
    G = linear_predictions(W, X)
    data = logistic_loss(Y, G).sum(axis=0).mean()
    smooth = 0.5 * rho * np.einsum("kn,kl,ln->n", G, L, G).mean()
    return float(data + smooth + eta * (W * W).sum())


def smoothed_cost_grad(W, ds: NetworkDataset, idx, L, eta: float, rho: float) -> np.ndarray:
    """Gradient of `smoothed_cost` in padded (K, M_max) layout."""
    X, Y = ds.X[:, idx], ds.Y[:, idx]
    G = linear_predictions(W, X)
    coeff = loss_grad_scalar(Y, G) + rho * (L @ G)
    return np.einsum("kn,knm->km", coeff, X) / len(idx) + 2.0 * eta * W


def local_cost(W, ds: NetworkDataset, idx, cm: ClusterMap, eta: float) -> float:
    """Empirical logistic cost when agents predict with neighbourhood averages."""
    X, Y = ds.X[:, idx], ds.Y[:, idx]
    P = cm.operator @ linear_predictions(W, X)
    return float(logistic_loss(Y, P).sum(axis=0).mean() + eta * (W * W).sum())


def local_cost_grad(W, ds: NetworkDataset, idx, cm: ClusterMap, eta: float) -> np.ndarray:
    """Exact gradient of `local_cost`, including cross-agent terms."""
    X, Y = ds.X[:, idx], ds.Y[:, idx]
    P = cm.operator @ linear_predictions(W, X)
    coeff = cm.operator.T @ loss_grad_scalar(Y, P)
    return np.einsum("kn,knm->km", coeff, X) / len(idx) + 2.0 * eta * W
