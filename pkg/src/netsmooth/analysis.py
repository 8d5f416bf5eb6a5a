"""
Convergence diagnostics for the Laplacian-smoothed network.

Everything here works on stacked vectors ``col{w_k}`` (length sum M_k) or on
the padded (K, M_max) layout used by the trainers; expectations over the
sample index are exhaustive averages over the training split.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .data import NetworkDataset, SplitIndices
from .model import (ModelConstants, compute_constants, loss_grad_scalar, smoothed_cost,
                    smoothed_cost_grad, stack, unstack)
from .train import RunRecord, feature_block


class ReferenceNotReached(RuntimeError):
    def __init__(self, grad_norm: float, iterations: int):
        super().__init__(f"reference solver stopped after {iterations} iterations "
                         f"with gradient norm {grad_norm:.3e}")
        self.grad_norm = grad_norm


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    W_star: np.ndarray  # padded (K, M_max)
    achieved_grad_norm: float
    rho: float
    iterations: int = 0

    def stacked(self, dims) -> np.ndarray:
        return stack(self.W_star, dims)


@dataclass(frozen=True)
class NoiseStats:
    empirical_mean_norm: float
    empirical_second_moment: float
    beta_s_sq: float
    sigma_s_sq: float
    B_spread: float
    B_bar: np.ndarray


@dataclass(frozen=True)
class RateReport:
    lambda_: float
    mu_bound: float
    steady_state_bound: float
    mu: float
    sigma_s_sq: float
    # the contraction factor with the mu^2 factor dropped, for comparison
    lambda_without_mu_sq: float

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["lambda"] = doc.pop("lambda_")
        return doc


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    first_violation: int | None
    fraction_satisfied: float


def solve_reference(ds: NetworkDataset, split: SplitIndices, L, eta: float, rho: float,
                    tol: float = 1e-10, max_iters: int = 200_000) -> ReferenceSolution:
    """Minimise the smoothed cost on the training split by gradient descent.

    Each iteration starts from step ``1/delta`` and halves it until the Armijo
    condition holds (up to a rounding allowance on the cost).
    """
    if eta <= 0:
        raise ValueError("eta must be positive for a unique minimiser")
    L = np.asarray(L, dtype=float)
    idx = split.train
    delta = compute_constants(ds, eta).delta
    W = np.zeros((ds.K, ds.X.shape[2]))

    def cost(V):
        return smoothed_cost(V, ds, idx, L, eta, rho)

    def grad(V):
        return smoothed_cost_grad(V, ds, idx, L, eta, rho)

    f = cost(W)
    g = grad(W)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > tol:
        if it >= max_iters:
            raise ReferenceNotReached(gnorm, it)
        t = 1.0 / delta
        gg = gnorm ** 2
        allowance = 8 * np.finfo(float).eps * max(abs(f), 1.0)
        while True:
            V = W - t * g
            fv = cost(V)
            if fv <= f - 0.5 * t * gg:
                gv = grad(V)
                break
            # cost differences at rounding level: fall back on the gradient norm
            if abs(fv - f) <= allowance:
                gv = grad(V)
                if np.linalg.norm(gv) < gnorm:
                    break
            if t < 1e-20:
                raise ReferenceNotReached(gnorm, it)
            t *= 0.5
        W, f, g = V, fv, gv
        gnorm = float(np.linalg.norm(g))
        it += 1
    return ReferenceSolution(W, gnorm, float(rho), it)


def msd_curve(records: list[RunRecord], ref: ReferenceSolution):
    """Seed-averaged squared distance to the reference optimum.

    Returns
    -------
    mean, stderr : ndarray
        Pointwise mean and standard error over the records, indexed by
        iteration with entry 0 at the starting point (stderr is zero for a
        single record).
    """
    if not records:
        raise ValueError("need at least one run record")
    for r in records:
        if r.msd is None:
            raise ValueError("run record carries no MSD series; train with reference=")
        if r.rho != ref.rho:
            raise ValueError(f"record trained with rho={r.rho} but reference solved for rho={ref.rho}")
    lengths = {len(r.msd) for r in records}
    if len(lengths) != 1:
        raise ValueError("records have different iteration counts")
    curves = np.stack([np.concatenate([[r.extra.get("msd0", np.nan)], r.msd]) for r in records])
    mean = curves.mean(axis=0)
    if len(records) == 1:
        return mean, np.zeros_like(mean)
    return mean, curves.std(axis=0, ddof=1) / np.sqrt(len(records))


def _per_index_terms(W, ds, idx, L, eta, rho):
    """Stacked stochastic gradients and coupling matrices for every index."""
    dims = ds.dims
    w = stack(W, dims)
    grads, Bs, qs = [], [], []
    for n in idx:
        H = feature_block(ds, n)
        g_hat = H.T @ w
        q = H @ loss_grad_scalar(ds.Y[:, n], g_hat) + 2.0 * eta * w
        B = H @ L @ H.T
        grads.append(q + rho * (B @ w))
        Bs.append(B)
        qs.append(q)
    return np.array(grads), np.array(Bs), np.array(qs)


def gradient_noise_stats(W, ds: NetworkDataset, split: SplitIndices, L, eta: float,
                         rho: float, ref: ReferenceSolution | None = None) -> NoiseStats:
    """Gradient-noise moments at the padded state `W`.

    The full gradient is taken from `smoothed_cost_grad` so the zero-mean
    check compares two independent evaluations. The constants are

    ``beta_s^2 = 8 delta^2 + 4 rho^2 E||B_n - B_bar||_F^2``
    ``sigma_s^2 = 4 E||q*_n - rho B_n W*||^2``

    where q*_n is the stacked loss-plus-regulariser gradient at the optimum
    (``ref``, defaulting to `W`).
    """
    L = np.asarray(L, dtype=float)
    idx = split.train
    grads, Bs, _ = _per_index_terms(W, ds, idx, L, eta, rho)
    full = stack(smoothed_cost_grad(W, ds, idx, L, eta, rho), ds.dims)
    noise = grads - full
    B_bar = Bs.mean(axis=0)
    spread = float(((Bs - B_bar) ** 2).sum(axis=(1, 2)).mean())

    W_star = W if ref is None else ref.W_star
    _, Bs_star, q_star = _per_index_terms(W_star, ds, idx, L, eta, rho)
    w_star = stack(W_star, ds.dims)
    resid = q_star - rho * np.einsum("nij,j->ni", Bs_star, w_star)
    sigma_sq = 4.0 * float((resid ** 2).sum(axis=1).mean())

    delta = compute_constants(ds, eta).delta if eta > 0 else float(
        (ds.X ** 2).sum(axis=-1).max() / 4.0)
    return NoiseStats(
        empirical_mean_norm=float(np.linalg.norm(noise.mean(axis=0))),
        empirical_second_moment=float((noise ** 2).sum(axis=1).mean()),
        beta_s_sq=8.0 * delta ** 2 + 4.0 * rho ** 2 * spread,
        sigma_s_sq=sigma_sq,
        B_spread=spread,
        B_bar=B_bar,
    )


def theoretical_rate(consts: ModelConstants, noise: NoiseStats, mu: float) -> RateReport:
    """Contraction factor ``1 - 2 nu mu + mu^2 (delta^2 + beta^2)`` and the
    resulting steady-state bound ``mu^2 sigma^2 / (1 - lambda)``.
    """
    curvature = consts.delta ** 2 + noise.beta_s_sq
    bound = 2.0 * consts.nu / curvature
    if not 0 < mu < bound:
        raise ValueError(f"step size {mu} outside the admissible range (0, {bound:.6g})")
    lam = 1.0 - 2.0 * consts.nu * mu + mu ** 2 * curvature
    return RateReport(
        lambda_=lam,
        mu_bound=bound,
        steady_state_bound=mu ** 2 * noise.sigma_s_sq / (1.0 - lam),
        mu=mu,
        sigma_s_sq=noise.sigma_s_sq,
        lambda_without_mu_sq=1.0 - 2.0 * consts.nu * mu + curvature,
    )


def iterate_bound(x0: float, rate: RateReport, steps: int) -> np.ndarray:
    """Iterates of ``x_i = lambda x_{i-1} + mu^2 sigma^2`` starting from `x0`."""
    out = np.empty(steps + 1)
    out[0] = x0
    drift = rate.mu ** 2 * rate.sigma_s_sq
    for i in range(steps):
        out[i + 1] = rate.lambda_ * out[i] + drift
    return out


def check_recursion_bound(msd, rate: RateReport, stderr=None, slack: float = 3.0) -> BoundCheck:
    """Check ``msd_i <= lambda msd_{i-1} + mu^2 sigma^2 + slack * stderr_i``.

    `msd` is the seed-averaged curve whose first entry is the distance at the
    starting point.
    """
    msd = np.asarray(msd, dtype=float)
    se = np.zeros_like(msd) if stderr is None else np.asarray(stderr, dtype=float)
    if len(msd) < 2:
        return BoundCheck(True, None, 1.0)
    rhs = rate.lambda_ * msd[:-1] + rate.mu ** 2 * rate.sigma_s_sq + slack * se[1:]
    ok = msd[1:] <= rhs
    bad = np.flatnonzero(~ok)
    first = None if bad.size == 0 else int(bad[0]) + 1
    return BoundCheck(bool(ok.all()), first, float(ok.mean()))


def diagnostics_report(consts: ModelConstants, noise: NoiseStats, rate: RateReport,
                       check: BoundCheck, ref: ReferenceSolution) -> dict:
    return {
        "constants": {
            "nu": consts.nu,
            "nu_source": "2*eta (l2 term only; the logistic part adds curvature)",
            "delta": consts.delta,
            "beta_s_sq": noise.beta_s_sq,
            "sigma_s_sq": noise.sigma_s_sq,
            **rate.to_json(),
        },
        "empirical": {
            "noise_mean_norm": noise.empirical_mean_norm,
            "noise_second_moment": noise.empirical_second_moment,
            "B_spread": noise.B_spread,
            "reference_grad_norm": ref.achieved_grad_norm,
            "reference_rho": ref.rho,
        },
        "bound_check": {
            "holds": check.holds,
            "first_violation": check.first_violation,
            "fraction_satisfied": check.fraction_satisfied,
        },
    }


def write_msd_csv(path, mean, stderr) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "msd_mean", "msd_stderr"])
        for i, (m, s) in enumerate(zip(mean, stderr)):
            writer.writerow([i, repr(float(m)), repr(float(s))])


def stacked_to_padded(vec, ds: NetworkDataset) -> np.ndarray:
    return unstack(vec, ds.dims, ds.X.shape[2])
