# %% [markdown]
# # Convergence to the smoothed optimum
#
# With the l2 term the smoothed cost is strongly convex, so it has a single
# minimiser W*. Stochastic training with a constant step mu does not reach
# W* exactly. It hovers around W* at a mean-square distance of order mu.

# %%
import numpy as np

from netsmooth.analysis import (check_recursion_bound, gradient_noise_stats, msd_curve,
                                solve_reference, theoretical_rate)
from netsmooth.data import small_fixture, train_test_split
from netsmooth.graph import laplacian, metropolis_weights
from netsmooth.model import compute_constants
from netsmooth.train import HyperParams, train_global_smoothing

g, ds = small_fixture(0)
L = laplacian(metropolis_weights(g), g)
split = train_test_split(ds, 0.7, 0)
eta, rho = 0.1, 0.5

ref = solve_reference(ds, split, L, eta, rho)
print(f"reference: {ref.iterations} descent steps, gradient norm {ref.achieved_grad_norm:.1e}")

# %% [markdown]
# The stochastic gradient noise averages to zero over the training set, and
# its spread gives the constants in the rate.

# %%
consts = compute_constants(ds, eta)
noise = gradient_noise_stats(ref.W_star, ds, split, L, eta, rho, ref)
print(f"nu={consts.nu:.3f} delta={consts.delta:.3f} beta^2={noise.beta_s_sq:.3f} "
      f"sigma^2={noise.sigma_s_sq:.4f} mean noise={noise.empirical_mean_norm:.1e}")

# %% [markdown]
# Halving the step size roughly halves the plateau of the mean-square
# deviation. The averaged curve also stays under the one-step recursion bound.

# %%
plateaus = {}
for mu in (0.02, 0.01):
    rate = theoretical_rate(consts, noise, mu)
    records = [train_global_smoothing(ds, split, L, HyperParams(mu=mu, rho=rho, eta=eta,
                                                                passes=300, seed=s,
                                                                eval_every=10 ** 9),
                                      reference=ref.W_star)[1] for s in range(10)]
    mean, se = msd_curve(records, ref)
    plateaus[mu] = mean[len(mean) // 2:].mean()
    check = check_recursion_bound(mean, rate, se)
    print(f"mu={mu}: lambda={rate.lambda_:.5f} plateau={plateaus[mu]:.2e} "
          f"bound={rate.steady_state_bound:.2e} recursion holds at {100 * check.fraction_satisfied:.1f}%")
print(f"plateau ratio: {plateaus[0.02] / plateaus[0.01]:.2f}")
