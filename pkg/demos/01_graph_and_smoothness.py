# %% [markdown]
# # Graphs, combination weights and smoothness
#
# A network of agents lives on a random geometric graph in the unit square.
# Each agent mixes information from its neighbours with Metropolis weights,
# and the Laplacian built from those weights measures how much a signal
# varies across edges.

# %%
import numpy as np

from netsmooth.graph import (connected_geometric_graph, edge_smoothness, knn_graph, laplacian,
                             metropolis_weights, smoothness)

g, used_seed = connected_geometric_graph(50, 0.3, seed=0)
deg = g.degrees() - 1
print(f"K={g.K}, connected after seed {used_seed}, degree min/mean/max "
      f"{deg.min()}/{deg.mean():.1f}/{deg.max()}")

# %% [markdown]
# Metropolis weights give every edge 1/max(n_k, n_l) and put the leftover
# mass on the diagonal. The matrix is symmetric and doubly stochastic, so
# the degree matrix is the identity and L = I - A.

# %%
A = metropolis_weights(g)
L = laplacian(A, g)
print("row sums:", np.abs(A.sum(1) - 1).max(), " symmetry:", np.abs(A - A.T).max())
print("Laplacian row sums:", np.abs(L.sum(1)).max())

# %% [markdown]
# The quadratic form v^T L v is the edge sum 0.5 * sum a_kl (v_k - v_l)^2.
# A label field that changes once (left half vs right half) is far smoother
# than one that flips at random.

# %%
rng = np.random.default_rng(1)
half = np.where(g.coords[:, 0] <= np.median(g.coords[:, 0]), 1.0, -1.0)
noisy = rng.choice([-1.0, 1.0], size=g.K)
for name, v in (("constant", np.ones(g.K)), ("half-plane", half), ("random", noisy)):
    print(f"{name:>10}: v^T L v = {smoothness(L, v):7.3f}  (edge sum {edge_smoothness(A, v):7.3f})")

# %% [markdown]
# The k-nearest-neighbour construction used for station networks is
# symmetrised, so every node ends up with at least k neighbours.

# %%
gk = knn_graph(rng.uniform(size=(139, 2)), 6)
print("kNN degrees:", np.bincount(gk.degrees() - 1)[6:])
