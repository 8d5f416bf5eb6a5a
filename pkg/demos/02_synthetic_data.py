# %% [markdown]
# # Synthetic network data
#
# Every agent observes the same N events but through a different number of
# attributes M_k (1 to 5). Attributes are Gaussian with class-dependent mean
# +/- s * mu_m, so agents with one attribute are weak classifiers on their own.

# %%
import tempfile

import numpy as np

from netsmooth.data import (FeatureSpec, export_network_csv, generate_synthetic,
                            half_plane_classes, load_network_csv, train_test_split)
from netsmooth.graph import connected_geometric_graph

g, _ = connected_geometric_graph(50, 0.3, seed=0)
spec = FeatureSpec()
print("attribute means:", np.round(spec.attr_means, 3), " separation s =", spec.class_separation)

uniform = generate_synthetic(g, spec, "uniform", 200, seed=0)
print("feature widths:", np.bincount(uniform.dims, minlength=6)[1:], "agents with M = 1..5")
print("all agents share each label:", bool(np.all(uniform.Y == uniform.Y[0])))

# %% [markdown]
# In the clustered pattern the left half of the square sees the labels
# flipped. Labels then agree only within each half.

# %%
classes = half_plane_classes(g)
clustered = generate_synthetic(g, spec, "clustered", 200, seed=0, classes=classes)
print("agents per class:", {int(c): int((classes == c).sum()) for c in (1, -1)})
print("label agreement with agent 0:", np.mean(clustered.Y == clustered.Y[0], axis=1)[:8])

# %% [markdown]
# The split is shared by all agents since sample n is one network-wide
# event. Datasets travel as a manifest plus one CSV per agent, and reading
# them back is exact.

# %%
split = train_test_split(uniform, 0.7, seed=0)
print("train/test sizes:", len(split.train), len(split.test))
with tempfile.TemporaryDirectory() as tmp:
    manifest = export_network_csv(uniform, tmp, coords=g.coords)
    coords, back = load_network_csv(manifest)
print("round trip exact:", back.equals(uniform) and np.array_equal(coords, g.coords))
