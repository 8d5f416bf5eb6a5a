# %% [markdown]
# # Ingesting a station network from CSV
#
# Real sensor data arrives as a manifest, one CSV per station and a file of
# station coordinates. This script writes a small network in that layout,
# including 0/1 labels declared through a label mapping, and trains on it.

# %%
import json
import tempfile
from pathlib import Path

import numpy as np

from netsmooth.data import load_network_csv, train_test_split
from netsmooth.graph import knn_graph, laplacian, metropolis_weights
from netsmooth.model import uniform_cluster_map
from netsmooth.train import HyperParams, evaluate, train_global_smoothing, train_noncooperative

rng = np.random.default_rng(0)
K, N = 20, 300
coords = rng.uniform(size=(K, 2))
rain = rng.random(N) < 0.4          # shared event: rain the next day
tmp = Path(tempfile.mkdtemp())
entries = []
for k in range(K):
    M = 1 + k % 5
    feats = (np.where(rain, 0.5, -0.5)[:, None] * np.linspace(1, 0.4, M)
             + rng.standard_normal((N, M)))
    rows = ["n,label," + ",".join(f"f{m + 1}" for m in range(M))]
    rows += [f"{n},{int(rain[n])}," + ",".join(repr(float(x)) for x in feats[n]) for n in range(N)]
    (tmp / f"station_{k}.csv").write_text("\n".join(rows) + "\n")
    entries.append({"id": k, "file": f"station_{k}.csv"})
(tmp / "stations.csv").write_text("agent_id,x,y\n" + "".join(
    f"{k},{float(x)!r},{float(y)!r}\n" for k, (x, y) in enumerate(coords)))
(tmp / "manifest.json").write_text(json.dumps(
    {"N": N, "label_mapping": {"0": -1, "1": 1}, "agents": entries, "stations": "stations.csv"}))

# %%
coords_back, ds = load_network_csv(tmp / "manifest.json")
g = knn_graph(coords_back, 4)
A = metropolis_weights(g)
L = laplacian(A, g)
split = train_test_split(ds, 0.7, 0)
hp = HyperParams(mu=5e-3, rho=0.5, eta=0.01, passes=5)
coop, _ = train_global_smoothing(ds, split, L, hp)
alone, _ = train_noncooperative(ds, split, hp)
cm = uniform_cluster_map(g, A)
print("widths:", ds.dims)
print("smoothed, neighbourhood rule:", evaluate(coop, ds, split.test, cm, "neighborhood")[1])
print("independent agents:          ", evaluate(alone, ds, split.test)[1])

# %% [markdown]
# Malformed files are rejected with the file and row named.

# %%
bad = (tmp / "station_3.csv").read_text().splitlines()
bad[5] = bad[5].rsplit(",", 1)[0] + ",n/a"
(tmp / "station_3.csv").write_text("\n".join(bad) + "\n")
try:
    load_network_csv(tmp / "manifest.json")
except ValueError as err:
    print("error:", err)
