"""Cooperative classification over graphs of agents with heterogeneous features."""

from .graph import (Graph, connected_geometric_graph, knn_graph, laplacian, metropolis_weights,
                    random_geometric_graph, ring_graph, smoothness)
from .data import (FeatureSpec, NetworkDataset, SplitIndices, generate_synthetic,
                   load_network_csv, train_test_split)
from .model import build_cluster_map, compute_constants, logistic_loss, loss_grad_scalar
from .train import (HyperParams, NetworkState, RunRecord, evaluate, train_global_smoothing,
                    train_local_smoothing, train_noncooperative)

__version__ = "0.1.0"
