"""
Synthetic network datasets and CSV ingestion.

Every agent observes the same N sample indices; sample ``n`` is one
network-wide event. Agent k sees a feature vector of its own width M_k.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .graph import Graph, ring_graph

LABEL_PATTERNS = ("uniform", "clustered", "external")


class DataFormatError(ValueError):
    """Raised when an external dataset file is malformed."""


@dataclass(frozen=True, eq=False)
class AgentDataset:
    features: np.ndarray  # (N, M_k)
    labels: np.ndarray    # (N,) entries in {-1, +1}

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ValueError("features must be an (N, M_k) array with M_k >= 1")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must have one entry per feature row")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be +1 or -1")

    @property
    def M(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True, eq=False)
class NetworkDataset:
    """Per-agent datasets sharing the sample index.

    `classes` holds the static per-agent class sign c_k when the label pattern
    is clustered (all +1 for uniform labels, None for external data).
    """

    agents: tuple[AgentDataset, ...]
    label_pattern: str = "uniform"
    classes: np.ndarray | None = None

    def __post_init__(self):
        if not self.agents:
            raise ValueError("a network dataset needs at least one agent")
        N = self.agents[0].features.shape[0]
        if any(a.features.shape[0] != N for a in self.agents):
            raise ValueError("all agents must share the same sample count N")
        if self.label_pattern not in LABEL_PATTERNS:
            raise ValueError(f"unknown label pattern {self.label_pattern!r}")

    @property
    def K(self) -> int:
        return len(self.agents)

    @property
    def N(self) -> int:
        return self.agents[0].features.shape[0]

    @property
    def dims(self) -> np.ndarray:
        return np.array([a.M for a in self.agents], dtype=int)

    @cached_property
    def X(self) -> np.ndarray:
        """Features zero-padded to shape (K, N, max M_k)."""
        X = np.zeros((self.K, self.N, int(self.dims.max())))
        for k, a in enumerate(self.agents):
            X[k, :, :a.M] = a.features
        return X

    @cached_property
    def Y(self) -> np.ndarray:
        """Labels, shape (K, N)."""
        return np.stack([a.labels for a in self.agents]).astype(float)

    def equals(self, other: "NetworkDataset") -> bool:
        """Exact equality of shapes, features and labels."""
        return (self.K == other.K and self.N == other.N
                and all(np.array_equal(a.features, b.features)
                        and np.array_equal(a.labels, b.labels)
                        for a, b in zip(self.agents, other.agents)))

    def subset_agents(self, ks) -> "NetworkDataset":
        ks = list(ks)
        classes = None if self.classes is None else self.classes[ks]
        return NetworkDataset(tuple(self.agents[k] for k in ks), self.label_pattern, classes)


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


def _default_means():
    m = np.array([0.4, 0.8, 1.2, 1.6, 2.0])
    return m / np.linalg.norm(m)


@dataclass(frozen=True)
class FeatureSpec:
    """Class-conditional Gaussian attribute model.

    Attribute m of a sample with label y is Normal(y * s * mu_m, sigma_m^2),
    independently across attributes.
    """

    M_max: int = 5
    attr_means: np.ndarray = field(default_factory=_default_means)
    attr_stddevs: np.ndarray = field(default_factory=lambda: np.ones(5))
    class_separation: float = 1.1

    def __post_init__(self):
        means = np.asarray(self.attr_means, dtype=float)
        stds = np.asarray(self.attr_stddevs, dtype=float)
        object.__setattr__(self, "attr_means", means)
        object.__setattr__(self, "attr_stddevs", stds)
        if means.shape != (self.M_max,) or stds.shape != (self.M_max,):
            raise ValueError("attr_means and attr_stddevs need M_max entries")
        if np.any(stds <= 0):
            raise ValueError("attribute standard deviations must be positive")
        if self.class_separation < 0:
            raise ValueError("class_separation must be nonnegative")


def half_plane_classes(g: Graph) -> np.ndarray:
    """Two-cluster class assignment: +1 left of the median x-coordinate, else -1."""
    x = g.coords[:, 0]
    return np.where(x <= np.median(x), 1, -1)


def generate_synthetic(g: Graph, spec: FeatureSpec, pattern: str, N: int,
                       seed: int, classes=None, dims=None) -> NetworkDataset:
    """Draw a synthetic network dataset.

    Parameters
    ----------
    g : Graph
        Only the node count is used.
    spec : FeatureSpec
        Attribute distribution.
    pattern : {'uniform', 'clustered'}
        'uniform' gives every agent the same fair-coin label per sample;
        'clustered' multiplies that label by the per-agent sign ``classes[k]``.
    N : int
        Number of samples per agent.
    seed : int
        Seed of the generator; equal seeds give identical datasets.
    classes : array_like of {+1, -1}, optional
        Required for the clustered pattern.
    dims : array_like of int, optional
        Fixed feature widths; drawn uniformly from 1..M_max when omitted.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    K = g.K
    if pattern == "uniform":
        c = np.ones(K, dtype=int)
    elif pattern == "clustered":
        if classes is None:
            raise ValueError("clustered pattern needs a per-agent class assignment")
        c = np.asarray(classes, dtype=int)
        if c.shape != (K,) or not np.all(np.abs(c) == 1):
            raise ValueError("classes must hold one +1/-1 entry per agent")
    else:
        raise ValueError(f"unknown synthetic label pattern {pattern!r}")

    rng = np.random.default_rng(seed)
    drawn = rng.integers(1, spec.M_max + 1, size=K)
    if dims is not None:
        drawn = np.broadcast_to(np.asarray(dims, dtype=int), (K,))
        if np.any(drawn < 1) or np.any(drawn > spec.M_max):
            raise ValueError("fixed widths must lie in 1..M_max")
    dims = drawn
    shared = np.where(rng.random(N) < 0.5, 1, -1)
    agents = []
    for k in range(K):
        y = c[k] * shared
        M = int(dims[k])
        mean = y[:, None] * spec.class_separation * spec.attr_means[:M]
        feats = mean + spec.attr_stddevs[:M] * rng.standard_normal((N, M))
        agents.append(AgentDataset(feats, y.astype(int)))
    return NetworkDataset(tuple(agents), pattern, c)


def train_test_split(ds: NetworkDataset, train_fraction: float, seed: int) -> SplitIndices:
    """Shared random split of the sample indices; the same for all agents."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(np.floor(train_fraction * ds.N))
    if n_train < 1:
        raise ValueError("training split would be empty")
    perm = np.random.default_rng(seed).permutation(ds.N)
    return SplitIndices(perm[:n_train], perm[n_train:])


# -- CSV exchange ----------------------------------------------------------

def export_network_csv(ds: NetworkDataset, directory, coords=None) -> Path:
    """Write a manifest plus one CSV per agent; returns the manifest path.

    Floats are written with ``repr`` so that loading reproduces them exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, a in enumerate(ds.agents):
        name = f"agent_{k:04d}.csv"
        with open(directory / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "label"] + [f"f{m + 1}" for m in range(a.M)])
            for n in range(ds.N):
                writer.writerow([n, int(a.labels[n])] + [repr(float(x)) for x in a.features[n]])
        entries.append({"id": k, "file": name})
    manifest = {"N": ds.N, "agents": entries}
    if coords is not None:
        with open(directory / "stations.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent_id", "x", "y"])
            for k, (x, y) in enumerate(np.asarray(coords)):
                writer.writerow([k, repr(float(x)), repr(float(y))])
        manifest["stations"] = "stations.csv"
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def _parse_float(text, path, row):
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"{path}, row {row}: non-numeric cell {text!r}") from None


def _read_agent_csv(path: Path, N: int, mapping):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["n", "label"] or len(header) < 3:
        raise DataFormatError(f"{path}, row 1: expected header 'n,label,f1,...', got {header}")
    M = len(header) - 2
    feats = np.full((N, M), np.nan)
    labels = np.zeros(N, dtype=int)
    seen = np.zeros(N, dtype=bool)
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != M + 2:
            raise DataFormatError(f"{path}, row {r}: expected {M + 2} cells, got {len(row)}")
        try:
            n = int(row[0])
        except ValueError:
            raise DataFormatError(f"{path}, row {r}: non-integer sample index {row[0]!r}") from None
        if not 0 <= n < N:
            raise DataFormatError(f"{path}, row {r}: sample index {n} outside 0..{N - 1}")
        if seen[n]:
            raise DataFormatError(f"{path}, row {r}: duplicate sample index {n}")
        raw = row[1].strip()
        if mapping is not None:
            if raw not in mapping:
                raise DataFormatError(f"{path}, row {r}: label {raw!r} not in label_mapping")
            label = mapping[raw]
        else:
            label = _parse_float(raw, path, r)
            if label not in (1.0, -1.0):
                raise DataFormatError(f"{path}, row {r}: label {raw!r} is not +1 or -1")
        labels[n] = int(label)
        feats[n] = [_parse_float(x, path, r) for x in row[2:]]
        seen[n] = True
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise DataFormatError(f"{path}: missing sample index {missing}")
    return AgentDataset(feats, labels)


def load_network_csv(manifest_path):
    """Load a dataset described by a JSON manifest.

    Returns
    -------
    coords : ndarray of shape (K, 2) or None
        Station coordinates when the manifest names a stations file.
    ds : NetworkDataset
        Dataset with per-agent widths inferred from the CSV columns.
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    base = manifest_path.parent
    N = int(doc["N"])
    mapping = doc.get("label_mapping")
    if mapping is not None:
        mapping = {str(k): int(v) for k, v in mapping.items()}
        if not set(mapping.values()) <= {-1, 1}:
            raise DataFormatError(f"{manifest_path}: label_mapping must map onto -1/+1")
    entries = sorted(doc["agents"], key=lambda e: int(e["id"]))
    agents = tuple(_read_agent_csv(base / e["file"], N, mapping) for e in entries)

    coords = None
    if doc.get("stations"):
        spath = base / doc["stations"]
        with open(spath, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        pos = {}
        for r, row in enumerate(rows[1:], start=2):
            if row:
                pos[int(row[0])] = (_parse_float(row[1], spath, r), _parse_float(row[2], spath, r))
        try:
            coords = np.array([pos[int(e["id"])] for e in entries])
        except KeyError as err:
            raise DataFormatError(f"{spath}: no coordinates for agent {err.args[0]}") from None
    return coords, NetworkDataset(agents, "external", None)


def small_fixture(seed: int = 0, K: int = 5, N: int = 20, dims=None, scale: float = 0.5):
    """Small well-conditioned network used by the convergence diagnostics.

    Ring of `K` agents with uniform labels and features
    ``Normal(y * scale, scale^2)`` of widths `dims` (default cycles 1, 2, 3).

    Returns
    -------
    g : Graph
    ds : NetworkDataset
    """
    g = ring_graph(K)
    dims = [1 + k % 3 for k in range(K)] if dims is None else list(dims)
    rng = np.random.default_rng(seed)
    shared = np.where(rng.random(N) < 0.5, 1, -1)
    agents = tuple(
        AgentDataset(scale * shared[:, None] + scale * rng.standard_normal((N, M)), shared.copy())
        for M in dims)
    return g, NetworkDataset(agents, "uniform", np.ones(K, dtype=int))
