"""
Experiment configuration: TOML file with [graph], [data], [train] and
[analysis] sections plus a top-level ``out`` directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass
class GraphConfig:
    kind: str = "geometric"   # geometric | knn | ring | file
    K: int = 50
    radius: float = 0.3
    k_neighbors: int = 6
    seed: int = 0
    path: str | None = None


@dataclass
class DataConfig:
    kind: str = "synthetic"   # synthetic | fixture | file
    N: int = 200
    M_max: int = 5
    pattern: str = "uniform"  # uniform | clustered
    clusters: str | list = "half-plane"
    class_separation: float = 1.1
    attr_means: list | None = None
    attr_stddevs: list | None = None
    fixed_dim: int | None = None
    seed: int = 0
    manifest: str | None = None
    train_fraction: float = 0.7
    split_seed: int | None = None


@dataclass
class TrainConfig:
    algorithm: str = "global"  # global | local | noncoop
    mu: float = 5e-3
    rho: float = 0.5
    eta: float = 0.1
    passes: int = 5
    grad_mode: str = "full"
    seed: int = 0
    eval_every: int = 10
    literal_alg1: bool = False


@dataclass
class AnalysisConfig:
    reference_tol: float = 1e-10
    seeds: int = 20
    passes: int | None = None


@dataclass
class ExperimentConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    out: str = "out"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed (graph, data, split, training) set to `seed`."""
        return dataclasses.replace(
            self,
            graph=dataclasses.replace(self.graph, seed=seed),
            data=dataclasses.replace(self.data, seed=seed, split_seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
        )


_CHOICES = {
    "graph.kind": ("geometric", "knn", "ring", "file"),
    "data.kind": ("synthetic", "fixture", "file"),
    "data.pattern": ("uniform", "clustered"),
    "train.algorithm": ("global", "local", "noncoop"),
    "train.grad_mode": ("full", "own-term"),
}


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        value = float(value)
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(key, f"must be one of {', '.join(_CHOICES[key])}")
    return value


def _section(name, cls, values):
    if not isinstance(values, dict):
        raise ConfigError(name, "expected a table")
    obj = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key, value in values.items():
        full = f"{name}.{key}"
        if key not in known:
            raise ConfigError(full, "unknown key")
        setattr(obj, key, _coerce(full, value, getattr(obj, key)))
    return obj


def config_from_dict(doc: dict, base: Path | None = None) -> ExperimentConfig:
    """Build and validate a config; relative paths are resolved against `base`."""
    sections = {"graph": GraphConfig, "data": DataConfig, "train": TrainConfig,
                "analysis": AnalysisConfig}
    cfg = ExperimentConfig()
    for key, value in doc.items():
        if key in sections:
            setattr(cfg, key, _section(key, sections[key], value))
        elif key == "out":
            cfg.out = str(value)
        else:
            raise ConfigError(key, "unknown key")
    if base is not None:
        for obj, attr in ((cfg.graph, "path"), (cfg.data, "manifest")):
            p = getattr(obj, attr)
            if p is not None and not Path(p).is_absolute():
                setattr(obj, attr, str(base / p))
        if not Path(cfg.out).is_absolute():
            cfg.out = str(base / cfg.out)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    g, d, t = cfg.graph, cfg.data, cfg.train
    if g.K < 1:
        raise ConfigError("graph.K", "must be at least 1")
    if not 0 < g.radius <= 2 ** 0.5:
        raise ConfigError("graph.radius", "must lie in (0, sqrt(2)]")
    if g.kind == "file" and not g.path:
        raise ConfigError("graph.path", "required when graph.kind = 'file'")
    if d.N < 1:
        raise ConfigError("data.N", "must be at least 1")
    if d.kind == "file" and not d.manifest:
        raise ConfigError("data.manifest", "required when data.kind = 'file'")
    if not 0 < d.train_fraction < 1:
        raise ConfigError("data.train_fraction", "must lie in (0, 1)")
    if d.class_separation < 0:
        raise ConfigError("data.class_separation", "must be nonnegative")
    if not t.mu > 0:
        raise ConfigError("train.mu", "step size must be positive")
    if t.rho < 0:
        raise ConfigError("train.rho", "must be nonnegative")
    if t.eta < 0:
        raise ConfigError("train.eta", "must be nonnegative")
    if t.passes < 1:
        raise ConfigError("train.passes", "must be at least 1")
    if t.eval_every < 1:
        raise ConfigError("train.eval_every", "must be at least 1")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("<file>", f"{path}: {err}") from None
    return config_from_dict(doc, path.parent)
