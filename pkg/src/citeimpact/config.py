"""Run configuration: nested dataclasses loadable from YAML with dotted overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .encoder import EncoderConfig
from .graphbuild import SamplingConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    network: Optional[str] = None
    splits: Optional[str] = None
    embeddings: Optional[str] = None
    test_point: Optional[int] = None
    train_point: Optional[int] = None
    val_point: Optional[int] = None
    delta: int = 5
    n_test: int = 300_000
    n_train: Optional[int] = None
    n_val: Optional[int] = None
    split_seed: int = 0
    provider: str = "hashing"
    embedding_dim: int = 384


@dataclass
class GraphConfig:
    T: int = 5
    k: int = 2
    K: tuple = (100, 20)
    per_direction: bool = True
    expand_both: bool = True

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(self.k, tuple(self.K), self.per_direction, self.expand_both)


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    layers: int = 4
    cocite_weight: float = 0.5
    gin_eps: float = 0.0
    heads: int = 4
    temporal_depth: int = 4
    temporal_heads: int = 4
    snapshot_bins: tuple = (0, 1, 2, 5)
    share_snapshots: bool = False
    softmax_over_c: bool = False
    scalar_gate: bool = False
    readout: str = "attention"
    dropout: float = 0.0
    disentangle: bool = True
    n_bins: int = 5
    proj_dim: Optional[int] = None
    literal_orthogonal: bool = False


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    alpha: float = 0.5
    tau: float = 0.4
    drop_fraction: float = 0.1
    bin_ties: str = "rank"
    seed: int = 0
    dtype: str = "float32"
    track_train_metrics: bool = False
    stop_train_male: Optional[float] = None
    out_dir: Optional[str] = None


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def encoder_config(self, input_dim: int) -> EncoderConfig:
        m = self.model
        return EncoderConfig(
            input_dim=input_dim, hidden_dim=m.hidden_dim, layers=m.layers, cocite_weight=m.cocite_weight,
            gin_eps=m.gin_eps, heads=m.heads, temporal_depth=m.temporal_depth, temporal_heads=m.temporal_heads,
            T=self.graph.T, snapshot_bins=tuple(m.snapshot_bins), share_snapshots=m.share_snapshots,
            softmax_over_c=m.softmax_over_c, scalar_gate=m.scalar_gate, readout=m.readout, dropout=m.dropout,
        )

    def validate(self) -> "RunConfig":
        g, m, t = self.graph, self.model, self.train
        problems = []
        if g.T < 1:
            problems.append("graph.T must be >= 1")
        if len(g.K) != g.k:
            problems.append("graph.K needs graph.k entries")
        if not 0 <= m.cocite_weight <= 1:
            problems.append("model.cocite_weight must lie in [0, 1]")
        if m.layers < 1:
            problems.append("model.layers must be >= 1")
        if m.n_bins < 2:
            problems.append("model.n_bins must be >= 2")
        if t.alpha < 0:
            problems.append("train.alpha must be >= 0")
        if t.tau <= 0:
            problems.append("train.tau must be > 0")
        if not 0 <= t.drop_fraction <= 0.9:
            problems.append("train.drop_fraction must lie in [0, 0.9]")
        if t.lr <= 0 or t.batch_size < 1 or t.max_epochs < 1 or t.patience < 0:
            problems.append("train.lr/batch_size/max_epochs/patience out of range")
        if t.dtype not in ("float32", "float64"):
            problems.append("train.dtype must be float32 or float64")
        if t.stop_train_male is not None and t.stop_train_male <= 0:
            problems.append("train.stop_train_male must be > 0 when set")
        if self.data.delta < 1:
            problems.append("data.delta must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))
        try:
            self.encoder_config(self.data.embedding_dim)
            self.graph.sampling()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, tuple):
                return list(x)
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            return x
        return clean(asdict(self))

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "RunConfig":
        d = d or {}
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        parts = {}
        for f in fields(cls):
            sub_cls = f.default_factory  # type: ignore[misc]
            raw = d.get(f.name) or {}
            names = {sf.name for sf in fields(sub_cls)}
            bad = set(raw) - names
            if bad:
                raise ConfigError(f"unknown keys in [{f.name}]: {sorted(bad)}")
            vals = {k: tuple(v) if isinstance(v, list) else _scalar(v) for k, v in raw.items()}
            parts[f.name] = sub_cls(**vals)
        return cls(**parts)


def _scalar(v):
    """YAML 1.1 reads ``1e-4`` as a string; coerce numeric-looking strings."""
    if isinstance(v, str):
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
    return v


def apply_overrides(d: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars/lists."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        path = key.strip().split(".")
        node = d
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = _scalar(yaml.safe_load(raw))
    return d


def load_config(path: Optional[str | Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
    d = {}
    if path is not None:
        d = yaml.safe_load(Path(path).read_text()) or {}
    d = apply_overrides(d, overrides)
    return RunConfig.from_dict(d).validate()


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
