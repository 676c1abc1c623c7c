"""Experiment configuration: YAML file -> validated dataclasses.

Every key is optional. An empty file (or no file) reproduces the reference
setup: 4 qubits, 4 layers (32 parameters), Adam with learning rate 0.1,
15 clients, 100 rounds, 10 trials. Unknown keys and wrongly typed values
are rejected with the dotted path of the offending field.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .federated import Aggregation
from .model import NoisePlacement
from .quantum import NoiseKind


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticConfig:
    n_samples: int = 2000
    n_informative: int = 6
    n_features: int = 10
    class_sep: float = 2.0
    fraud_rate: float = 0.5
    missing_rate: float = 0.02


@dataclass
class DataConfig:
    source: str = "synthetic"
    transactions: str | None = None
    identity: str | None = None
    label: str = "isFraud"
    key: str = "TransactionID"
    missing_threshold: float = 0.5
    train_fraction: float = 0.8
    upsample: bool = True
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass
class CircuitConfig:
    n_qubits: int = 4
    n_layers: int = 4


@dataclass
class AdamSection:
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class FederatedSection:
    n_clients: int = 15
    rounds: int = 100
    local_iters: int = 1
    aggregation: str = "unweighted_mean"
    batch_size: int = 32
    local_validation_fraction: float = 0.2
    patience: int = 5
    tolerance: float = 1e-4


ALL_KINDS = [k.value for k in NoiseKind]
DEFAULT_GRID = [round(0.1 * i, 1) for i in range(11)]


@dataclass
class NoiseConfig:
    kind: str | None = None
    p: float = 0.0
    placement: str = "after_each_layer"
    sweep_kinds: list = field(default_factory=lambda: list(ALL_KINDS))
    sweep_grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    train_noisy: bool = False


@dataclass
class SeedConfig:
    master: int = 0
    trials: int = 10


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    adam: AdamSection = field(default_factory=AdamSection)
    federated: FederatedSection = field(default_factory=FederatedSection)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output_dir: str = "results"

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(path: str, value, annotation: str):
    """Check ``value`` against the field's declared type (given as a string)."""
    optional = "None" in annotation
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value is required")
    base = annotation.replace("| None", "").strip()
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if base == "list":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {annotation}")


def _build(cls, raw, path: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown field {where}{unknown[0]} (allowed: {', '.join(known)})")
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}" if path else name
        if name not in raw:
            continue
        if f.type in _SECTIONS:
            kwargs[name] = _build(_SECTIONS[f.type], raw[name], sub)
        else:
            kwargs[name] = _coerce(sub, raw[name], f.type)
    return cls(**kwargs)


_SECTIONS = {
    "SyntheticConfig": SyntheticConfig,
    "DataConfig": DataConfig,
    "CircuitConfig": CircuitConfig,
    "AdamSection": AdamSection,
    "FederatedSection": FederatedSection,
    "NoiseConfig": NoiseConfig,
    "SeedConfig": SeedConfig,
}


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    d, s = cfg.data, cfg.data.synthetic
    _check(d.source in ("synthetic", "csv"), "data.source", f"must be 'synthetic' or 'csv', got {d.source!r}")
    if d.source == "csv":
        _check(d.transactions is not None, "data.transactions", "required when data.source is 'csv'")
    _check(0.0 <= d.missing_threshold <= 1.0, "data.missing_threshold", "must lie in [0, 1]")
    _check(0.0 < d.train_fraction < 1.0, "data.train_fraction", "must lie in (0, 1)")
    _check(s.n_samples >= 2, "data.synthetic.n_samples", "must be at least 2")
    _check(0 <= s.n_informative <= s.n_features, "data.synthetic.n_informative", "must lie in [0, n_features]")
    _check(0.0 < s.fraud_rate < 1.0, "data.synthetic.fraud_rate", "must lie in (0, 1)")
    _check(0.0 <= s.missing_rate < 1.0, "data.synthetic.missing_rate", "must lie in [0, 1)")
    _check(cfg.circuit.n_qubits >= 1, "circuit.n_qubits", "must be positive")
    _check(cfg.circuit.n_qubits <= 12, "circuit.n_qubits", "dense simulation supports at most 12 qubits")
    _check(cfg.circuit.n_layers >= 1, "circuit.n_layers", "must be positive")
    a = cfg.adam
    _check(a.learning_rate > 0, "adam.learning_rate", "must be positive")
    _check(0 <= a.beta1 < 1, "adam.beta1", "must lie in [0, 1)")
    _check(0 <= a.beta2 < 1, "adam.beta2", "must lie in [0, 1)")
    _check(a.epsilon > 0, "adam.epsilon", "must be positive")
    f = cfg.federated
    _check(f.n_clients >= 1, "federated.n_clients", "must be >= 1")
    _check(f.rounds >= 1, "federated.rounds", "must be >= 1")
    _check(f.local_iters >= 0, "federated.local_iters", "must be >= 0")
    _check(f.aggregation in [m.value for m in Aggregation], "federated.aggregation",
           f"must be one of {[m.value for m in Aggregation]}")
    _check(f.batch_size >= 1, "federated.batch_size", "must be >= 1")
    _check(0.0 <= f.local_validation_fraction < 1.0, "federated.local_validation_fraction", "must lie in [0, 1)")
    _check(f.patience >= 1, "federated.patience", "must be >= 1")
    _check(f.tolerance >= 0, "federated.tolerance", "must be >= 0")
    n = cfg.noise
    _check(n.kind is None or n.kind in ALL_KINDS, "noise.kind", f"must be one of {ALL_KINDS}")
    _check(0.0 <= n.p <= 1.0, "noise.p", "must lie in [0, 1]")
    _check(n.placement in [p.value for p in NoisePlacement], "noise.placement",
           f"must be one of {[p.value for p in NoisePlacement]}")
    _check(len(n.sweep_kinds) > 0, "noise.sweep_kinds", "must not be empty")
    for i, k in enumerate(n.sweep_kinds):
        _check(k in ALL_KINDS, f"noise.sweep_kinds[{i}]", f"must be one of {ALL_KINDS}")
    _check(len(n.sweep_grid) > 0, "noise.sweep_grid", "must not be empty")
    for i, p in enumerate(n.sweep_grid):
        _check(isinstance(p, (int, float)) and not isinstance(p, bool) and 0.0 <= p <= 1.0,
               f"noise.sweep_grid[{i}]", f"must be a number in [0, 1], got {p!r}")
    _check(cfg.seeds.trials >= 1, "seeds.trials", "must be >= 1")
    return cfg


def from_dict(raw) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, raw, ""))


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return from_dict(raw or {})
