"""Unified experiment configuration: strict JSON parsing plus dotted overrides.

Unknown keys anywhere in the document fail fast with the offending path, so
a misspelled option can never be silently ignored.  A single top-level seed
drives every random sub-stream (see :mod:`needletrack.seeding`).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .harness import TrainConfig
from .network import NetworkConfig
from .normalization import NormalizationConfig
from .optim import AdamWConfig
from .simulator import OpticsConfig


class ConfigError(ValueError):
    """The configuration document is malformed or violates an invariant."""


@dataclass(frozen=True)
class DatasetConfig:
    n: int = 606
    raw_sidecar: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dataset.n must be >= 1, got {self.n}")


@dataclass(frozen=True)
class PathsConfig:
    dataset_dir: str = "dataset"
    weights: str = "weights.ntwt"
    report_dir: str = "reports"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTION_TYPES = {
    "dataset": DatasetConfig,
    "optics": OpticsConfig,
    "normalization": NormalizationConfig,
    "network": NetworkConfig,
    "train": TrainConfig,
    "paths": PathsConfig,
    "optimizer": AdamWConfig,
}


def _build(cls, doc: dict, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path or 'config'}' must be an object, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config key '{path + '.' if path else ''}{key}'")
    kwargs = {}
    for name, f in known.items():
        if name not in doc:
            continue
        value = doc[name]
        child = path + "." + name if path else name
        if name in _SECTION_TYPES and is_dataclass(_SECTION_TYPES[name]):
            value = _build(_SECTION_TYPES[name], value, child)
        elif isinstance(value, list):
            value = tuple(value)  # JSON arrays arrive as lists; ranges are tuples
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{path or 'config'}': {exc}") from exc


def from_dict(doc: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, doc, "")
    # training reproducibility hangs off the single experiment seed
    train = doc.get("train", {})
    if isinstance(train, dict) and "seed" not in train:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, seed=cfg.seed))
    return cfg


def load(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load an experiment config file (defaults if path is None) and apply
    ``key.path=value`` overrides."""
    if path is None:
        doc: dict = {}
    else:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    for item in overrides or []:
        doc = _apply_override(doc, item)
    return from_dict(doc)


def _apply_override(doc: dict, item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key.path=value")
    key_path, raw = item.split("=", 1)
    keys = [k for k in key_path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override '{item}' has an empty key path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings stay strings
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{item}' traverses non-object key '{k}'")
    node[keys[-1]] = value
    return doc


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def digest(cfg: ExperimentConfig) -> str:
    """Stable sha256 over the canonical JSON form of the config.

    Output paths are excluded: two runs of the same experiment written to
    different directories share a digest (and identical reports).
    """
    doc = to_dict(cfg)
    doc.pop("paths", None)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
