"""Pipeline configuration: one TOML or JSON document for every stage.

A config file may set any subset of the schema; everything has a default.
Validation is strict: unknown keys are rejected, sub-sections must satisfy
their own dataclass invariants, and referenced files must exist before any
work starts.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .augment import DEFAULT_RANGES, KIND_ORDER
from .corpus import SplitConfig
from .errors import ConfigError
from .neural_net import TrainConfig
from .preprocess import PreprocessConfig

MODEL_CHOICES = ("knn", "gnb", "logreg", "tree", "forest", "mlp", "cnn1d")


@dataclass(frozen=True)
class FeatureConfig:
    win_ms: float = 32.0
    hop_ms: float = 10.0
    nfft: int = 512
    image_overlap_ms: float = 10.0

    def __post_init__(self):
        if self.win_ms <= 0 or self.hop_ms <= 0:
            raise ConfigError("window and hop must be positive")
        if self.nfft < 2:
            raise ConfigError("nfft must be at least 2")
        if not 0.0 <= self.image_overlap_ms < 1000.0:
            raise ConfigError("image_overlap_ms must lie in [0, 1000)")


@dataclass(frozen=True)
class AugmentConfig:
    # target_per_class 0 means balance every class up to the largest one.
    # ranges: per-kind (low, high) parameter bounds.
    target_per_class: int = 0
    ranges: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_RANGES.items()})
    max_copies_per_source: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.target_per_class < 0:
            raise ConfigError("target_per_class must be non-negative")
        for kind, bounds in self.ranges.items():
            if kind not in KIND_ORDER:
                raise ConfigError(f"unknown augmentation kind {kind!r}")
            if len(bounds) != 2 or not all(isinstance(v, (int, float)) for v in bounds):
                raise ConfigError(f"range for {kind!r} must be a (low, high) pair")
            if bounds[0] > bounds[1]:
                raise ConfigError(f"range for {kind!r} is inverted")
        if self.max_copies_per_source < 1:
            raise ConfigError("max_copies_per_source must be >= 1")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    max_body_bytes: int = 10 * 1024 * 1024

    def __post_init__(self):
        if not 0 <= self.port <= 65535:
            raise ConfigError(f"port {self.port} out of range")
        if self.max_body_bytes < 1:
            raise ConfigError("max_body_bytes must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str = ""
    work_dir: str = "work"
    noise_dir: str = ""
    model: str = "cnn1d"
    hyperparameters: dict = field(default_factory=dict)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def __post_init__(self):
        if self.model not in MODEL_CHOICES:
            raise ConfigError(f"model must be one of {MODEL_CHOICES}, got {self.model!r}")


_SECTIONS = {
    "preprocess": PreprocessConfig,
    "split": SplitConfig,
    "augment": AugmentConfig,
    "features": FeatureConfig,
    "train": TrainConfig,
    "service": ServiceConfig,
}


def _build_section(cls, doc: dict, section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = doc.pop(name, None)
        if section is not None:
            if not isinstance(section, dict):
                raise ConfigError(f"section {name!r} must be a table/object")
            kwargs[name] = _build_section(cls, section, name)
    allowed = {"manifest", "work_dir", "noise_dir", "model", "hyperparameters"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    kwargs.update(doc)
    try:
        return PipelineConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> PipelineConfig:
    """Parse and validate a TOML (*.toml) or JSON config document."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            doc = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: not valid TOML: {exc}") from exc
    else:
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config root must be a table/object")
    cfg = config_from_dict(doc)
    validate_paths(cfg)
    return cfg


def validate_paths(cfg: PipelineConfig) -> None:
    """Reject config file references that do not exist."""
    if cfg.manifest and not os.path.isfile(cfg.manifest):
        raise ConfigError(f"manifest file not found: {cfg.manifest}")
    if cfg.noise_dir and not os.path.isdir(cfg.noise_dir):
        raise ConfigError(f"noise directory not found: {cfg.noise_dir}")


def config_to_dict(cfg: PipelineConfig) -> dict:
    return asdict(cfg)


def config_hash(cfg: PipelineConfig) -> str:
    """Stable content hash of the fully resolved configuration."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
