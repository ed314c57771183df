"""Engine configuration file: a versioned YAML (or JSON) tree.

Example::

    config_version: 1
    store_path: memory.snapshot
    ingest: {k: 10, gamma: 0.7, episodic_mode: raw, segmenter: fixed-window}
    retrieval: {k_abstraction: 5, k_cue: 5, mode: union, budget: 8}
    weights: {w1: 1.0, w2: 0.5, w3: 0.1, delta_red: 0.9, beta: 0.0}
    embedder: {type: test, dims: 64}
    provider: {type: none}

An external provider is ``{type: external, endpoint, model, seed, temperature,
prompts_dir}``; its key is read from ``MEMORA_PROVIDER_KEY``. Relative paths
resolve against the config file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, EngineError
from .grpo import ScoreWeights
from .ingest import IngestConfig
from .provider import DEFAULT_SEED
from .retrieval import RetrievalConfig

CONFIG_VERSION = 1
KEY_ENV = "MEMORA_PROVIDER_KEY"


@dataclass
class EmbedderSpec:
    type: str = "test"
    dims: int = 64
    endpoint: str | None = None
    model: str | None = None


@dataclass
class ProviderSpec:
    type: str = "none"
    endpoint: str | None = None
    model: str | None = None
    seed: int = DEFAULT_SEED
    temperature: float = 0.0
    prompts_dir: Path | None = None
    timeout: float = 60.0

    @property
    def api_key(self) -> str | None:
        return os.environ.get(KEY_ENV)


@dataclass
class EngineConfig:
    ingest: IngestConfig = field(default_factory=IngestConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    provider: ProviderSpec = field(default_factory=ProviderSpec)
    store_path: Path | None = None
    lock_timeout: float = 5.0

    @property
    def stub_mode(self) -> bool:
        return self.provider.type == "none"

    @classmethod
    def load(cls, path: str | Path) -> EngineConfig:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        try:
            tree = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from exc
        return cls.from_dict(tree if tree is not None else {}, base_dir=path.parent)

    @classmethod
    def from_dict(cls, tree: Any, base_dir: str | Path = ".") -> EngineConfig:
        if not isinstance(tree, dict):
            raise ConfigError("config must be a mapping")
        tree = dict(tree)
        version = tree.pop("config_version", None)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
        base = Path(base_dir)
        known = {"ingest", "retrieval", "weights", "embedder", "provider", "store_path", "lock_timeout"}
        unknown = set(tree) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            retrieval = dict(_section(tree, "retrieval"))
            if "edge_kinds" in retrieval:
                retrieval["edge_kinds"] = frozenset(retrieval["edge_kinds"])
            cfg = cls(
                ingest=IngestConfig(**_section(tree, "ingest")),
                retrieval=RetrievalConfig(**retrieval),
                weights=ScoreWeights(**_section(tree, "weights")),
                embedder=_embedder(_section(tree, "embedder")),
                provider=_provider(_section(tree, "provider"), base),
                lock_timeout=float(tree.get("lock_timeout", 5.0)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc
        except EngineError as exc:
            raise ConfigError(str(exc)) from exc
        if tree.get("store_path"):
            cfg.store_path = _resolve(base, tree["store_path"])
        return cfg


def _section(tree: dict, name: str) -> dict:
    value = tree.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return value


def _resolve(base: Path, p: str | Path) -> Path:
    p = Path(p).expanduser()
    return p if p.is_absolute() else base / p


def _embedder(sec: dict) -> EmbedderSpec:
    spec = EmbedderSpec(**sec)
    if spec.type not in ("test", "external"):
        raise ConfigError(f"embedder type must be test or external, got {spec.type!r}")
    if spec.dims < 1:
        raise ConfigError("embedder dims must be positive")
    if spec.type == "external" and not (spec.endpoint and spec.model):
        raise ConfigError("external embedder needs endpoint and model")
    return spec


def _provider(sec: dict, base: Path) -> ProviderSpec:
    sec = dict(sec)
    prompts_dir = sec.pop("prompts_dir", None)
    spec = ProviderSpec(**sec)
    if spec.type not in ("none", "external"):
        raise ConfigError(f"provider type must be none or external, got {spec.type!r}")
    if spec.type == "external" and not (spec.endpoint and spec.model):
        raise ConfigError("external provider needs endpoint and model")
    if prompts_dir:
        spec.prompts_dir = _resolve(base, prompts_dir)
        if not spec.prompts_dir.is_dir():
            raise ConfigError(f"prompts_dir {spec.prompts_dir} is not a directory")
    return spec
