"""Run configuration: a YAML file validated up front, unknown keys rejected."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .experiments import EXPERIMENT_KINDS
from .recommenders import MODELS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DatasetConfig(_Strict):
    name: str = "dataset"
    interactions: str
    format: Literal["csv_header", "tsv"] = "csv_header"
    catalog: str
    rating_scale: Optional[tuple[float, float]] = None


class PreprocessConfig(_Strict):
    history_cap: Optional[int] = Field(default=None, ge=1)
    min_user_interactions: int = Field(default=0, ge=0)
    min_item_interactions: int = Field(default=0, ge=0)


class SplitConfig(_Strict):
    ratio: float = Field(default=0.8, gt=0, lt=1)
    seed: int = 42
    head_share: float = Field(default=0.8, gt=0, lt=1)
    rating_threshold: Optional[float] = None


class ModelConfig(_Strict):
    kind: str
    name: Optional[str] = None
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("kind")
    @classmethod
    def _known(cls, v):
        if v not in MODELS:
            raise ValueError(f"unknown model kind {v!r}; expected one of {sorted(MODELS)}")
        return v

    @property
    def label(self) -> str:
        return self.name or self.kind


class LlmConfig(_Strict):
    client: str = "live"
    name: str = "LLM"
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-3.5-turbo"
    temperature: float = Field(default=0.0, ge=0)
    token_budget: int = Field(default=4096, ge=1)
    response_reserve: int = Field(default=1000, ge=0)
    max_retries: int = Field(default=5, ge=0)
    requests_per_minute: float = Field(default=60.0, gt=0)
    concurrency: int = Field(default=4, ge=1)
    api_key_env: str = "OPENAI_API_KEY"
    threshold: float = Field(default=0.8, gt=0, le=1)
    max_failure_fraction: float = Field(default=0.1, ge=0, le=1)

    @field_validator("client")
    @classmethod
    def _client(cls, v):
        from .llm.client import STUB_NAMES
        if v != "live" and not (v.startswith("stub:") and v[5:] in STUB_NAMES):
            raise ValueError(f"client must be 'live' or one of {['stub:' + s for s in STUB_NAMES]}")
        return v


class ExperimentSection(_Strict):
    kind: str = "FreeTop50"
    cutoffs: list[int] = Field(default_factory=lambda: [10, 20, 50])
    n: int = Field(default=50, ge=1)
    n_neighbors: int = Field(default=10, ge=1)
    per_neighbor: int = Field(default=5, ge=1)
    candidate_seed: int = 42
    exclude_seen_candidates: bool = False
    cold_start_cutoffs: list[int] = Field(default_factory=lambda: [10])

    @field_validator("kind")
    @classmethod
    def _kind(cls, v):
        if v not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {v!r}; expected one of {list(EXPERIMENT_KINDS)}")
        return v

    @field_validator("cutoffs", "cold_start_cutoffs")
    @classmethod
    def _cutoffs(cls, v):
        if not v or any(c < 1 for c in v) or v != sorted(set(v)):
            raise ValueError("cutoffs must be positive and strictly ascending")
        return v


class OutputConfig(_Strict):
    dir: str = "run"
    cache_dir: Optional[str] = None


class RunConfig(_Strict):
    dataset: DatasetConfig
    preprocess: PreprocessConfig = PreprocessConfig()
    split: SplitConfig = SplitConfig()
    models: list[ModelConfig] = Field(default_factory=list)
    llm: LlmConfig = LlmConfig()
    experiment: ExperimentSection = ExperimentSection()
    output: OutputConfig = OutputConfig()
    base_dir: str = "."

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out_dir(self) -> Path:
        return self.path(self.output.dir)

    @property
    def cache_dir(self) -> Path:
        return self.path(self.output.cache_dir) if self.output.cache_dir else self.out_dir / "cache"


def _set_path(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted}: {k} is not a section")
    node[keys[-1]] = value


def load_config(path, overrides: Optional[list[str]] = None) -> RunConfig:
    """Parse and validate a YAML run config; ``overrides`` are ``dotted.key=value`` strings."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        _set_path(raw, key.strip(), yaml.safe_load(value))
    raw.setdefault("base_dir", str(path.parent.resolve()))
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{path}: config key '{key}': {first['msg']}") from None
    for key, value in (("dataset.interactions", cfg.dataset.interactions),
                       ("dataset.catalog", cfg.dataset.catalog)):
        if not cfg.path(value).exists():
            raise ConfigError(f"config key '{key}': file not found: {value}")
    return cfg
