"""Pipeline configuration: TOML in, validated dataclasses out."""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scoring import InvalidWeights, WeightConfig


class ConfigError(ValueError):
    """Configuration does not satisfy its schema; the message names the field path."""


@dataclass
class EndpointSection:
    base_url: str = "mock://well-formed"
    max_in_flight: int = 8
    retry_max: int = 3
    timeout_ms: int = 120_000
    backoff_base_ms: int = 500
    constrained_decoding: bool = True


@dataclass
class CampaignSection:
    models: list[str] = field(default_factory=list)
    samples_per_model: int = 5000
    temperature: float = 0.7
    seed: int = 0
    max_tokens: int = 2048


@dataclass
class EvaluationSection:
    evaluators: list[str] = field(default_factory=list)
    temperature: float = 0.2
    seed: int = 0
    max_tokens: int = 512


@dataclass
class WeightsSection:
    correctness: float = 0.3
    code_quality: float = 0.2
    security: float = 0.1
    performance: float = 0.1
    completeness: float = 0.1
    length: float = 0.2
    length_cap: int = 200

    def to_weight_config(self) -> WeightConfig:
        return WeightConfig(**asdict(self))


@dataclass
class FilterSection:
    threshold: float = 8.5
    combiner: str = "mean"
    bin_width: float = 0.25


@dataclass
class BenchmarkSection:
    top1_temperature: float = 0.4
    top5_temperature: float = 0.8
    runs: int = 50
    seed: int = 0
    alpha: float = 0.05


@dataclass
class TrainingSection:
    """Fine-tuning hyperparameters kept for provenance; nothing here trains a model."""

    base_model: str = "Qwen2.5-Coder-7B"
    lora_rank: int = 16
    lora_alpha: int = 32
    lora_dropout: float = 0.1
    learning_rate: float = 3e-4
    scheduler: str = "cosine"
    epochs: int = 3
    effective_batch_size: int = 256
    max_sequence_length: int = 4096


@dataclass
class PipelineConfig:
    endpoint: EndpointSection = field(default_factory=EndpointSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    weights: WeightsSection = field(default_factory=WeightsSection)
    filter: FilterSection = field(default_factory=FilterSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    training: TrainingSection = field(default_factory=TrainingSection)

    def validate(self) -> "PipelineConfig":
        e = self.endpoint
        _require(e.max_in_flight >= 1, "endpoint.max_in_flight", "must be >= 1")
        _require(e.retry_max >= 0, "endpoint.retry_max", "must be >= 0")
        _require(e.timeout_ms > 0, "endpoint.timeout_ms", "must be positive")
        _require(e.backoff_base_ms >= 0, "endpoint.backoff_base_ms", "must be >= 0")
        c = self.campaign
        _require(c.samples_per_model >= 1, "campaign.samples_per_model", "must be >= 1")
        _require(0 <= c.temperature <= 2, "campaign.temperature", "must be in [0, 2]")
        _require(c.max_tokens > 0, "campaign.max_tokens", "must be positive")
        _require(len(set(c.models)) == len(c.models), "campaign.models", "must be unique")
        v = self.evaluation
        _require(0 <= v.temperature <= 2, "evaluation.temperature", "must be in [0, 2]")
        _require(v.max_tokens > 0, "evaluation.max_tokens", "must be positive")
        try:
            self.weights.to_weight_config().validate()
        except InvalidWeights as exc:
            raise ConfigError(f"weights: {exc}") from exc
        f = self.filter
        _require(0 <= f.threshold <= 10, "filter.threshold", "must be in [0, 10]")
        _require(f.combiner in ("mean", "median"), "filter.combiner", "must be 'mean' or 'median'")
        _require(f.bin_width > 0, "filter.bin_width", "must be positive")
        b = self.benchmark
        _require(0 <= b.top1_temperature <= 2, "benchmark.top1_temperature", "must be in [0, 2]")
        _require(0 <= b.top5_temperature <= 2, "benchmark.top5_temperature", "must be in [0, 2]")
        _require(b.runs >= 1, "benchmark.runs", "must be >= 1")
        _require(0 < b.alpha < 1, "benchmark.alpha", "must be in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _require(ok: bool, path: str, message: str) -> None:
    if not ok:
        raise ConfigError(f"{path}: {message}")


def _coerce(value: Any, typ: Any, path: str) -> Any:
    typ = str(typ)
    if typ == "bool":
        ok = isinstance(value, bool)
    elif typ == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif typ == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
        value = float(value) if ok else value
    elif typ == "str":
        ok = isinstance(value, str)
    elif typ == "list[str]":
        ok = isinstance(value, list) and all(isinstance(x, str) for x in value)
    else:  # pragma: no cover - schema bug
        raise TypeError(typ)
    if not ok:
        raise ConfigError(f"{path}: expected {typ}, got {type(value).__name__}")
    return value


def _build_section(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    kw = {name: _coerce(val, known[name].type, f"{path}.{name}") for name, val in data.items()}
    return cls(**kw)


def config_from_dict(data: dict) -> PipelineConfig:
    sections = {f.name: f for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown table")
    kw = {}
    for name, f in sections.items():
        if name in data:
            kw[name] = _build_section(f.default_factory().__class__, data[name], name)
    return PipelineConfig(**kw).validate()


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a TOML file; missing keys take the defaults, an empty file gives all defaults."""
    if path is None:
        return PipelineConfig().validate()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def load_weights(path: str | Path) -> WeightConfig:
    """Read weights from a TOML file holding either a ``[weights]`` table or bare keys."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read weights {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    section = _build_section(WeightsSection, data.get("weights", data), "weights")
    try:
        return section.to_weight_config().validate()
    except InvalidWeights as exc:
        raise ConfigError(f"weights: {exc}") from exc
