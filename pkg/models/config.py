"""
Run configuration: one JSON document plus flag overrides (flags win).
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from models.errors import ConfigError

log = logging.getLogger(__name__)

SYNTH_CMD_ENV = "PREFIXFORGE_SYNTH_CMD"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelConfig(_Strict):
    """Two-head decoder configuration."""
    max_width: int = Field(16, ge=2)
    embed_dim: int = Field(64, ge=2)
    shared_layers: int = Field(4, ge=1)
    row_layers: int = Field(1, ge=1)
    col_layers: int = Field(2, ge=1)
    head_count: int = Field(4, ge=1)
    ffn_multiplier: int = Field(4, ge=1)
    rope_base: float = Field(10000.0, gt=0)
    use_rope: bool = True

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if self.embed_dim % 2:
            raise ValueError(f"embed_dim ({self.embed_dim}) must be even for rotary pairs")
        if (2 * self.embed_dim) % self.head_count:
            raise ValueError(
                f"token dim {2 * self.embed_dim} must be divisible by head_count ({self.head_count})"
            )
        return self

    @property
    def token_dim(self) -> int:
        return 2 * self.embed_dim

    @property
    def max_seq_len(self) -> int:
        return self.max_width * (self.max_width + 1) // 2


class PretrainConfig(_Strict):
    corpus_size: int = Field(100_000, ge=1)
    epochs: int = Field(5, ge=1)
    lr: float = Field(1e-4, gt=0)
    batch_size: int = Field(64, ge=1)
    holdout_fraction: float = Field(0.02, ge=0, lt=1)
    legal_rate_samples: int = Field(1000, ge=0)


class FinetuneConfig(_Strict):
    iterations: int = Field(200, ge=1)
    group_size: int = Field(64, ge=2)
    temperature: float = Field(0.8, gt=0)
    gamma: float = Field(0.99, gt=0, le=1)
    beta: float = Field(0.001, ge=0)
    retrieval_ratio: float = Field(0.10, ge=0, le=1)
    lr: float = Field(1e-4, gt=0)
    surrogate: Literal["probability", "log_probability"] = "probability"


class SynthesisConfig(_Strict):
    command: Optional[str] = None
    timeout: float = Field(300.0, gt=0)
    max_workers: int = Field(4, ge=1)
    proxy_fallback: bool = True

    def resolved_command(self) -> Optional[str]:
        return self.command or os.environ.get(SYNTH_CMD_ENV)


class AblationFlags(_Strict):
    rope_off: bool = False
    skip_pretrain: bool = False
    kl_off: bool = False
    retrieval_off: bool = False


class PathsConfig(_Strict):
    workdir: str = "runs"
    corpus: str = "runs/corpus.jsonl"
    checkpoint: str = "runs/pretrained.pt"
    database: str = "runs/designs.jsonl"
    history: str = "runs/history.csv"


class RunConfig(_Strict):
    width: int = Field(16, ge=2)
    reward_mode: Literal["proxy", "external"] = "proxy"
    seed: int = 0
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    synthesis: SynthesisConfig = Field(default_factory=SynthesisConfig)
    ablations: AblationFlags = Field(default_factory=AblationFlags)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    @model_validator(mode="after")
    def _check_width(self) -> "RunConfig":
        if self.width > self.model.max_width:
            raise ValueError(
                f"width {self.width} exceeds model.max_width {self.model.max_width}"
            )
        return self

    def effective_model_config(self) -> ModelConfig:
        if self.ablations.rope_off:
            return self.model.model_copy(update={"use_rope": False})
        return self.model

    def effective_beta(self) -> float:
        return 0.0 if self.ablations.kl_off else self.finetune.beta

    def effective_retrieval_ratio(self) -> float:
        return 0.0 if self.ablations.retrieval_off else self.finetune.retrieval_ratio


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def dotted_to_nested(overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Turn {"finetune.beta": 0.0} into {"finetune": {"beta": 0.0}}; None values are dropped."""
    nested: Dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        cursor = nested
        parts = dotted.split(".")
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
    return nested


def load_run_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """Load a RunConfig from a JSON file and apply dotted-key overrides."""
    data: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigError(f"--config: file not found: {path}", {"flag": "--config", "path": path})
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Invalid JSON in config file {path}", {"details": str(exc)}) from exc

    data = _deep_merge(data, dotted_to_nested(overrides or {}))
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError("Invalid run configuration", {"details": exc.errors(include_url=False)}) from exc

    log.debug(f"Loaded run config: {config.model_dump()}")
    return config
