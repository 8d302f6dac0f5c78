from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from harpbd.data import AugmentConfig, SynthConfig, WindowConfig
from harpbd.errors import ConfigurationError
from harpbd.graph import BodyGraph, SensorSet, Skeleton, graph_for, load_skeleton
from harpbd.models.base import TrainConfig
from harpbd.models.search import SearchConfig
from harpbd.nn import ModelSpec
from harpbd.nn.layers import GCMode


class Settings(BaseSettings):
    log_level: str = "INFO"
    log_json: bool = True
    runs_dir: str = "./runs"
    metrics_enabled: bool = True

    model_config = SettingsConfigDict(env_prefix="HARPBD_", env_file=".env", case_sensitive=False, extra="ignore")


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings = get_settings()


class ModelOverrides(BaseModel):
    """Architecture keys a run may change; unset keys keep the module defaults."""

    model_config = ConfigDict(extra="forbid")

    gc_layers: int | None = Field(default=None, ge=1)
    gc_kernels: int | None = Field(default=None, ge=1)
    gc_mode: GCMode | None = None
    lstm_layers: int | None = Field(default=None, ge=1)
    lstm_hidden: int | None = Field(default=None, ge=1)
    dropout: float | None = Field(default=None, ge=0.0, lt=1.0)

    def values(self) -> dict[str, Any]:
        return self.model_dump(exclude_none=True)


class RunConfig(BaseSettings):
    """Every tunable of one run; echoed as ``config.json`` into the run directory."""

    model_config = SettingsConfigDict(
        env_prefix="HARPBD_RUN_", env_nested_delimiter="__", case_sensitive=False, extra="forbid"
    )

    name: str = "run"
    corpus: str | None = None
    out: str = Field(default_factory=lambda: settings.runs_dir)
    seed: int = 7
    sensor_set: str = "full22"
    custom_removal: list[int] | None = None
    skeleton: str | None = None
    synth: SynthConfig = Field(default_factory=SynthConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    har_model: ModelOverrides = Field(default_factory=ModelOverrides)
    pbd_model: ModelOverrides = Field(default_factory=ModelOverrides)
    search: SearchConfig = Field(default_factory=SearchConfig)
    parallel_folds: int = Field(default=1, ge=1)
    exclude_subjects: list[str] = Field(default_factory=list)

    @field_validator("name")
    @classmethod
    def name_is_path_segment(cls, v: str) -> str:
        if not v or "/" in v or "\\" in v or v in {".", ".."}:
            raise ValueError(f"run name must be a single path segment, got {v!r}")
        return v

    @model_validator(mode="after")
    def seed_everywhere(self) -> RunConfig:
        # one seed drives every stream
        if self.train.seed != self.seed:
            self.train = self.train.model_copy(update={"seed": self.seed})
        return self

    @classmethod
    def load(cls, path: str | Path | None = None, **overrides: Any) -> RunConfig:
        """File values first, then keyword overrides; ``None`` overrides are ignored."""
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except FileNotFoundError as e:
                raise ConfigurationError(f"config file {path} not found") from e
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "strategy":
                data.setdefault("train", {})["strategy"] = value
            else:
                data[key] = value
        return cls(**data)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def skeleton_definition(self) -> Skeleton:
        return load_skeleton(self.skeleton)

    def sensors(self) -> SensorSet:
        if self.custom_removal is not None:
            return SensorSet.custom(self.custom_removal)
        return SensorSet.preset(self.sensor_set, self.skeleton_definition())

    def graph(self) -> BodyGraph:
        return graph_for(self.sensors(), self.skeleton_definition())

    def har_spec(self) -> ModelSpec:
        return ModelSpec.har(**self.har_model.values())

    def pbd_spec(self) -> ModelSpec:
        return ModelSpec.pbd(hierarchical=self.train.hierarchical, **self.pbd_model.values())

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / self.name
