#!/usr/bin/env python3
"""
Pipeline Configuration

One declarative YAML file describes a run: domain profile, backends, stage
parameters and paths. Secrets never live here; bearer tokens come from the
environment. Defaults are the published run settings (k=5 chunks, 50-idea
cap, 4000-token output cap, temperature 1.0 for generation and 0.0 elsewhere).
"""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Type

import yaml

from llm_gateway.config import (
    DEFAULT_EVAL_MODEL_ID,
    DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_MODEL_ID,
    DEFAULT_TEMPERATURES,
    ConfigError,
    DomainProfile,
    ProfileSettings,
    Stage,
    StageProfile,
    build_profile,
    resolve_domain,
)


@dataclass
class BackendSettings:
    base_url: Optional[str] = None
    model_id: str = DEFAULT_MODEL_ID
    timeout: float = 120.0


@dataclass
class GenerationSettings:
    n_samples: int = 3
    pair_cap: Optional[int] = None
    seed: int = 0
    sets: Optional[List[str]] = None  # [set A label, set B label]


@dataclass
class CategorizationSettings:
    chunks: int = 5
    idea_cap: int = 50
    turn_budget: int = 10


@dataclass
class RetrySettings:
    max_attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0


@dataclass
class VisualizationSettings:
    list_delimiter: str = ";"


@dataclass
class PathSettings:
    corpus_manifest: Optional[str] = None
    text_root: Optional[str] = None
    runs_dir: str = "runs"
    cache_dir: str = "cache"
    annotations: Optional[str] = None
    chart_audits: Optional[str] = None
    mechanism_audits: Optional[str] = None


def _default_temperatures() -> Dict[str, float]:
    return {stage.value: t for stage, t in DEFAULT_TEMPERATURES.items()}


@dataclass
class PipelineConfig:
    """Everything a run needs besides secrets and cached transcripts."""
    domain: str = "cryogenic_hea"
    domains: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    backend: BackendSettings = field(default_factory=BackendSettings)
    eval_backend: BackendSettings = field(
        default_factory=lambda: BackendSettings(model_id=DEFAULT_EVAL_MODEL_ID))
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperatures: Dict[str, float] = field(default_factory=_default_temperatures)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    categorization: CategorizationSettings = field(default_factory=CategorizationSettings)
    retry: RetrySettings = field(default_factory=RetrySettings)
    max_in_flight: int = 4
    visualization: VisualizationSettings = field(default_factory=VisualizationSettings)
    paths: PathSettings = field(default_factory=PathSettings)

    # Directory relative paths are resolved against (the config file's directory).
    base_dir: Path = field(default_factory=Path.cwd, repr=False, compare=False)

    _NESTED = {
        "backend": BackendSettings,
        "eval_backend": BackendSettings,
        "generation": GenerationSettings,
        "categorization": CategorizationSettings,
        "retry": RetrySettings,
        "visualization": VisualizationSettings,
        "paths": PathSettings,
    }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[Path] = None) -> "PipelineConfig":
        """
        Build a config from a plain mapping.

        Raises:
            ConfigError: Unknown keys or wrongly shaped sections
        """
        if not isinstance(data, dict):
            raise ConfigError("Config must be a mapping")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {unknown}")

        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            nested = cls._NESTED.get(key)
            if nested is not None:
                kwargs[key] = cls._section(key, nested, value, eval_section=key == "eval_backend")
            elif key == "temperatures":
                kwargs[key] = cls._temperatures(value)
            else:
                kwargs[key] = value

        config = cls(**kwargs)
        if base_dir is not None:
            config.base_dir = Path(base_dir)
        return config

    @staticmethod
    def _section(name: str, section_cls: Type, value: Any, eval_section: bool = False):
        if value is None:
            value = {}
        if not isinstance(value, dict):
            raise ConfigError(f"Config section '{name}' must be a mapping")
        known = {f.name for f in fields(section_cls)}
        unknown = sorted(set(value) - known)
        if unknown:
            raise ConfigError(f"Unknown keys in '{name}': {unknown}")
        if eval_section:
            value = {"model_id": DEFAULT_EVAL_MODEL_ID, **value}
        return section_cls(**value)

    @staticmethod
    def _temperatures(value: Any) -> Dict[str, float]:
        if not isinstance(value, dict):
            raise ConfigError("Config section 'temperatures' must be a mapping")
        stages = {s.value for s in Stage}
        unknown = sorted(set(value) - stages)
        if unknown:
            raise ConfigError(f"Unknown stages in 'temperatures': {unknown}")
        return {**_default_temperatures(), **{k: float(v) for k, v in value.items()}}

    @classmethod
    def from_yaml(cls, path: Path) -> "PipelineConfig":
        """
        Load a YAML config file; relative paths resolve against its directory.

        Raises:
            ConfigError: Missing, unreadable or invalid file
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}") from e
        return cls.from_dict(data, base_dir=path.parent.resolve())

    def validate(self):
        """
        Check every setting before any backend call.

        Raises:
            ConfigError: The first problem found
        """
        positive = {
            "max_output_tokens": self.max_output_tokens,
            "max_in_flight": self.max_in_flight,
            "generation.n_samples": self.generation.n_samples,
            "categorization.chunks": self.categorization.chunks,
            "categorization.idea_cap": self.categorization.idea_cap,
            "categorization.turn_budget": self.categorization.turn_budget,
            "retry.max_attempts": self.retry.max_attempts,
            "retry.base_delay": self.retry.base_delay,
            "retry.max_delay": self.retry.max_delay,
            "backend.timeout": self.backend.timeout,
            "eval_backend.timeout": self.eval_backend.timeout,
        }
        if self.generation.pair_cap is not None:
            positive["generation.pair_cap"] = self.generation.pair_cap
        for name, value in positive.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"{name} must be a positive number, got {value!r}")

        if not isinstance(self.generation.seed, int) or self.generation.seed < 0:
            raise ConfigError(f"generation.seed must be a non-negative integer, got {self.generation.seed!r}")

        for stage, temperature in self.temperatures.items():
            if not 0.0 <= temperature <= 2.0:
                raise ConfigError(f"temperatures.{stage} out of range [0, 2]: {temperature}")

        sets = self.generation.sets
        if sets is not None and (len(sets) != 2 or sets[0] == sets[1]):
            raise ConfigError(f"generation.sets must name two different sets, got {sets}")

        if not self.visualization.list_delimiter:
            raise ConfigError("visualization.list_delimiter must not be empty")

        for name in ("corpus_manifest", "text_root"):
            if not getattr(self.paths, name):
                raise ConfigError(f"paths.{name} is required")

        for backend in (self.backend, self.eval_backend):
            if not backend.model_id:
                raise ConfigError("Backend model_id must not be empty")

        self.domain_profile()

    def extra_domains(self) -> Dict[str, DomainProfile]:
        profiles = {}
        for name, spec in self.domains.items():
            try:
                profiles[name] = DomainProfile(name=name, **spec)
            except TypeError as e:
                raise ConfigError(f"Invalid domain profile '{name}': {e}") from e
        return profiles

    def domain_profile(self) -> DomainProfile:
        return resolve_domain(self.domain, self.extra_domains())

    def profile_settings(self) -> ProfileSettings:
        return ProfileSettings(
            model_id=self.backend.model_id,
            eval_model_id=self.eval_backend.model_id,
            max_output_tokens=self.max_output_tokens,
            temperatures={Stage(k): v for k, v in self.temperatures.items()},
        )

    def stage_profile(self, stage: Stage) -> StageProfile:
        return build_profile(stage, self.domain_profile(), self.profile_settings())

    def resolve(self, value: Optional[str]) -> Optional[Path]:
        """A configured path, relative ones taken from the config file's directory."""
        if value is None:
            return None
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def snapshot(self) -> Dict[str, Any]:
        """Canonical dict of every setting, recorded in the run manifest."""
        data = asdict(self)
        data.pop("base_dir", None)
        return data


def load_config(path: Path) -> PipelineConfig:
    """Load and validate a config file."""
    config = PipelineConfig.from_yaml(path)
    config.validate()
    logging.getLogger(__name__).info(f"Loaded config from {path} (domain {config.domain})")
    return config
