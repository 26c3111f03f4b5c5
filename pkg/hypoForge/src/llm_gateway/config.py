"""Stage parameter profiles and domain profiles for the chat-completion gateway.

Defaults follow the published run settings: temperature 0.0 for every stage
except hypothesis generation (1.0), a 4000-token output cap, and the default
sampling parameters of each of the two backends.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple


class ConfigError(ValueError):
    """Raised for invalid pipeline or profile configuration."""


class Stage(str, Enum):
    """Pipeline stages that talk to a backend."""
    EXTRACTION = "extraction"
    GENERATION = "generation"
    EVALUATION = "evaluation"
    CATEGORIZATION = "categorization"
    VISUALIZATION = "visualization"


# Environment variables holding bearer tokens (never written to config or manifests).
API_KEY_ENV = "HYPOFORGE_API_KEY"
EVAL_API_KEY_ENV = "HYPOFORGE_EVAL_API_KEY"

DEFAULT_MODEL_ID = "gpt-4-1106-preview"
DEFAULT_EVAL_MODEL_ID = "gemini-1.5-pro"
DEFAULT_MAX_OUTPUT_TOKENS = 4000

DEFAULT_TEMPERATURES: Dict[Stage, float] = {
    Stage.EXTRACTION: 0.0,
    Stage.GENERATION: 1.0,
    Stage.EVALUATION: 0.0,
    Stage.CATEGORIZATION: 0.0,
    Stage.VISUALIZATION: 0.0,
}

PRIMARY_EXTRA_PARAMS: Dict[str, Any] = {
    "frequency_penalty": 0.0,
    "presence_penalty": 0.0,
    "top_p": 1.0,
}
EVAL_EXTRA_PARAMS: Dict[str, Any] = {
    "top_p": 0.95,
    "top_k": 64,
}


@dataclass(frozen=True)
class DomainProfile:
    """Field-specific prompting context shared by every stage."""
    name: str
    system_message: str
    grounding_criterion: str
    design_goal: str = ""
    compound_mode: bool = False

    def __post_init__(self):
        if not self.grounding_criterion.strip():
            raise ConfigError(f"Domain '{self.name}' needs a grounding criterion")


BUILTIN_DOMAINS: Dict[str, DomainProfile] = {
    "cryogenic_hea": DomainProfile(
        name="cryogenic_hea",
        system_message="You are an expert in the alloy field of Materials Science and Engineering",
        grounding_criterion=(
            "A 'Strong' hypothesis explicitly harnesses phenomena or mechanisms specific to "
            "cryogenic conditions; a 'Weak' hypothesis lacks this specificity."
        ),
        design_goal="high entropy alloys with superior mechanical properties at cryogenic temperatures",
    ),
    "halide_se": DomainProfile(
        name="halide_se",
        system_message="You possess expertise in the field of all-solid-state Lithium battery research",
        grounding_criterion=(
            "A 'Strong' hypothesis incorporates mechanisms that contribute to "
            "formability/malleability; a 'Weak' hypothesis lacks such mechanisms."
        ),
        design_goal="halide solid electrolytes with high ionic conductivity and formability/malleability",
        compound_mode=True,
    ),
}


def resolve_domain(name: str, extra_domains: Optional[Dict[str, DomainProfile]] = None) -> DomainProfile:
    """Look up a domain profile by name, config-defined profiles first."""
    if extra_domains and name in extra_domains:
        return extra_domains[name]
    if name in BUILTIN_DOMAINS:
        return BUILTIN_DOMAINS[name]
    known = sorted(set(BUILTIN_DOMAINS) | set(extra_domains or {}))
    raise ConfigError(f"Unknown domain profile '{name}'. Known: {known}")


@dataclass
class ProfileSettings:
    """Gateway-facing slice of the pipeline config."""
    model_id: str = DEFAULT_MODEL_ID
    eval_model_id: str = DEFAULT_EVAL_MODEL_ID
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperatures: Dict[Stage, float] = field(default_factory=lambda: dict(DEFAULT_TEMPERATURES))


@dataclass(frozen=True)
class StageProfile:
    """Everything a stage needs to build fully specified requests."""
    stage: Stage
    temperature: float
    model_id: str
    system_message: str
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    extra_params: Tuple[Tuple[str, Any], ...] = ()
    backend: str = "primary"  # "primary" or "evaluation"

    def request(self, user_prompt: str, history: Tuple = ()):
        """Build an LlmRequest carrying this profile's parameters."""
        from .api.llm_client import LlmRequest

        return LlmRequest(
            model_id=self.model_id,
            system_message=self.system_message,
            user_prompt=user_prompt,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            extra_params=dict(self.extra_params),
            history=tuple(history),
        )


def build_profile(stage: Stage, domain_profile: DomainProfile,
                  settings: Optional[ProfileSettings] = None) -> StageProfile:
    """
    Build the request profile for one stage.

    Args:
        stage: Pipeline stage (or its string value)
        domain_profile: Domain whose system message is used verbatim
        settings: Model ids, token cap and temperature overrides (defaults if None)

    Returns:
        StageProfile for the stage

    Raises:
        ConfigError: Unknown stage or a domain without a system message
    """
    try:
        stage = Stage(stage)
    except ValueError:
        raise ConfigError(f"Unknown stage: {stage}")

    if not domain_profile.system_message.strip():
        raise ConfigError(f"Domain '{domain_profile.name}' defines no system message")

    settings = settings or ProfileSettings()
    temperature = settings.temperatures.get(stage, DEFAULT_TEMPERATURES[stage])
    if not 0.0 <= temperature <= 2.0:
        raise ConfigError(f"Temperature for {stage.value} out of range: {temperature}")

    is_eval = stage is Stage.EVALUATION
    extra = EVAL_EXTRA_PARAMS if is_eval else PRIMARY_EXTRA_PARAMS

    return StageProfile(
        stage=stage,
        temperature=temperature,
        model_id=settings.eval_model_id if is_eval else settings.model_id,
        system_message=domain_profile.system_message,
        max_output_tokens=settings.max_output_tokens,
        extra_params=tuple(sorted(extra.items())),
        backend="evaluation" if is_eval else "primary",
    )
