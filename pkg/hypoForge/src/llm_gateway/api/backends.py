#!/usr/bin/env python3
"""
Chat Backends

The three backends the gateway can sit in front of:
- ChatHttpBackend: any OpenAI-compatible chat endpoint through ChatOpenAI
- ScriptedBackend: canned replies for offline tests, never touches the network
- RecordReplayBackend: records an inner backend's replies, or replays them
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import openai
import yaml
from dotenv import load_dotenv
from langchain_openai import ChatOpenAI

from .llm_client import (
    FinishReason,
    LlmGatewayError,
    LlmRequest,
    LlmResponse,
    TransientBackendError,
    read_transcript,
    request_digest,
    write_transcript,
)

# Load environment variables
load_dotenv()

TRANSIENT_ERRORS = (
    openai.RateLimitError,
    openai.APIConnectionError,
    openai.APITimeoutError,
    openai.InternalServerError,
)

# Request parameters ChatOpenAI accepts as named fields; anything else goes to extra_body.
NATIVE_PARAMS = {"top_p", "frequency_penalty", "presence_penalty", "seed", "stop"}


class ScriptedFixtureMissing(LlmGatewayError):
    """The scripted backend has no reply for a request."""


class ChatHttpBackend:
    """
    Generic chat-completion backend over HTTP.

    Works against any OpenAI-compatible endpoint: base URL and bearer token are
    configuration, model and sampling parameters come from each request.
    Retries are left to the gateway (max_retries=0 here).
    """

    def __init__(self, base_url: Optional[str] = None, api_key_env: str = "HYPOFORGE_API_KEY",
                 timeout: float = 120.0, backend_id: Optional[str] = None):
        """
        Initialize the HTTP backend.

        Args:
            base_url: Endpoint root (None uses the client default)
            api_key_env: Environment variable holding the bearer token
            timeout: Per-request timeout in seconds
            backend_id: Identifier recorded on responses and in run manifests
        """
        self.base_url = base_url
        self.timeout = timeout
        self.backend_id = backend_id or f"http:{base_url or 'default'}"
        self.logger = logging.getLogger(__name__)

        self.api_key = os.getenv(api_key_env)
        if not self.api_key:
            raise ValueError(f"{api_key_env} not found in environment variables")

    def _build_llm(self, request: LlmRequest) -> ChatOpenAI:
        native = {k: v for k, v in request.extra_params.items() if k in NATIVE_PARAMS}
        extra_body = {k: v for k, v in request.extra_params.items() if k not in NATIVE_PARAMS}
        return ChatOpenAI(
            model=request.model_id,
            temperature=request.temperature,
            max_tokens=request.max_output_tokens,
            api_key=self.api_key,
            base_url=self.base_url,
            timeout=self.timeout,
            max_retries=0,
            extra_body=extra_body or None,
            **native,
        )

    async def send(self, request: LlmRequest) -> LlmResponse:
        llm = self._build_llm(request)
        try:
            message = await llm.ainvoke(request.to_messages())
        except TRANSIENT_ERRORS as e:
            self.logger.warning(f"Transient failure from {self.backend_id}: {e}")
            raise TransientBackendError(str(e)) from e
        except openai.APIError as e:
            raise LlmGatewayError(f"Backend {self.backend_id} rejected request: {e}",
                                  digest=request_digest(request)) from e

        finish = (message.response_metadata or {}).get("finish_reason", "stop")
        return LlmResponse(
            text=message.content if isinstance(message.content, str) else str(message.content),
            finish_reason=self._map_finish_reason(finish),
            backend_id=self.backend_id,
        )

    @staticmethod
    def _map_finish_reason(finish: Optional[str]) -> FinishReason:
        if finish in (None, "stop", "end_turn", "STOP"):
            return FinishReason.COMPLETE
        if finish in ("length", "max_tokens", "MAX_TOKENS"):
            return FinishReason.TRUNCATED
        return FinishReason.ERROR


@dataclass(frozen=True)
class ScriptRule:
    """Reply used for any request whose user prompt contains every substring."""
    contains: Tuple[str, ...]
    reply: str
    finish_reason: FinishReason = FinishReason.COMPLETE

    def matches(self, request: LlmRequest) -> bool:
        return all(s in request.user_prompt for s in self.contains)


class ScriptedBackend:
    """
    Deterministic offline backend.

    Replies are looked up in order: exact request digest, then the first
    matching substring rule, then the responder callable. Every call is
    recorded in the ledger so tests can assert call counts.
    """

    def __init__(self, responses: Optional[Dict[str, str]] = None,
                 rules: Optional[Sequence[ScriptRule]] = None,
                 responder: Optional[Callable[[LlmRequest], Optional[str]]] = None,
                 backend_id: str = "scripted"):
        self.responses = dict(responses or {})
        self.rules = list(rules or [])
        self.responder = responder
        self.backend_id = backend_id
        self.ledger: List[Tuple[str, LlmRequest]] = []
        self.logger = logging.getLogger(__name__)

    @property
    def call_count(self) -> int:
        return len(self.ledger)

    async def send(self, request: LlmRequest) -> LlmResponse:
        digest = request_digest(request)
        self.ledger.append((digest, request))

        if digest in self.responses:
            return LlmResponse(text=self.responses[digest], backend_id=self.backend_id)

        for rule in self.rules:
            if rule.matches(request):
                return LlmResponse(text=rule.reply, finish_reason=rule.finish_reason,
                                   backend_id=self.backend_id)

        if self.responder is not None:
            text = self.responder(request)
            if text is not None:
                return LlmResponse(text=text, backend_id=self.backend_id)

        self.logger.error(f"No scripted reply for request {digest[:12]}")
        raise ScriptedFixtureMissing("No scripted reply matches the request", digest=digest)

    @classmethod
    def from_directory(cls, fixture_dir: Path, backend_id: str = "scripted") -> "ScriptedBackend":
        """
        Load fixtures from a directory.

        `<digest>.txt` files answer one exact request each; an optional
        `rules.yaml` holds a list of {contains: [..], reply: .., finish_reason: ..}.
        """
        fixture_dir = Path(fixture_dir)
        if not fixture_dir.is_dir():
            raise ValueError(f"Fixture directory not found: {fixture_dir}")

        responses = {
            path.stem: path.read_text(encoding="utf-8")
            for path in sorted(fixture_dir.glob("*.txt"))
        }

        rules: List[ScriptRule] = []
        rules_path = fixture_dir / "rules.yaml"
        if rules_path.is_file():
            with open(rules_path, "r", encoding="utf-8") as f:
                raw_rules: List[Dict[str, Any]] = yaml.safe_load(f) or []
            for entry in raw_rules:
                contains = entry.get("contains", [])
                if isinstance(contains, str):
                    contains = [contains]
                rules.append(ScriptRule(
                    contains=tuple(contains),
                    reply=str(entry["reply"]),
                    finish_reason=FinishReason(entry.get("finish_reason", "complete")),
                ))

        return cls(responses=responses, rules=rules, backend_id=backend_id)


class RecordReplayBackend:
    """
    Record/replay wrapper.

    With an inner backend it forwards each request and records the reply as a
    transcript; without one it only replays recorded transcripts and fails on
    a miss instead of reaching the network.
    """

    def __init__(self, transcript_dir: Path, inner=None):
        self.transcript_dir = Path(transcript_dir)
        self.inner = inner
        self.backend_id = f"replay+{inner.backend_id}" if inner is not None else "replay"
        self.logger = logging.getLogger(__name__)

    @property
    def recording(self) -> bool:
        return self.inner is not None

    async def send(self, request: LlmRequest) -> LlmResponse:
        digest = request_digest(request)
        path = self.transcript_dir / f"{digest}.json"

        recorded = read_transcript(path)
        if recorded is not None:
            return LlmResponse(text=recorded.text, finish_reason=recorded.finish_reason,
                               backend_id=self.backend_id)

        if not self.recording:
            raise LlmGatewayError("Replay miss: no recorded transcript", digest=digest)

        response = await self.inner.send(request)
        if response.finish_reason is not FinishReason.ERROR:
            write_transcript(path, request, response)
            self.logger.debug(f"Recorded transcript {digest[:12]}")
        return response

    def recorded_digests(self) -> List[str]:
        return sorted(p.stem for p in self.transcript_dir.glob("*.json"))
