#!/usr/bin/env python3
"""
Chat-Completion Gateway

Uniform async interface in front of every chat backend. Each fully specified
request is hashed into a digest; replies are cached as one JSON transcript
per digest so any stage can be replayed offline and resumed after a crash.

Handles:
- Canonical request serialization and digests
- Content-addressed transcript cache (atomic write-then-rename)
- Bounded exponential backoff on transient backend failures
- In-flight bound and per-digest single-flight for concurrent callers
"""

import asyncio
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Protocol, Tuple

from tenacity import (
    AsyncRetrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)


class TransientBackendError(RuntimeError):
    """A retryable backend failure (rate limit, timeout, 5xx, dropped connection)."""


class LlmGatewayError(RuntimeError):
    """Stage-fatal gateway failure; carries the digest of the failed request."""

    def __init__(self, message: str, digest: str = ""):
        super().__init__(f"{message} (request {digest[:12]})" if digest else message)
        self.digest = digest


class FinishReason(str, Enum):
    COMPLETE = "complete"
    TRUNCATED = "truncated"
    ERROR = "error"


@dataclass(frozen=True)
class ChatTurn:
    """One prior message of a multi-turn conversation."""
    role: str  # "user" or "assistant"
    content: str


@dataclass(frozen=True)
class LlmRequest:
    """A fully specified chat call."""
    model_id: str
    system_message: str
    user_prompt: str
    temperature: float = 0.0
    max_output_tokens: int = 4000
    extra_params: Dict[str, Any] = field(default_factory=dict)
    history: Tuple[ChatTurn, ...] = ()

    def __post_init__(self):
        if self.max_output_tokens <= 0:
            raise ValueError(f"max_output_tokens must be positive: {self.max_output_tokens}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of range [0, 2]: {self.temperature}")

    def canonical(self) -> Dict[str, Any]:
        """Order-independent dict form; the basis of the digest."""
        return {
            "model_id": self.model_id,
            "system_message": self.system_message,
            "user_prompt": self.user_prompt,
            "temperature": float(self.temperature),
            "max_output_tokens": int(self.max_output_tokens),
            "extra_params": {k: self.extra_params[k] for k in sorted(self.extra_params)},
            "history": [{"role": t.role, "content": t.content} for t in self.history],
        }

    def to_messages(self) -> list:
        """Chat message list: system, prior turns, then the new user prompt."""
        messages = [{"role": "system", "content": self.system_message}]
        messages.extend({"role": t.role, "content": t.content} for t in self.history)
        messages.append({"role": "user", "content": self.user_prompt})
        return messages

    def followup(self, reply: str, next_prompt: str) -> "LlmRequest":
        """The next request of the same conversation, after `reply` to this one."""
        history = self.history + (ChatTurn("user", self.user_prompt), ChatTurn("assistant", reply))
        return LlmRequest(
            model_id=self.model_id,
            system_message=self.system_message,
            user_prompt=next_prompt,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            extra_params=dict(self.extra_params),
            history=history,
        )

    @classmethod
    def from_canonical(cls, data: Dict[str, Any]) -> "LlmRequest":
        return cls(
            model_id=data["model_id"],
            system_message=data["system_message"],
            user_prompt=data["user_prompt"],
            temperature=data["temperature"],
            max_output_tokens=data["max_output_tokens"],
            extra_params=dict(data.get("extra_params", {})),
            history=tuple(ChatTurn(**t) for t in data.get("history", [])),
        )


@dataclass(frozen=True)
class LlmResponse:
    """A backend reply (or its cached copy)."""
    text: str
    finish_reason: FinishReason = FinishReason.COMPLETE
    backend_id: str = ""
    cached: bool = False

    @property
    def truncated(self) -> bool:
        return self.finish_reason is FinishReason.TRUNCATED


def request_digest(request: LlmRequest) -> str:
    """SHA-256 of the canonical JSON serialization of a request."""
    payload = json.dumps(request.canonical(), sort_keys=True, separators=(",", ":"),
                         ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    """Anything that can answer one LlmRequest."""
    backend_id: str

    async def send(self, request: LlmRequest) -> LlmResponse: ...


def write_transcript(path: Path, request: LlmRequest, response: LlmResponse):
    """Atomically persist {request, response, timestamp} as JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "request": request.canonical(),
        "response": {
            "text": response.text,
            "finish_reason": response.finish_reason.value,
            "backend_id": response.backend_id,
        },
        "timestamp": datetime.now().isoformat(),
    }
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, ensure_ascii=False)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_transcript(path: Path) -> Optional[LlmResponse]:
    """Load a cached response, or None if absent or unreadable."""
    if not path.is_file():
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
        data = record["response"]
        return LlmResponse(
            text=data["text"],
            finish_reason=FinishReason(data["finish_reason"]),
            backend_id=data.get("backend_id", ""),
            cached=True,
        )
    except (OSError, ValueError, KeyError) as e:
        logging.getLogger(__name__).warning(f"Ignoring unreadable transcript {path}: {e}")
        return None


class LlmGateway:
    """
    Cache-first, retrying, concurrency-bounded front door to chat backends.

    complete() is safe for concurrent callers on one event loop: at most
    max_in_flight backend calls run at once, and duplicate concurrent
    requests for the same digest share a single backend call.
    """

    def __init__(self, cache_dir: Optional[Path] = None, max_in_flight: int = 4,
                 max_attempts: int = 5, base_delay: float = 1.0, max_delay: float = 30.0):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be at least 1")
        if max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_in_flight = max_in_flight
        self.max_attempts = max_attempts
        self.base_delay = base_delay
        self.max_delay = max_delay

        self._semaphore: Optional[asyncio.Semaphore] = None
        self._inflight: Dict[str, "asyncio.Future[LlmResponse]"] = {}

        self.backend_calls = 0
        self.cache_hits = 0

        self.logger = logging.getLogger(__name__)

    def handle(self, backend: ChatBackend) -> "BackendHandle":
        """Bind a backend to this gateway; stages talk to the handle."""
        return BackendHandle(self, backend)

    def cache_path(self, digest: str) -> Optional[Path]:
        return self.cache_dir / f"{digest}.json" if self.cache_dir else None

    async def complete(self, request: LlmRequest, backend: ChatBackend) -> LlmResponse:
        """
        Answer a request from the cache, or call the backend and cache the reply.

        Args:
            request: Fully specified chat call
            backend: Backend used on a cache miss

        Returns:
            LlmResponse (cached=True when served from the cache)

        Raises:
            LlmGatewayError: Retries exhausted or a non-retryable backend failure
        """
        digest = request_digest(request)

        cache_path = self.cache_path(digest)
        if cache_path is not None:
            cached = read_transcript(cache_path)
            if cached is not None:
                self.cache_hits += 1
                self.logger.debug(f"Cache hit {digest[:12]}")
                return cached

        pending = self._inflight.get(digest)
        if pending is not None:
            self.logger.debug(f"Joining in-flight request {digest[:12]}")
            return await asyncio.shield(pending)

        task = asyncio.ensure_future(self._fetch(request, digest, backend))
        self._inflight[digest] = task
        task.add_done_callback(lambda _: self._inflight.pop(digest, None))
        return await asyncio.shield(task)

    async def _fetch(self, request: LlmRequest, digest: str, backend: ChatBackend) -> LlmResponse:
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.max_in_flight)

        async with self._semaphore:
            try:
                async for attempt in AsyncRetrying(
                    stop=stop_after_attempt(self.max_attempts),
                    wait=wait_exponential(multiplier=self.base_delay, max=self.max_delay),
                    retry=retry_if_exception_type(TransientBackendError),
                    before_sleep=before_sleep_log(self.logger, logging.WARNING),
                    reraise=True,
                ):
                    with attempt:
                        self.backend_calls += 1
                        response = await backend.send(request)
            except TransientBackendError as e:
                self.logger.error(f"Backend {backend.backend_id} failed {self.max_attempts} times: {e}")
                raise LlmGatewayError(f"Retries exhausted after {self.max_attempts} attempts: {e}",
                                      digest=digest) from e

        if response.truncated:
            self.logger.warning(f"Reply truncated at the token cap (request {digest[:12]})")

        cache_path = self.cache_path(digest)
        if cache_path is not None and response.finish_reason is not FinishReason.ERROR:
            write_transcript(cache_path, request, response)

        self.logger.debug(f"Backend {backend.backend_id} answered {digest[:12]}")
        return response

    def get_cache_stats(self) -> Dict[str, Any]:
        total = self.backend_calls + self.cache_hits
        return {
            "backend_calls": self.backend_calls,
            "cache_hits": self.cache_hits,
            "cache_hit_rate": self.cache_hits / total if total else 0.0,
        }


class BackendHandle:
    """A backend bound to a gateway; what pipeline stages receive."""

    def __init__(self, gateway: LlmGateway, backend: ChatBackend):
        self.gateway = gateway
        self.backend = backend

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    async def complete(self, request: LlmRequest) -> LlmResponse:
        return await self.gateway.complete(request, self.backend)


async def complete(request: LlmRequest, backend: BackendHandle) -> LlmResponse:
    """Answer a request through a gateway-bound backend handle."""
    return await backend.complete(request)
