#!/usr/bin/env python3
"""
Tests for the chat backends

Covers the scripted backend (digest, rule and responder lookup, fixture
directories), record/replay, and the HTTP backend with ChatOpenAI mocked.
"""

from unittest.mock import AsyncMock, MagicMock, patch

import httpx
import openai
import pytest

from llm_gateway.api.backends import (
    ChatHttpBackend,
    RecordReplayBackend,
    ScriptedBackend,
    ScriptedFixtureMissing,
    ScriptRule,
)
from llm_gateway.api.llm_client import (
    FinishReason,
    LlmGatewayError,
    LlmRequest,
    TransientBackendError,
    request_digest,
)


def make_request(prompt: str = "Score the hypothesis.", **kwargs) -> LlmRequest:
    return LlmRequest(model_id="test-model", system_message="system", user_prompt=prompt, **kwargs)


class TestScriptedBackend:

    async def test_exact_digest_wins_over_rules(self):
        request = make_request()
        backend = ScriptedBackend(
            responses={request_digest(request): "exact"},
            rules=[ScriptRule(contains=("Score",), reply="rule")],
        )
        assert (await backend.send(request)).text == "exact"
        assert (await backend.send(make_request("Score it again."))).text == "rule"

    async def test_rules_need_every_substring(self):
        backend = ScriptedBackend(rules=[
            ScriptRule(contains=("Score", "HYPOTHESIS 2"), reply="second"),
            ScriptRule(contains=("Score",), reply="any"),
        ])
        assert (await backend.send(make_request("Score HYPOTHESIS 2"))).text == "second"
        assert (await backend.send(make_request("Score HYPOTHESIS 3"))).text == "any"

    async def test_responder_is_the_fallback(self):
        backend = ScriptedBackend(responder=lambda r: r.user_prompt.upper() if "echo" in r.user_prompt else None)
        assert (await backend.send(make_request("echo me"))).text == "ECHO ME"
        with pytest.raises(ScriptedFixtureMissing):
            await backend.send(make_request("nothing matches"))

    async def test_missing_fixture_is_a_gateway_error_with_digest(self):
        backend = ScriptedBackend()
        request = make_request()
        with pytest.raises(LlmGatewayError) as exc_info:
            await backend.send(request)
        assert exc_info.value.digest == request_digest(request)

    async def test_ledger_records_every_call(self):
        backend = ScriptedBackend(rules=[ScriptRule(contains=("",), reply="x")])
        requests = [make_request(f"prompt {i}") for i in range(3)]
        for request in requests:
            await backend.send(request)
        assert backend.call_count == 3
        assert [d for d, _ in backend.ledger] == [request_digest(r) for r in requests]

    async def test_from_directory(self, tmp_path):
        request = make_request()
        (tmp_path / f"{request_digest(request)}.txt").write_text("from file", encoding="utf-8")
        (tmp_path / "rules.yaml").write_text(
            "- contains: Label\n  reply: |\n    Label: Strong\n    Rationale: cryogenic twinning\n"
            "- contains: [cut]\n  reply: partial\n  finish_reason: truncated\n",
            encoding="utf-8",
        )
        backend = ScriptedBackend.from_directory(tmp_path)

        assert (await backend.send(request)).text == "from file"
        assert (await backend.send(make_request("Label please"))).text.startswith("Label: Strong")
        truncated = await backend.send(make_request("cut here"))
        assert truncated.finish_reason is FinishReason.TRUNCATED

    def test_from_missing_directory(self, tmp_path):
        with pytest.raises(ValueError):
            ScriptedBackend.from_directory(tmp_path / "absent")


class TestRecordReplayBackend:

    async def test_record_then_replay(self, tmp_path):
        inner = ScriptedBackend(rules=[ScriptRule(contains=("",), reply="recorded reply")])
        recorder = RecordReplayBackend(tmp_path, inner=inner)
        request = make_request()

        assert recorder.recording
        assert (await recorder.send(request)).text == "recorded reply"
        assert recorder.recorded_digests() == [request_digest(request)]

        replay = RecordReplayBackend(tmp_path)
        assert not replay.recording
        assert (await replay.send(request)).text == "recorded reply"
        assert inner.call_count == 1

    async def test_replay_miss_never_reaches_a_backend(self, tmp_path):
        with pytest.raises(LlmGatewayError):
            await RecordReplayBackend(tmp_path).send(make_request())


class TestChatHttpBackend:

    @pytest.fixture
    def api_key(self, monkeypatch):
        monkeypatch.setenv("HYPOFORGE_API_KEY", "test-key")

    def test_missing_key(self, monkeypatch):
        monkeypatch.delenv("HYPOFORGE_API_KEY", raising=False)
        with pytest.raises(ValueError, match="HYPOFORGE_API_KEY"):
            ChatHttpBackend()

    @patch("llm_gateway.api.backends.ChatOpenAI")
    async def test_request_parameters_reach_the_client(self, mock_chat, api_key):
        message = MagicMock(content="| a | b |", response_metadata={"finish_reason": "stop"})
        mock_chat.return_value.ainvoke = AsyncMock(return_value=message)
        backend = ChatHttpBackend(base_url="https://llm.example/v1", backend_id="primary")

        request = make_request(temperature=1.0, max_output_tokens=4000,
                               extra_params={"top_p": 0.95, "top_k": 64})
        response = await backend.send(request)

        kwargs = mock_chat.call_args.kwargs
        assert kwargs["model"] == "test-model"
        assert kwargs["temperature"] == 1.0
        assert kwargs["max_tokens"] == 4000
        assert kwargs["base_url"] == "https://llm.example/v1"
        assert kwargs["max_retries"] == 0
        assert kwargs["top_p"] == 0.95
        assert kwargs["extra_body"] == {"top_k": 64}
        assert response.text == "| a | b |"
        assert response.finish_reason is FinishReason.COMPLETE
        assert response.backend_id == "primary"

    @patch("llm_gateway.api.backends.ChatOpenAI")
    async def test_length_finish_is_truncated(self, mock_chat, api_key):
        message = MagicMock(content="partial", response_metadata={"finish_reason": "length"})
        mock_chat.return_value.ainvoke = AsyncMock(return_value=message)
        response = await ChatHttpBackend().send(make_request())
        assert response.truncated

    @patch("llm_gateway.api.backends.ChatOpenAI")
    async def test_timeouts_are_transient(self, mock_chat, api_key):
        error = openai.APITimeoutError(request=httpx.Request("POST", "https://llm.example/v1"))
        mock_chat.return_value.ainvoke = AsyncMock(side_effect=error)
        with pytest.raises(TransientBackendError):
            await ChatHttpBackend().send(make_request())
