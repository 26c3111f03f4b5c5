from .llm_client import (
    BackendHandle,
    ChatTurn,
    FinishReason,
    LlmGateway,
    LlmGatewayError,
    LlmRequest,
    LlmResponse,
    TransientBackendError,
    complete,
    request_digest,
)
from .backends import ChatHttpBackend, RecordReplayBackend, ScriptedBackend, ScriptRule, ScriptedFixtureMissing

__all__ = [
    'BackendHandle', 'ChatTurn', 'FinishReason', 'LlmGateway', 'LlmGatewayError', 'LlmRequest',
    'LlmResponse', 'TransientBackendError', 'complete', 'request_digest',
    'ChatHttpBackend', 'RecordReplayBackend', 'ScriptedBackend', 'ScriptRule', 'ScriptedFixtureMissing',
]
