"""
Chat transports for the analyst pipeline.

OpenAITransport talks to a chat-completions endpoint; ReplayTransport serves
recorded responses per node and never touches the network.
"""
import time
from abc import ABC, abstractmethod
from collections import deque
from pathlib import Path
from typing import Callable, Deque, Dict, List, Optional, Union

import openai
from loguru import logger
from pydantic import BaseModel

from config import api_key as env_api_key
from db import Transcript, load_transcript
from errors import ConfigurationError, FixtureMissingError, TransportError


class ChatMessage(BaseModel):
    role: str  # system | user | assistant
    content: str


class ChatRequest(BaseModel):
    node_id: str
    messages: List[ChatMessage]
    model_id: str
    temperature: float = 0.0


class ChatReply(BaseModel):
    content: str
    usage: Optional[Dict[str, int]] = None


class LlmTransport(ABC):
    mode: str = "live"

    @abstractmethod
    def complete(self, request: ChatRequest) -> ChatReply:
        ...


class OpenAITransport(LlmTransport):
    mode = "live"

    def __init__(self, api_key: Optional[str] = None, endpoint: Optional[str] = None,
                 retry_attempts: int = 3, backoff_seconds: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep, client=None):
        key = api_key or env_api_key()
        if client is None and not key:
            raise ConfigurationError("live mode needs an API key in PSW_LLM_API_KEY")
        self.endpoint = endpoint
        self.retry_attempts = retry_attempts
        self.backoff_seconds = backoff_seconds
        self.sleep = sleep
        self.client = client or openai.OpenAI(api_key=key, base_url=endpoint)

    def complete(self, request: ChatRequest, attempt: int = 1) -> ChatReply:
        try:
            completion = self.client.chat.completions.create(
                model=request.model_id,
                messages=[m.model_dump() for m in request.messages],
                temperature=request.temperature,
            )
        except openai.OpenAIError as e:
            if attempt >= self.retry_attempts:
                raise TransportError(f"{request.node_id}: giving up after {attempt} attempts: {e}") from e
            delay = self.backoff_seconds * 2 ** (attempt - 1)
            logger.warning(f"{request.node_id}: attempt {attempt} failed ({type(e).__name__}), retrying in {delay}s")
            self.sleep(delay)
            return self.complete(request, attempt + 1)

        usage = None
        if getattr(completion, "usage", None) is not None:
            usage = {
                "prompt_tokens": completion.usage.prompt_tokens,
                "completion_tokens": completion.usage.completion_tokens,
                "total_tokens": completion.usage.total_tokens,
            }
        return ChatReply(content=completion.choices[0].message.content or "", usage=usage)


class ReplayTransport(LlmTransport):
    """Answers each node from a queue of recorded responses; repeated nodes consume the queue in order."""
    mode = "replay"

    def __init__(self, responses: Dict[str, List[str]], source: str = "replay set"):
        self.source = source
        self._queues: Dict[str, Deque[str]] = {node: deque(texts) for node, texts in responses.items()}
        self.calls: List[ChatRequest] = []

    @classmethod
    def from_transcript(cls, transcript: Transcript, source: Optional[str] = None) -> "ReplayTransport":
        responses: Dict[str, List[str]] = {}
        for node in transcript.nodes:
            responses.setdefault(node.node_id, []).append(node.response)
        return cls(responses, source or transcript.run_id)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ReplayTransport":
        return cls.from_transcript(load_transcript(path), source=Path(path).name)

    def without(self, node_id: str) -> "ReplayTransport":
        responses = {node: list(q) for node, q in self._queues.items() if node != node_id}
        return ReplayTransport(responses, self.source)

    def complete(self, request: ChatRequest) -> ChatReply:
        self.calls.append(request)
        queue = self._queues.get(request.node_id)
        if not queue:
            raise FixtureMissingError(request.node_id, self.source)
        return ChatReply(content=queue.popleft())
