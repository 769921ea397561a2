"""Chat-completion client (OpenAI-compatible wire format) with first-token logprobs."""
from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence, TypeVar

import httpx

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
API_KEY_ENV = "MIXSUMM_API_KEY"
CORRECTIVE_SUFFIX = (
    "\n\nYour previous answer could not be parsed. "
    "Reply again and follow the output format exactly."
)

T = TypeVar("T")
R = TypeVar("R")


class LLMError(RuntimeError):
    """Base class; ``attempts`` is the number of requests made before giving up."""

    transient = False

    def __init__(self, message: str, attempts: int = 1):
        self.attempts = attempts
        super().__init__(message)


class LLMTransportError(LLMError):
    transient = True


class LLMTimeoutError(LLMError):
    transient = True


class LLMStatusError(LLMError):
    def __init__(self, status: int, attempts: int = 1):
        self.status = status
        super().__init__(f"chat endpoint returned HTTP {status}", attempts)

    @property
    def transient(self) -> bool:  # type: ignore[override]
        return self.status == 429 or self.status >= 500


class MalformedPayloadError(LLMError):
    """The endpoint answered but the JSON body is not a chat completion."""


class MalformedResponseError(LLMError):
    """The completion text does not follow the prompt's output protocol."""


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    want_top_logprobs: int = 0
    # builder metadata for mocks and bookkeeping; never sent over the wire
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"invalid role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 <= self.want_top_logprobs <= 5:
            raise ValueError("want_top_logprobs must be in 0..5")

    @classmethod
    def user(cls, content: str, **kw) -> "ChatRequest":
        return cls(messages=(("user", content),), **kw)

    @property
    def prompt(self) -> str:
        return "\n\n".join(c for _, c in self.messages)

    def with_suffix(self, suffix: str) -> "ChatRequest":
        *head, (role, content) = self.messages
        return replace(self, messages=tuple(head) + ((role, content + suffix),))


@dataclass(frozen=True)
class ChatResponse:
    text: str
    first_token_alternatives: tuple[tuple[str, float], ...] = ()
    attempts: int = 1

    def __post_init__(self):
        if len(self.first_token_alternatives) > 5:
            raise ValueError("at most 5 first-token alternatives")
        total = 0.0
        for tok, p in self.first_token_alternatives:
            if not 0 < p <= 1:
                raise ValueError(f"probability {p} for {tok!r} outside (0, 1]")
            total += p
        if total > 1 + 1e-6:
            raise ValueError(f"alternative probabilities sum to {total} > 1")


class BaseChatClient:
    """Retry loop shared by the HTTP and mock clients. Subclasses implement ``_send``."""

    def __init__(self, retries: int = 2, backoff: float = 0.5, max_in_flight: int = 4,
                 max_context_tokens: int = 8192, sleep: Callable[[float], None] = time.sleep):
        self.retries = retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self.max_context_tokens = max_context_tokens
        self._sleep = sleep

    def _send(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def chat(self, request: ChatRequest) -> ChatResponse:
        attempt = 0
        while True:
            attempt += 1
            try:
                resp = self._send(request)
            except LLMError as exc:
                exc.attempts = attempt
                if not exc.transient or attempt > self.retries:
                    raise
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning("transient LLM failure (%s); retry %d/%d in %.2fs", exc, attempt, self.retries, delay)
                if delay:
                    self._sleep(delay)
                continue
            return replace(resp, attempts=attempt)


class OpenAIChatClient(BaseChatClient):
    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 120.0,
                 transport: httpx.BaseTransport | None = None, **kw):
        super().__init__(**kw)
        self.model = model
        self.url = endpoint.rstrip("/")
        if not self.url.endswith("/chat/completions"):
            self.url += "/v1/chat/completions"
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def payload(self, request: ChatRequest) -> dict:
        body: dict = {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.want_top_logprobs:
            body["logprobs"] = True
            body["top_logprobs"] = request.want_top_logprobs
        return body

    def _send(self, request: ChatRequest) -> ChatResponse:
        try:
            resp = self._http.post(self.url, json=self.payload(request))
        except httpx.TimeoutException as exc:
            raise LLMTimeoutError(f"chat request timed out: {exc}") from exc
        except httpx.HTTPError as exc:
            raise LLMTransportError(f"chat transport error: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise LLMStatusError(resp.status_code)
        return parse_completion(resp.content, request.want_top_logprobs)

    def close(self) -> None:
        self._http.close()


def parse_completion(body: bytes | str | dict, top_n: int = 0) -> ChatResponse:
    """Extract text and first-token alternatives from a chat-completion JSON body."""
    import json

    try:
        obj = body if isinstance(body, dict) else json.loads(body)
        choice = obj["choices"][0]
        text = choice["message"]["content"] or ""
        alts: list[tuple[str, float]] = []
        if top_n:
            content = ((choice.get("logprobs") or {}).get("content")) or []
            if content:
                for item in content[0].get("top_logprobs", [])[:top_n]:
                    p = math.exp(float(item["logprob"]))
                    if p > 0:
                        alts.append((item["token"], min(p, 1.0)))
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedPayloadError(f"malformed chat completion payload: {exc!r}") from exc
    total = sum(p for _, p in alts)
    if total > 1 + 1e-6:
        alts = [(t, p / total) for t, p in alts]
    return ChatResponse(text=text, first_token_alternatives=tuple(alts))


def map_bounded(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], max_in_flight: int = 1) -> list[R]:
    """``fn`` over ``items`` with at most ``max_in_flight`` concurrent calls; results in input order."""
    items = list(items)
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(fn, items))


def ask_with_retries(client: BaseChatClient, request: ChatRequest, parse: Callable[[ChatResponse], T],
                     retries: int = 2) -> T:
    """Send ``request`` and parse the reply, re-asking with a corrective suffix on malformed replies."""
    req = request
    for attempt in range(retries + 1):
        resp = client.chat(req)
        try:
            return parse(resp)
        except MalformedResponseError as exc:
            log.info("malformed reply (attempt %d/%d): %s", attempt + 1, retries + 1, exc)
            last = exc
            req = request.with_suffix(CORRECTIVE_SUFFIX)
    raise MalformedResponseError(str(last), attempts=retries + 1)
