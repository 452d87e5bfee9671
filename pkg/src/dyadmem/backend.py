"""Chat-completion backends.

One uniform interface covers every model role (extractor, selector,
generator, updater, judge); each role binds its own config. The live
implementation speaks the OpenAI-compatible chat-completions JSON protocol
with retry/backoff; the mock is a deterministic rule table so end-to-end
tests are total without network egress.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence


class BackendFailure(Exception):
    """Base class for completion failures."""


class Timeout(BackendFailure):
    pass


class RateLimited(BackendFailure):
    pass


class InvalidRequest(BackendFailure):
    """Request-validation failure; never retried."""


class ExhaustedRetries(BackendFailure):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise InvalidRequest(f"bad role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 512
    stop: tuple[str, ...] = ()
    seed: int | None = None
    # Advisory metadata (template id, slot digests); excluded from the
    # fingerprint so caching keys on semantic content only.
    tags: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.messages:
            raise InvalidRequest("request needs at least one message")
        if self.max_tokens < 1:
            raise InvalidRequest("max_tokens must be >= 1")
        if self.temperature < 0:
            raise InvalidRequest("temperature must be >= 0")

    def text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"  # stop | length | error
    latency_ms: float = 0.0
    token_counts: Mapping[str, int] | None = None
    flagged: bool = False  # mock fallback marker

    def __post_init__(self) -> None:
        if self.finish_reason != "error" and self.text is None:
            raise ValueError("non-error responses carry text")


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "http://localhost:8000/v1/chat/completions"
    model: str = "mock"
    timeout_ms: int = 60_000
    max_retries: int = 3
    backoff_base_s: float = 0.5
    api_key_env: str = "DYADMEM_API_KEY"
    rate_limit_burst: int | None = None
    rate_limit_refill_per_s: float | None = None
    audit_log_path: str | None = None  # JSONL request/response transcript

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def redacted(self) -> dict:
        out = self.__dict__.copy()
        out["api_key_env"] = self.api_key_env  # env var name only, never the key
        return out


def request_fingerprint(request: ChatRequest) -> str:
    """Stable content hash over the semantic request fields."""
    payload = {
        "messages": [[m.role, m.text] for m in request.messages],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "stop": list(request.stop),
        "seed": request.seed,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class TokenBucket:
    """Thread-safe token bucket; acquire blocks until a token refills."""

    def __init__(self, burst: int, refill_per_s: float, clock: Callable[[], float] = time.monotonic):
        self.burst = burst
        self.refill_per_s = refill_per_s
        self.clock = clock
        self._tokens = float(burst)
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self, block: bool = True) -> bool:
        while True:
            with self._lock:
                now = self.clock()
                self._tokens = min(
                    self.burst, self._tokens + (now - self._last) * self.refill_per_s
                )
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return True
                if not block:
                    return False
                wait = (1 - self._tokens) / self.refill_per_s
            time.sleep(wait)


UNMATCHED_TEXT = "Everyday Language"

Responder = Callable[[ChatRequest], str]


@dataclass
class MockRule:
    """Ordered matcher: template id and/or text pattern -> response."""

    respond: str | Responder
    template_id: str | None = None
    contains: str | None = None
    pattern: str | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.template_id is not None:
            if request.tags.get("template_id") != self.template_id:
                return False
        text = request.text()
        if self.contains is not None and self.contains not in text:
            return False
        if self.pattern is not None and not re.search(self.pattern, text):
            return False
        return True

    def render(self, request: ChatRequest) -> str:
        if callable(self.respond):
            return self.respond(request)
        return self.respond


class MockBackend:
    """Referentially transparent rule table.

    Unmatched requests yield a flagged sentinel response instead of an
    error, keeping end-to-end runs total.
    """

    def __init__(self, rules: Sequence[MockRule] = (), unmatched_text: str = UNMATCHED_TEXT):
        self.rules = list(rules)
        self.unmatched_text = unmatched_text
        self.calls: list[str] = []  # fingerprints, for call-count assertions
        self._lock = threading.Lock()

    def add_rule(self, rule: MockRule) -> None:
        self.rules.append(rule)

    def complete(self, request: ChatRequest) -> ChatResponse:
        fingerprint = request_fingerprint(request)
        with self._lock:
            self.calls.append(fingerprint)
        for rule in self.rules:
            if rule.matches(request):
                return ChatResponse(text=rule.render(request))
        return ChatResponse(text=self.unmatched_text, flagged=True)


# Transport returns (http_status, parsed_json_or_none, raw_text).
TransportResult = tuple[int, object, str]
Transport = Callable[[str, dict, dict, float], TransportResult]


def _httpx_transport(url: str, payload: dict, headers: dict, timeout_s: float) -> TransportResult:
    import httpx

    try:
        response = httpx.post(url, json=payload, headers=headers, timeout=timeout_s)
    except httpx.TimeoutException as exc:
        raise Timeout(str(exc)) from exc
    except httpx.HTTPError as exc:
        raise BackendFailure(str(exc)) from exc
    try:
        body = response.json()
    except ValueError:
        body = None
    return response.status_code, body, response.text


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff.

    Retries transient transport failures (timeouts, 429, 5xx) up to
    ``max_retries`` times with exponential backoff; request-validation
    errors surface immediately and are never retried.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: Transport = _httpx_transport,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.transport = transport
        self.sleep = sleep
        self.attempts: list[int] = []  # status per attempt, for tests/audit
        self.limiter = (
            TokenBucket(config.rate_limit_burst, config.rate_limit_refill_per_s or 1.0)
            if config.rate_limit_burst
            else None
        )

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise InvalidRequest(
                f"api key env var {self.config.api_key_env} is not set"
            )
        return key

    def _audit(self, request: ChatRequest, response: ChatResponse | None, status: int) -> None:
        if not self.config.audit_log_path:
            return
        record = {
            "ts": time.time(),
            "fingerprint": request_fingerprint(request),
            "model": self.config.model,
            "messages": [[m.role, m.text] for m in request.messages],
            "status": status,
            "text": response.text if response else None,
            "latency_ms": response.latency_ms if response else None,
        }
        with open(self.config.audit_log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.text} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }

        last_error: BackendFailure | None = None
        for attempt in range(self.config.max_retries + 1):
            if self.limiter:
                self.limiter.acquire()
            started = time.monotonic()
            try:
                status, body, raw = self.transport(
                    self.config.endpoint, payload, headers, self.config.timeout_ms / 1000
                )
            except Timeout as exc:
                self.attempts.append(-1)
                last_error = exc
                self.sleep(self.config.backoff_base_s * (2**attempt))
                continue
            latency_ms = (time.monotonic() - started) * 1000
            self.attempts.append(status)

            if status == 429:
                last_error = RateLimited(raw[:200])
                self.sleep(self.config.backoff_base_s * (2**attempt))
                continue
            if status >= 500:
                last_error = BackendFailure(f"server error {status}")
                self.sleep(self.config.backoff_base_s * (2**attempt))
                continue
            if status >= 400:
                raise InvalidRequest(f"status {status}: {raw[:200]}")

            if not isinstance(body, dict):
                raise BackendFailure("malformed completion body")
            try:
                choice = body["choices"][0]
                text = choice["message"]["content"]
                finish = choice.get("finish_reason", "stop")
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendFailure(f"malformed completion body: {exc}") from exc
            usage = body.get("usage")
            result = ChatResponse(
                text=text,
                finish_reason="length" if finish == "length" else "stop",
                latency_ms=latency_ms,
                token_counts=usage if isinstance(usage, dict) else None,
            )
            self._audit(request, result, status)
            return result

        raise ExhaustedRetries(
            f"gave up after {self.config.max_retries + 1} attempts: {last_error}"
        )


class CachedBackend:
    """Fingerprint-keyed read-through cache around any backend."""

    def __init__(self, inner: Backend, cache) -> None:  # cache: store.CompletionCache
        self.inner = inner
        self.cache = cache

    def complete(self, request: ChatRequest) -> ChatResponse:
        fingerprint = request_fingerprint(request)
        hit = self.cache.lookup(fingerprint)
        if hit is not None:
            return ChatResponse(text=hit, latency_ms=0.0)
        response = self.inner.complete(request)
        if response.finish_reason != "error" and not response.flagged:
            self.cache.put(fingerprint, response.text)
        return response


def user_request(
    prompt: str,
    *,
    temperature: float = 0.0,
    max_tokens: int = 512,
    seed: int | None = None,
    tags: Mapping[str, str] | None = None,
) -> ChatRequest:
    """Single user-turn request, the shape every pipeline stage uses."""
    return ChatRequest(
        messages=(ChatMessage("user", prompt),),
        temperature=temperature,
        max_tokens=max_tokens,
        seed=seed,
        tags=tags or {},
    )
