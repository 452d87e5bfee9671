"""Backend contracts: fingerprints, mock determinism, retry policy, cache."""

from __future__ import annotations

import pytest

from dyadmem.backend import (
    BackendConfig,
    CachedBackend,
    ChatMessage,
    ChatRequest,
    ExhaustedRetries,
    HttpBackend,
    InvalidRequest,
    MockBackend,
    MockRule,
    TokenBucket,
    request_fingerprint,
    user_request,
)
from dyadmem.store import Store


def _req(text="hello", **kw):
    return user_request(text, **kw)


def test_fingerprint_identity_and_sensitivity():
    assert request_fingerprint(_req()) == request_fingerprint(_req())
    assert request_fingerprint(_req("a")) != request_fingerprint(_req("b"))
    assert request_fingerprint(_req(temperature=0.0)) != request_fingerprint(
        _req(temperature=0.7)
    )
    assert request_fingerprint(_req(seed=1)) != request_fingerprint(_req(seed=2))

    two = ChatRequest(messages=(ChatMessage("user", "a"), ChatMessage("user", "b")))
    swapped = ChatRequest(messages=(ChatMessage("user", "b"), ChatMessage("user", "a")))
    assert request_fingerprint(two) != request_fingerprint(swapped)


def test_fingerprint_ignores_tags():
    assert request_fingerprint(_req(tags={"template_id": "x"})) == request_fingerprint(
        _req(tags={"template_id": "y"})
    )


def test_fingerprint_is_long_and_stable():
    # Frozen value guards cross-run and cross-machine stability.
    fp = request_fingerprint(_req("pin this value"))
    assert len(fp) == 64
    assert fp == "52d406c7488a94b3b90c27399619ed832167ed748d5e65ba73ed19b91911222f"


def test_request_validation():
    with pytest.raises(InvalidRequest):
        ChatRequest(messages=())
    with pytest.raises(InvalidRequest):
        user_request("x", max_tokens=0)
    with pytest.raises(InvalidRequest):
        user_request("x", temperature=-1.0)
    with pytest.raises(InvalidRequest):
        ChatRequest(messages=(ChatMessage("robot", "x"),))


def test_mock_rules_and_fallback():
    mock = MockBackend(
        [
            MockRule(respond="Hello", contains="greet"),
            MockRule(respond=lambda req: req.text().upper(), template_id="shout"),
        ]
    )
    assert mock.complete(_req("please greet me")).text == "Hello"
    shouted = mock.complete(_req("keep it down", tags={"template_id": "shout"}))
    assert shouted.text == "KEEP IT DOWN"
    fallback = mock.complete(_req("nothing matches"))
    assert fallback.flagged
    assert fallback.text == "Everyday Language"


def test_mock_is_referentially_transparent():
    mock = MockBackend([MockRule(respond="Hi", contains="greet")])
    a = mock.complete(_req("greet"))
    b = mock.complete(_req("greet"))
    assert a.text == b.text and not a.flagged


def _fake_transport(script):
    """Yields scripted (status, body, raw) tuples per attempt."""
    state = {"i": 0}

    def transport(url, payload, headers, timeout):
        status = script[min(state["i"], len(script) - 1)]
        state["i"] += 1
        if status == 200:
            body = {"choices": [{"message": {"content": "ok"}, "finish_reason": "stop"}]}
            return 200, body, "ok"
        return status, None, f"err {status}"

    return transport


def _http(script, max_retries=3, monkeypatch=None):
    cfg = BackendConfig(max_retries=max_retries, backoff_base_s=0.0, api_key_env="TEST_KEY")
    return HttpBackend(cfg, transport=_fake_transport(script), sleep=lambda s: None)


def test_retry_two_429s_then_success(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    backend = _http([429, 429, 200])
    response = backend.complete(_req())
    assert response.text == "ok"
    assert backend.attempts == [429, 429, 200]


def test_retries_exhausted(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    backend = _http([429, 429, 429, 429, 429], max_retries=2)
    with pytest.raises(ExhaustedRetries):
        backend.complete(_req())
    assert len(backend.attempts) == 3  # never more than max_retries + 1


def test_invalid_request_never_retried(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "k")
    backend = _http([400, 200])
    with pytest.raises(InvalidRequest):
        backend.complete(_req())
    assert backend.attempts == [400]


def test_missing_api_key():
    backend = HttpBackend(
        BackendConfig(api_key_env="DEFINITELY_UNSET_VAR"), transport=_fake_transport([200])
    )
    with pytest.raises(InvalidRequest):
        backend.complete(_req())


def test_cached_backend_round_trip(tmp_path):
    store = Store(tmp_path)
    inner = MockBackend([MockRule(respond="expensive answer", contains="q")])
    cached = CachedBackend(inner, store)
    first = cached.complete(_req("q1"))
    second = cached.complete(_req("q1"))
    assert first.text == second.text == "expensive answer"
    assert len(inner.calls) == 1  # second served from cache

    # bit-identical across a fresh store handle reading the same files
    reread = CachedBackend(MockBackend(), Store(tmp_path))
    assert reread.complete(_req("q1")).text == "expensive answer"


def test_cache_immutability(tmp_path):
    store = Store(tmp_path)
    assert store.cache_put("fp1", "first") is True
    assert store.cache_put("fp1", "second") is False
    assert store.cache_lookup("fp1") == "first"
    assert store.cache_lookup("unknown") is None


def test_audit_log_records_exchanges(tmp_path, monkeypatch):
    import json

    monkeypatch.setenv("TEST_KEY", "super-secret-raw-key")
    audit = tmp_path / "audit.jsonl"
    cfg = BackendConfig(
        max_retries=0, api_key_env="TEST_KEY", audit_log_path=str(audit)
    )
    backend = HttpBackend(cfg, transport=_fake_transport([200]), sleep=lambda s: None)
    backend.complete(_req("audit me"))
    records = [json.loads(line) for line in audit.read_text().splitlines()]
    assert len(records) == 1
    assert records[0]["text"] == "ok"
    assert records[0]["status"] == 200
    assert records[0]["fingerprint"] == request_fingerprint(_req("audit me"))
    assert "super-secret-raw-key" not in audit.read_text()  # key never serialized


def test_token_bucket_burst_then_refill():
    now = {"t": 0.0}
    bucket = TokenBucket(burst=2, refill_per_s=1.0, clock=lambda: now["t"])
    assert bucket.acquire(block=False)
    assert bucket.acquire(block=False)
    assert not bucket.acquire(block=False)
    now["t"] += 1.0
    assert bucket.acquire(block=False)
