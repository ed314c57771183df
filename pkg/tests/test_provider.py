from __future__ import annotations

import json

import httpx
import pytest
from conftest import make_provider

from harmonic_memory.errors import ConfigError, ProviderError
from harmonic_memory.provider import (
    TEMPLATE_NAMES,
    ChatProvider,
    HttpChatTransport,
    PromptLibrary,
    ProviderRequest,
)


def test_canned_reply_returned():
    provider, transport = make_provider(["hello"])
    assert provider.complete("hi") == "hello"
    assert transport.requests[0].seed == 42


def test_two_failures_then_success():
    provider, _ = make_provider(["ok"], fail_first=2)
    assert provider.complete("hi") == "ok"
    assert provider.calls == 3


def test_three_failures_raise():
    provider, _ = make_provider(["never"], fail_first=3)
    with pytest.raises(ProviderError):
        provider.complete("hi")
    assert provider.calls == 3


def test_backoff_schedule():
    sleeps: list[float] = []
    provider, _ = make_provider(["ok"], fail_first=2)
    provider.sleep = sleeps.append
    provider.complete("x")
    assert sleeps == [0.5, 1.0]


def _http(handler) -> ChatProvider:
    chat = HttpChatTransport("http://llm.test/v1/chat", api_key="secret", transport=httpx.MockTransport(handler))
    return ChatProvider(chat, sleep=lambda s: None)


def test_wire_body_carries_seed_and_key():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "pong"}}]})

    assert _http(handler).complete("ping") == "pong"
    assert seen["body"]["seed"] == 42
    assert seen["body"]["messages"] == [{"role": "user", "content": "ping"}]
    assert seen["auth"] == "Bearer secret"


def test_http_5xx_is_retried_then_fails():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    with pytest.raises(ProviderError):
        _http(handler).complete("x")
    assert len(calls) == 3


def test_http_4xx_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="nope")

    with pytest.raises(ProviderError):
        _http(handler).complete("x")
    assert len(calls) == 1


def test_malformed_body():
    with pytest.raises(ProviderError):
        _http(lambda r: httpx.Response(200, json={"oops": 1})).complete("x")


def test_prompt_library_renders_placeholders_only():
    lib = PromptLibrary()
    assert set(lib.templates) == set(TEMPLATE_NAMES)
    text = lib.render("factual", content="CONTENT-XYZ", timestamp="2023-05-01")
    assert "CONTENT-XYZ" in text and "{content}" not in text
    seg = lib.render("segmentation", messages="[1] hi")
    assert '"episodes"' in seg


def test_prompt_override_dir(tmp_path):
    (tmp_path / "episodic.txt").write_text("custom {content}", encoding="utf-8")
    assert PromptLibrary(tmp_path).render("episodic", content="x") == "custom x"
    with pytest.raises(ConfigError):
        PromptLibrary(tmp_path / "missing")
    with pytest.raises(ConfigError):
        PromptLibrary().render("nope")


def test_request_needs_messages():
    from harmonic_memory.errors import ValidationError

    with pytest.raises(ValidationError):
        ProviderRequest(model="m", messages=[])
