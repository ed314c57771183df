"""Chat-completion provider client and prompt template assets."""

from __future__ import annotations

import logging
import os
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import httpx

from .errors import ConfigError, ProviderError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 42
MAX_ATTEMPTS = 3
BACKOFF_SECONDS = (0.5, 1.0)

TEMPLATE_NAMES = (
    "segmentation",
    "episodic",
    "factual",
    "update",
    "update_response",
    "cue",
    "cue_response",
    "policy",
    "groundedness",
)


class TransientProviderError(ProviderError):
    """A failure worth retrying (network error, HTTP 429, HTTP 5xx)."""


@dataclass
class ProviderRequest:
    model: str
    messages: list[tuple[str, str]]
    seed: int = DEFAULT_SEED
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValidationError("a provider request needs at least one message")

    def to_wire(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
            "seed": self.seed,
            "temperature": self.temperature,
        }


@dataclass
class ProviderResponse:
    text: str
    usage: dict[str, int] = field(default_factory=dict)


Transport = Callable[[ProviderRequest], ProviderResponse]


class HttpChatTransport:
    """POSTs an OpenAI-compatible chat-completions body."""

    def __init__(
        self,
        endpoint: str,
        *,
        api_key: str | None = None,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self._api_key = api_key if api_key is not None else os.environ.get("MEMORA_PROVIDER_KEY")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def __call__(self, request: ProviderRequest) -> ProviderResponse:
        headers = {"Authorization": f"Bearer {self._api_key}"} if self._api_key else {}
        try:
            resp = self._client.post(self.endpoint, json=request.to_wire(), headers=headers)
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"provider returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"provider returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        return ProviderResponse(text=text or "", usage=body.get("usage") or {})


class ChatProvider:
    """Single-turn completions with bounded retries."""

    def __init__(
        self,
        transport: Transport,
        *,
        model: str = "gpt-4.1-mini",
        seed: int = DEFAULT_SEED,
        temperature: float = 0.0,
        sleep: Callable[[float], None] = time.sleep,
        prompts: PromptLibrary | None = None,
    ) -> None:
        self.transport = transport
        self.model = model
        self.seed = seed
        self.temperature = temperature
        self.sleep = sleep
        self.prompts = prompts or PromptLibrary()
        self.calls = 0

    def chat_complete(self, request: ProviderRequest) -> ProviderResponse:
        last: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            self.calls += 1
            try:
                return self.transport(request)
            except TransientProviderError as exc:
                last = exc
                logger.warning("provider attempt %d/%d failed: %s", attempt, MAX_ATTEMPTS, exc)
                if attempt < MAX_ATTEMPTS:
                    self.sleep(BACKOFF_SECONDS[min(attempt - 1, len(BACKOFF_SECONDS) - 1)])
        raise ProviderError(f"provider failed after {MAX_ATTEMPTS} attempts: {last}") from last

    def complete(self, prompt: str) -> str:
        request = ProviderRequest(
            model=self.model,
            messages=[("user", prompt)],
            seed=self.seed,
            temperature=self.temperature,
        )
        return self.chat_complete(request).text

    def render_and_complete(self, template: str, **values: str) -> str:
        return self.complete(self.prompts.render(template, **values))


class PromptLibrary:
    """Prompt templates loaded from package assets, optionally overridden from a directory.

    Placeholders are ``{name}`` tokens; only the names passed to ``render`` are
    substituted, so literal braces in a template (JSON examples) survive.
    """

    def __init__(self, override_dir: str | Path | None = None) -> None:
        self.templates: dict[str, str] = {}
        pkg = resources.files("harmonic_memory") / "prompts"
        for name in TEMPLATE_NAMES:
            self.templates[name] = (pkg / f"{name}.txt").read_text(encoding="utf-8")
        if override_dir is not None:
            root = Path(override_dir)
            if not root.is_dir():
                raise ConfigError(f"prompt override directory not found: {root}")
            for path in root.glob("*.txt"):
                self.templates[path.stem] = path.read_text(encoding="utf-8")

    def render(self, name: str, **values: str) -> str:
        try:
            text = self.templates[name]
        except KeyError:
            raise ConfigError(f"unknown prompt template {name!r}") from None
        for key, value in values.items():
            text = text.replace("{" + key + "}", str(value))
        return text
