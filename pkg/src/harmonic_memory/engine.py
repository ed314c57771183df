"""Facade shared by the CLI and the HTTP service."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import httpx

from .config import EngineConfig
from .embedding import Embedder, HashEmbedder, HttpEmbedder
from .errors import NotFoundError, StoreBusyError, ValidationError
from .ingest import IngestReport, ingest, source_from_markdown
from .provider import ChatProvider, HttpChatTransport, PromptLibrary
from .retrieval import (
    HeuristicPolicy,
    ProviderPolicy,
    RetrievalResult,
    entry_summary,
    policy_retrieve,
    semantic_retrieve,
)
from .store import DocumentSource, MemoryStore, SourceKind, Unit

logger = logging.getLogger(__name__)

QUERY_MODES = ("semantic", "policy")


def build_embedder(cfg: EngineConfig, transport: httpx.BaseTransport | None = None) -> Embedder:
    spec = cfg.embedder
    if spec.type == "test":
        return HashEmbedder(spec.dims)
    return HttpEmbedder(spec.endpoint, spec.model, spec.dims, transport=transport, api_key=cfg.provider.api_key)


def build_provider(cfg: EngineConfig, transport: httpx.BaseTransport | None = None) -> ChatProvider | None:
    spec = cfg.provider
    if spec.type == "none":
        return None
    chat = HttpChatTransport(spec.endpoint, api_key=spec.api_key, timeout=spec.timeout, transport=transport)
    return ChatProvider(
        chat,
        model=spec.model,
        seed=spec.seed,
        temperature=spec.temperature,
        prompts=PromptLibrary(spec.prompts_dir),
    )


def source_from_dict(data: Any, default_id: str = "source") -> DocumentSource:
    """Build a source from ``{"id", "kind", "units": [text | {text, label, timestamp}]}``."""
    if not isinstance(data, dict) or not isinstance(data.get("units"), list):
        raise ValidationError("source must be an object with a 'units' list")
    units = []
    for i, raw in enumerate(data["units"], start=1):
        if isinstance(raw, str):
            units.append(Unit(ordinal=i, text=raw))
        elif isinstance(raw, dict) and isinstance(raw.get("text"), str):
            units.append(Unit(ordinal=i, text=raw["text"], label=raw.get("label"), timestamp=raw.get("timestamp")))
        else:
            raise ValidationError(f"unit {i} must be a string or an object with 'text'")
    try:
        kind = SourceKind(data.get("kind", SourceKind.CONVERSATION.value))
    except ValueError:
        raise ValidationError(f"unknown source kind {data.get('kind')!r}") from None
    source = DocumentSource(id=str(data.get("id") or default_id), kind=kind, units=units)
    source.validate()
    return source


def load_source_file(path: str | Path) -> DocumentSource:
    """JSON sources as in ``source_from_dict``; markdown by paragraph; other text one unit per line."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        return source_from_dict(data, default_id=path.stem)
    if path.suffix in (".md", ".markdown"):
        return source_from_markdown(path.stem, text)
    kind = SourceKind.LOG if path.suffix == ".log" else SourceKind.CONVERSATION
    return DocumentSource.from_texts(path.stem, [ln for ln in text.splitlines() if ln.strip()], kind)


def result_to_dict(result: RetrievalResult, store: MemoryStore) -> dict:
    """The wire form of a retrieval result; the CLI and the service both emit exactly this."""
    return {
        "entries": [dict(entry_summary(store, e), score=result.scores[e]) for e in result.entries],
        "episodic_groups": result.episodic_groups,
        "steps_taken": result.steps_taken,
        "budget_spent": result.budget_spent,
        "trace": [t.to_dict() for t in result.trace],
        "flags": list(result.flags),
    }


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


class Engine:
    """One store plus the configured embedder, provider, and retrieval settings.

    Writes and reads both go through the store's lock; a caller that cannot
    get it within ``config.lock_timeout`` seconds gets ``StoreBusyError``.
    """

    def __init__(
        self,
        config: EngineConfig | None = None,
        *,
        chat_transport: httpx.BaseTransport | None = None,
        embed_transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.config = config or EngineConfig()
        self.embedder = build_embedder(self.config, embed_transport)
        self.provider = build_provider(self.config, chat_transport)
        path = self.config.store_path
        if path is not None and Path(path).exists():
            self.store = MemoryStore.load_snapshot(path, embedder=self.embedder)
        else:
            self.store = MemoryStore(embedder=self.embedder)

    @contextmanager
    def _locked(self) -> Iterator[None]:
        if not self.store.lock.acquire(timeout=self.config.lock_timeout):
            raise StoreBusyError(f"store busy for more than {self.config.lock_timeout}s")
        try:
            yield
        finally:
            self.store.lock.release()

    def ingest(self, source: DocumentSource) -> IngestReport:
        with self._locked():
            report = ingest(source, self.store, self.config.ingest, provider=self.provider)
            self.save()
            return report

    def query(self, text: str, mode: str = "semantic", overrides: dict | None = None) -> RetrievalResult:
        if mode not in QUERY_MODES:
            raise ValidationError(f"unknown query mode {mode!r}; expected one of {QUERY_MODES}")
        if not isinstance(text, str):
            raise ValidationError("query text must be a string")
        if overrides is not None and not isinstance(overrides, dict):
            raise ValidationError("overrides must be an object")
        try:
            cfg = self.config.retrieval.replace(**(overrides or {}))
        except TypeError as exc:
            raise ValidationError(f"bad retrieval override: {exc}") from exc
        with self._locked():
            if not self.store.entries:
                return RetrievalResult()
            if not text.strip():
                raise ValidationError("query text must be non-empty")
            if mode == "semantic":
                return semantic_retrieve(text, self.store, cfg)
            policy = ProviderPolicy(self.provider, self.store) if self.provider else HeuristicPolicy(self.store, cfg)
            return policy_retrieve(text, policy, self.store, cfg)

    def query_dict(self, text: str, mode: str = "semantic", overrides: dict | None = None) -> dict:
        result = self.query(text, mode, overrides)
        with self._locked():
            return result_to_dict(result, self.store)

    def entry(self, entry_id: str) -> dict:
        with self._locked():
            if entry_id not in self.store.entries:
                raise NotFoundError(f"unknown entry {entry_id!r}")
            summary = entry_summary(self.store, entry_id)
            e = self.store.entries[entry_id]
            summary["cue_ids"] = sorted(e.cue_ids)
            summary["revision"] = e.revision
            summary["episodes"] = [
                {
                    "id": ep,
                    "index_phrase": self.store.episodes[ep].index_phrase,
                    "value": self.store.episodes[ep].value_text,
                    "mode": self.store.episodes[ep].mode.value,
                }
                for ep in sorted(e.episodic_ids)
                if ep in self.store.episodes
            ]
            return summary

    def stats(self) -> dict:
        with self._locked():
            return self.store.stats()

    def export(self, path: str | Path) -> None:
        with self._locked():
            self.store.save_snapshot(path)

    def save(self) -> None:
        if self.config.store_path is not None:
            self.store.save_snapshot(self.config.store_path)
