"""Episodic memory per segment: verbatim text or a provider-written summary."""

from __future__ import annotations

import re

from ..provider import ChatProvider, ProviderError
from ..store import EpisodeMode, EpisodicMemory, Segment

_INDEX_RE = re.compile(r"^\W*EpisodicIndex\W*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_VALUE_RE = re.compile(r"^\W*EpisodicValue\W*:\s*(.*)", re.IGNORECASE | re.MULTILINE | re.DOTALL)


def build_episodic(
    segment: Segment,
    mode: EpisodeMode | str = EpisodeMode.RAW,
    *,
    provider: ChatProvider | None = None,
    flags: list[str] | None = None,
) -> EpisodicMemory:
    """Return an unsaved episodic record (empty id) for ``segment``."""
    mode = EpisodeMode(mode)
    flags = flags if flags is not None else []
    if mode is EpisodeMode.EXTRACTED:
        if provider is None:
            flags.append(f"episodic[{segment.id}]: no provider configured, stored raw")
        else:
            try:
                reply = provider.render_and_complete("episodic", content=segment.text)
            except ProviderError as exc:
                flags.append(f"episodic[{segment.id}]: provider failed ({exc}), stored raw")
            else:
                parsed = parse_episodic(reply)
                if parsed is not None:
                    index_phrase, value = parsed
                    return EpisodicMemory(
                        id="", segment_id=segment.id, index_phrase=index_phrase, value_text=value,
                        mode=EpisodeMode.EXTRACTED,
                    )
                flags.append(f"episodic[{segment.id}]: unparseable provider output, stored raw")
    return EpisodicMemory(
        id="",
        segment_id=segment.id,
        index_phrase=segment.topic or " ".join(segment.text.split()[:8]),
        value_text=segment.text,
        mode=EpisodeMode.RAW,
    )


def parse_episodic(reply: str) -> tuple[str, str] | None:
    idx = _INDEX_RE.search(reply)
    val = _VALUE_RE.search(reply)
    if not idx or not val:
        return None
    index_phrase = idx.group(1).strip().strip("[]").strip()
    value = " ".join(val.group(1).split()).strip("[]").strip()
    if not index_phrase or not value:
        return None
    return index_phrase, value
