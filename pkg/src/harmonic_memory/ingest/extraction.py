"""Candidate memory extraction: (abstraction, value) proposals from a segment."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..provider import ChatProvider, ProviderError
from ..store import Segment

_STUB_LINE = re.compile(r"^\s*([^:]+?)\s*:\s*(\S.*?)\s*$")
_TAGGED = re.compile(r"^[\s\-\*\d\.\)#>]*(MemIndex|MemValue)\W*?:\s*\**\s*(.*?)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class CandidateMemory:
    abstraction: str
    value: str
    segment_id: str


def extract_candidates(
    segment: Segment,
    *,
    provider: ChatProvider | None = None,
    flags: list[str] | None = None,
) -> list[CandidateMemory]:
    if provider is None:
        pairs = parse_stub(segment.text)
    else:
        try:
            reply = provider.render_and_complete(
                "factual", content=segment.text, timestamp=segment.timestamp or "unknown"
            )
        except ProviderError as exc:
            if flags is not None:
                flags.append(f"extraction[{segment.id}]: provider failed ({exc})")
            return []
        pairs = parse_mem_pairs(reply)
    return [CandidateMemory(a, v, segment.id) for a, v in pairs]


def parse_stub(text: str) -> list[tuple[str, str]]:
    """One candidate per ``<index>: <value>`` line."""
    out = []
    for line in text.splitlines():
        m = _STUB_LINE.match(line)
        if m:
            out.append((m.group(1), m.group(2)))
    return out


def parse_mem_pairs(reply: str) -> list[tuple[str, str]]:
    """Pair each ``MemIndex:`` line with the ``MemValue:`` that follows it.

    Value lines may wrap; continuation lines are joined until the next tag.
    """
    pairs: list[tuple[str, str]] = []
    index: str | None = None
    value: list[str] | None = None

    def flush() -> None:
        nonlocal value
        if index and value:
            text = " ".join(" ".join(value).split()).strip("*").strip()
            if text:
                pairs.append((index, text))
        value = None

    for line in reply.splitlines():
        m = _TAGGED.match(line)
        if m:
            tag, body = m.group(1).lower(), m.group(2).strip("*").strip()
            if tag == "memindex":
                flush()
                index = body or None
            else:
                flush()
                value = [body] if index else None
        elif value is not None and line.strip():
            value.append(line.strip())
    flush()
    return pairs
