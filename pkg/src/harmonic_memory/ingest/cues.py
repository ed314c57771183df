"""Cue anchor generation: short "[entity] [aspect]" labels for an entry."""

from __future__ import annotations

import json
import re

from ..provider import ChatProvider
from ..text import STOPWORDS, canonical, strip_possessive, words

MAX_CUES = 3
_LIST_RE = re.compile(r"\[[^\[\]]*\]", re.DOTALL)
_QUOTED = re.compile(r"[\"“]([^\"”]+)[\"”]")


def generate_cue_anchors(
    abstraction: str,
    value: str,
    *,
    provider: ChatProvider | None = None,
    flags: list[str] | None = None,
) -> list[str]:
    """1-3 labels for the entry, none equal to its abstraction after canonicalization.

    Provider failures propagate as ``ProviderError`` so the caller can skip the
    candidate as a whole.
    """
    flags = flags if flags is not None else []
    if provider is None:
        labels = stub_cues(abstraction, value)
    else:
        memories = f'Primary Abstraction: "{abstraction}"\nMemory Value: "{value}"'
        prompt = provider.prompts.render("cue", memories=memories) + provider.prompts.render("cue_response")
        labels = parse_cue_reply(provider.complete(prompt))
    return _finalize(labels, abstraction, flags)


def _finalize(labels: list[str], abstraction: str, flags: list[str]) -> list[str]:
    own = canonical(abstraction)
    out: list[str] = []
    seen: set[str] = set()
    for label in labels:
        key = canonical(label)
        if not key or key == own or key in seen:
            continue
        seen.add(key)
        out.append(" ".join(label.split()))
    if len(out) > MAX_CUES:
        flags.append(f"cues: {len(out)} labels for {abstraction!r}, kept first {MAX_CUES}")
        out = out[:MAX_CUES]
    return out


def parse_cue_reply(reply: str) -> list[str]:
    for block in _LIST_RE.findall(reply):
        try:
            parsed = json.loads(block)
        except json.JSONDecodeError:
            parsed = _QUOTED.findall(block)
        labels = [str(x).strip() for x in parsed if str(x).strip()]
        if labels:
            return labels
    return []


def _entity_and_aspects(abstraction: str) -> tuple[str | None, list[str]]:
    toks = [strip_possessive(w) for w in words(abstraction)]
    toks = [t for t in toks if t]
    if not toks:
        return None, []
    entity_pos = next((i for i, t in enumerate(toks) if t[0].isupper()), 0)
    entity = toks[entity_pos]
    aspects = [
        t for i, t in enumerate(toks)
        if i != entity_pos and t.casefold() not in STOPWORDS and t.casefold() != entity.casefold()
    ]
    return entity, aspects


def _proper_pair(value: str, entity: str) -> str | None:
    """First capitalized, non-sentence-initial token in the value (other than the
    entity), joined with the token after it."""
    sentence_start = True
    toks = value.split()
    for i, raw in enumerate(toks):
        tok = strip_possessive(re.sub(r"^\W+|\W+$", "", raw))
        initial = sentence_start
        sentence_start = raw.endswith((".", "!", "?"))
        if not tok or initial or not tok[0].isupper() or tok.casefold() == entity.casefold():
            continue
        if i + 1 < len(toks):
            nxt = re.sub(r"^\W+|\W+$", "", toks[i + 1])
            if nxt and nxt.casefold() not in STOPWORDS:
                return f"{tok} {nxt}"
    return None


def stub_cues(abstraction: str, value: str) -> list[str]:
    """Deterministic stand-in for the cue prompt.

    Candidates, in order: entity + first aspect of the abstraction; entity +
    first two aspects; a proper-noun pair from the value. When all of those
    are unusable, entity + first content word of the value.
    """
    entity, aspects = _entity_and_aspects(abstraction)
    if entity is None:
        return []
    labels = []
    if aspects:
        labels.append(f"{entity} {aspects[0]}")
    if len(aspects) >= 2:
        labels.append(f"{entity} {aspects[0]} {aspects[1]}")
    pair = _proper_pair(value, entity)
    if pair:
        labels.append(pair)
    own = canonical(abstraction)
    if not any(canonical(label) != own for label in labels):
        for tok in words(value):
            tok = strip_possessive(tok)
            if tok and tok.casefold() not in STOPWORDS and tok.casefold() != entity.casefold():
                labels.append(f"{entity} {tok}")
                break
    return labels
