"""Small text helpers: canonical labels and word tokens."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")
_EDGE_PUNCT = re.compile(r"^[^\w]+|[^\w]+$")

STOPWORDS = frozenset(
    """
    a an and are as at be been but by did do does for from had has have he her
    him his i if in into is it its me my of on or our she so than that the their
    them then there these they this those to up was we were what when where which
    who will with you your about after before during over under again also just
    went go goes going got get gets made make makes
    """.split()
)


def canonical(text: str) -> str:
    """Case-fold and collapse whitespace; the identity used for labels and abstractions."""
    return _WS.sub(" ", text).strip().casefold()


def words(text: str) -> list[str]:
    """Whitespace tokens with surrounding punctuation stripped, empty tokens dropped."""
    out = []
    for raw in text.split():
        tok = _EDGE_PUNCT.sub("", raw)
        if tok:
            out.append(tok)
    return out


def strip_possessive(token: str) -> str:
    for suffix in ("'s", "’s"):
        if token.lower().endswith(suffix):
            return token[: -len(suffix)]
    return token


def content_tokens(text: str) -> list[str]:
    """Case-folded word tokens minus stopwords, possessives removed."""
    toks = (strip_possessive(w).casefold() for w in words(text))
    return [t for t in toks if t and t not in STOPWORDS]


def whitespace_token_count(text: str) -> int:
    return len(text.split())
