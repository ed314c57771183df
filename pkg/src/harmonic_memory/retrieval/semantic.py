"""Single-shot retrieval over the abstraction and cue indices."""

from __future__ import annotations

import numpy as np

from ..store import MemoryStore
from ..text import canonical
from .types import FrontierItem, RetrievalConfig, RetrievalResult


def match_keys(
    query_vector: np.ndarray, query: str, store: MemoryStore, cfg: RetrievalConfig
) -> tuple[list[tuple[str, float]], list[tuple[str, float]]]:
    """The matched abstraction keys and anchor ids, each with its score.

    An injected selector bypasses the similarity scan for its side and scores
    every selected key 1.0; labels with nothing stored behind them are ignored.
    """
    if cfg.abstraction_selector is not None:
        keys = {canonical(x) for x in cfg.abstraction_selector(query)}
        a_q = [(k, 1.0) for k in sorted(keys) if k in store.abstraction_members]
    elif cfg.k_abstraction > 0 and len(store.abstraction_index):
        a_q = store.abstraction_index.top_k(query_vector, cfg.k_abstraction)
    else:
        a_q = []

    if cfg.cue_selector is not None:
        ids = {store.label_index.get(canonical(x)) for x in cfg.cue_selector(query)}
        c_q = [(a, 1.0) for a in sorted(i for i in ids if i is not None)]
    elif cfg.k_cue > 0 and len(store.cue_index):
        c_q = store.cue_index.top_k(query_vector, cfg.k_cue)
    else:
        c_q = []
    return a_q, c_q


def semantic_hits(
    query: str, store: MemoryStore, cfg: RetrievalConfig, query_vector: np.ndarray | None = None
) -> dict[str, FrontierItem]:
    """Entries matched by the query, keyed by id, each carrying its best match."""
    if not store.entries:
        return {}
    if query_vector is None:
        query_vector = store.embedder.embed(query)
    a_q, c_q = match_keys(query_vector, query, store, cfg)

    by_abstraction: dict[str, FrontierItem] = {}
    for key, score in a_q:
        for entry_id in store.abstraction_members[key]:
            _keep_best(by_abstraction, FrontierItem(entry_id, score, "abstraction", key))
    by_cue: dict[str, FrontierItem] = {}
    for anchor_id, score in c_q:
        for entry_id in store.anchors[anchor_id].entry_ids:
            _keep_best(by_cue, FrontierItem(entry_id, score, "cue", anchor_id))

    if cfg.mode == "gated":
        ids = by_abstraction.keys() & by_cue.keys()
    else:
        ids = by_abstraction.keys() | by_cue.keys()
    out = {}
    for entry_id in ids:
        options = [m[entry_id] for m in (by_abstraction, by_cue) if entry_id in m]
        out[entry_id] = max(options, key=lambda it: it.score)
    return out


def _keep_best(acc: dict[str, FrontierItem], item: FrontierItem) -> None:
    cur = acc.get(item.entry_id)
    if cur is None or item.score > cur.score or (item.score == cur.score and (item.via or "") < (cur.via or "")):
        acc[item.entry_id] = item


def semantic_retrieve(query: str, store: MemoryStore, cfg: RetrievalConfig | None = None) -> RetrievalResult:
    """Union or gated retrieval; with ``cfg.hops > 0`` the hits are widened by traversal."""
    from .graph import traverse_scored

    cfg = cfg or RetrievalConfig()
    with store.lock:
        hits = {eid: it.score for eid, it in semantic_hits(query, store, cfg).items()}
        if cfg.hops and hits:
            hits = traverse_scored(hits, store, cfg, cfg.hops)
        return build_result(hits, store)


def order_entries(scores: dict[str, float]) -> list[str]:
    return sorted(scores, key=lambda e: (-scores[e], e))


def episodic_groups(entry_ids: list[str], store: MemoryStore) -> dict[str, list[str]]:
    """Group ordered entries under their earliest episode; entries without one are left out."""
    groups: dict[str, list[str]] = {}
    for entry_id in entry_ids:
        episodes = store.entries[entry_id].episodic_ids
        if episodes:
            groups.setdefault(min(episodes), []).append(entry_id)
    return groups


def build_result(scores: dict[str, float], store: MemoryStore, **extra) -> RetrievalResult:
    entries = order_entries(scores)
    return RetrievalResult(
        entries=entries,
        scores={e: scores[e] for e in entries},
        episodic_groups=episodic_groups(entries, store),
        **extra,
    )
