"""Implicit entry graph: adjacency through cue anchors, and bounded traversal."""

from __future__ import annotations

from collections.abc import Iterable

from ..errors import NotFoundError
from ..store import MemoryStore
from .types import FrontierItem, RetrievalConfig


def neighbors(entry_id: str, store: MemoryStore, cfg: RetrievalConfig) -> list[FrontierItem]:
    """Entries adjacent to ``entry_id``, one item per neighbor with its strongest link.

    Three kinds of link, each switchable through ``cfg.edge_kinds``: a shared
    anchor, an anchor whose label embedding is within ``cfg.delta_adj`` of one
    of ours, and an injected anchor edge. The item score is the link weight
    (1.0, or the cue similarity for similar-cue links).
    """
    entry = store.entries.get(entry_id)
    if entry is None:
        raise NotFoundError(f"unknown entry {entry_id!r}")
    best: dict[str, FrontierItem] = {}

    def offer(anchor_id: str, weight: float, kind: str) -> None:
        for other in store.anchors[anchor_id].entry_ids:
            if other == entry_id:
                continue
            cur = best.get(other)
            if cur is None or weight > cur.score or (weight == cur.score and anchor_id < (cur.via or "")):
                best[other] = FrontierItem(other, weight, kind, anchor_id, entry_id)

    for anchor_id in sorted(entry.cue_ids):
        if "shared-cue" in cfg.edge_kinds:
            offer(anchor_id, 1.0, "shared-cue")
        if "explicit-edge" in cfg.edge_kinds:
            for dst in sorted(store.anchors[anchor_id].edges):
                offer(dst, 1.0, "explicit-edge")
        if "similar-cue" in cfg.edge_kinds and cfg.delta_adj is not None:
            sims = store.cue_index.score_all(store.cue_index.get(anchor_id))
            for other_anchor, sim in sims.items():
                if other_anchor != anchor_id and sim >= cfg.delta_adj:
                    offer(other_anchor, sim, "similar-cue")
    return [best[k] for k in sorted(best)]


def traverse(seeds: Iterable[str], store: MemoryStore, cfg: RetrievalConfig, hops: int | None = None) -> set[str]:
    """Breadth-first closure of ``seeds`` up to ``hops`` (default ``cfg.hops``) links."""
    seeds = set(seeds)
    for s in seeds:
        if s not in store.entries:
            raise NotFoundError(f"unknown entry {s!r}")
    return set(traverse_scored({s: 1.0 for s in seeds}, store, cfg, cfg.hops if hops is None else hops))


def traverse_scored(
    scores: dict[str, float], store: MemoryStore, cfg: RetrievalConfig, hops: int
) -> dict[str, float]:
    """Like ``traverse`` but carrying scores: a reached entry gets
    parent score * hop_decay * link weight, maximized over its parents."""
    out = dict(scores)
    layer = set(scores)
    for _ in range(hops):
        reached: dict[str, float] = {}
        for entry_id in sorted(layer):
            for item in neighbors(entry_id, store, cfg):
                if item.entry_id in out:
                    continue
                score = out[entry_id] * cfg.hop_decay * item.score
                reached[item.entry_id] = max(score, reached.get(item.entry_id, score))
        if not reached:
            break
        out.update(reached)
        layer = set(reached)
    return out
