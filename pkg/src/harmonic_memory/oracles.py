"""Brute-force reference answers and random instances for the special-case checks.

These deliberately avoid the store's indices: similarities come straight
from the embedder and graphs are explored with a plain BFS.
"""

from __future__ import annotations

import random
from collections import deque
from collections.abc import Iterable, Sequence

import numpy as np

from .store import MemoryStore
from .text import canonical

_WORDS = (
    "river stone garden lamp violin harbor cedar ember meadow signal orbit canvas "
    "lantern falcon velvet summit quartz willow beacon pepper marble thunder"
).split()


def _ids_by_text(store: MemoryStore) -> dict[str, str]:
    return {canonical(e.value): eid for eid, e in store.entries.items()}


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def random_flat_instance(rng: random.Random, max_chunks: int = 200) -> tuple[list[str], str, int]:
    n = rng.randint(1, max_chunks)
    chunks: list[str] = []
    seen: set[str] = set()
    while len(chunks) < n:
        text = " ".join(rng.choices(_WORDS, k=rng.randint(2, 6))) + f" {len(chunks)}"
        if text not in seen:
            seen.add(text)
            chunks.append(text)
    query = " ".join(rng.choices(_WORDS, k=3))
    return chunks, query, rng.choice((1, 3, 5))


def flat_topk_oracle(store: MemoryStore, chunks: Sequence[str], query: str, k: int) -> set[str]:
    emb = store.embedder
    q = _unit(emb.embed(query))
    scored = sorted(
        ((float(_unit(emb.embed(c)) @ q), canonical(c)) for c in chunks), key=lambda sc: (-sc[0], sc[1])
    )
    by_text = _ids_by_text(store)
    return {by_text[text] for _, text in scored[:k]}


def random_kg_instance(
    rng: random.Random, n_items: int = 25, n_entities: int = 10
) -> tuple[list[tuple[str, str]], float, list[str]]:
    entities = [f"entity {w} {i}" for i, w in enumerate(rng.sample(_WORDS, n_entities))]
    items = [(f"item {i} about {rng.choice(_WORDS)}", rng.choice(entities)) for i in range(n_items)]
    delta = rng.uniform(0.05, 0.3)
    used = sorted({e for _, e in items})
    seeds = rng.sample(used, rng.randint(1, min(2, len(used))))
    return items, delta, seeds


def _bfs(start: Iterable[int], adj: dict[int, set[int]], L: int) -> set[int]:
    seen = set(start)
    queue = deque((s, 0) for s in seen)
    while queue:
        node, depth = queue.popleft()
        if depth == L:
            continue
        for nxt in adj.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, depth + 1))
    return seen


def implicit_kg_oracle(
    store: MemoryStore, items: Sequence[tuple[str, str]], delta: float, seeds: Iterable[str], L: int
) -> set[str]:
    """Items adjacent when their entity embeddings have cosine >= delta; BFS from the seed entities' items."""
    emb = store.embedder
    vecs = np.stack([_unit(emb.embed(e)) for _, e in items])
    sims = vecs @ vecs.T
    n = len(items)
    adj = {i: {j for j in range(n) if j != i and sims[i, j] >= delta} for i in range(n)}
    seed_set = {canonical(s) for s in seeds}
    start = [i for i, (_, e) in enumerate(items) if canonical(e) in seed_set]
    by_text = _ids_by_text(store)
    return {by_text[canonical(items[i][0])] for i in _bfs(start, adj, L)}


def random_edge_instance(
    rng: random.Random, n_items: int = 20, n_entities: int = 8
) -> tuple[list[tuple[str, str]], list[tuple[str, str]], list[str]]:
    entities = [f"node {i}" for i in range(n_entities)]
    items = [(f"fact {i} on {rng.choice(_WORDS)}", rng.choice(entities)) for i in range(n_items)]
    used = sorted({e for _, e in items}, key=lambda e: int(e.split()[1]))
    # edges only run from lower to higher node numbers, so the graph is a DAG
    edges = [(a, b) for i, a in enumerate(used) for b in used[i + 1:] if rng.random() < 0.3]
    seeds = [used[0]]
    return items, edges, seeds


def explicit_kg_oracle(
    items: Sequence[tuple[str, str]],
    edges: Iterable[tuple[str, str]],
    seeds: Iterable[str],
    L: int,
    store: MemoryStore,
) -> set[str]:
    adj: dict[str, set[str]] = {}
    for a, b in edges:
        adj.setdefault(canonical(a), set()).add(canonical(b))
    names = sorted({canonical(e) for _, e in items})
    index = {name: i for i, name in enumerate(names)}
    int_adj = {index[a]: {index[b] for b in bs} for a, bs in adj.items()}
    reached = {names[i] for i in _bfs([index[canonical(s)] for s in seeds], int_adj, L)}
    by_text = _ids_by_text(store)
    return {by_text[canonical(t)] for t, e in items if canonical(e) in reached}
