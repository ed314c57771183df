from __future__ import annotations

import random
from collections import deque

import numpy as np
import pytest

from harmonic_memory.embedding import GaussianEmbedder
from harmonic_memory.errors import ValidationError
from harmonic_memory.text import canonical
from harmonic_memory.theory import (
    SUITES,
    build_bucket_corpus,
    build_strictness_witness,
    comparison_count_experiment,
    configure_explicit_kg,
    configure_flat_rag,
    configure_implicit_kg,
    count_grid,
    format_count_table,
    run_suite,
)

WORDS = "apple bridge cloud delta ember forest glacier harbor island jungle kettle lemon".split()


class TableEmbedder:
    """Fixed vectors for known texts, seeded Gaussian vectors for the rest."""

    def __init__(self, table: dict[str, list[float]]) -> None:
        self.table = {canonical(k): np.asarray(v, float) for k, v in table.items()}
        self.dims = len(next(iter(self.table.values())))
        self._fallback = GaussianEmbedder(self.dims, seed=99)

    def embed(self, text: str) -> np.ndarray:
        v = self.table.get(canonical(text))
        return v / np.linalg.norm(v) if v is not None else self._fallback.embed(text)


def _unit(v):
    return v / np.linalg.norm(v)


def _ids(conf) -> dict[str, str]:
    return {e.value: eid for eid, e in conf.store.entries.items()}


def _bfs(adj: dict[int, set[int]], start: set[int], hops: int) -> set[int]:
    dist = {s: 0 for s in start}
    q = deque(start)
    while q:
        x = q.popleft()
        if dist[x] < hops:
            for y in adj.get(x, ()):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    q.append(y)
    return set(dist)


# ------------------------------------------------------------------ flat RAG


def _random_chunks(rng: random.Random, n: int) -> list[str]:
    return [" ".join(rng.sample(WORDS, rng.randint(1, 4))) + f" n{i}" for i in range(n)]


@pytest.mark.parametrize("seed", range(50))
def test_flat_rag_equals_direct_topk(seed):
    rng = random.Random(seed)
    chunks = _random_chunks(rng, rng.randint(1, 40))
    k = rng.randint(1, 6)
    query = " ".join(rng.sample(WORDS, 2))
    conf = configure_flat_rag(chunks, k)
    emb = conf.store.embedder
    q = _unit(emb.embed(query))
    ranked = sorted(chunks, key=lambda c: -float(_unit(emb.embed(c)) @ q))
    ids = _ids(conf)
    assert conf.retrieve(query).entry_set == {ids[c] for c in ranked[:k]}


def test_flat_rag_k_covers_everything():
    chunks = ["one fish", "two fish", "red fish"]
    conf = configure_flat_rag(chunks, 10)
    assert conf.retrieve("fish").entry_set == set(conf.store.entries)


def test_flat_rag_exact_query_ranks_first():
    chunks = _random_chunks(random.Random(1), 20)
    conf = configure_flat_rag(chunks, 3)
    res = conf.retrieve(chunks[7])
    assert res.entries[0] == _ids(conf)[chunks[7]]


def test_flat_rag_entries_are_cueless():
    conf = configure_flat_rag(["a b", "c d"], 1)
    assert all(not e.cue_ids and e.abstraction == e.value for e in conf.store.entries.values())
    with pytest.raises(ValidationError):
        configure_flat_rag(["Same", "same"], 1)


# ------------------------------------------------------------------ implicit KG


def test_implicit_kg_zero_hops_is_seeds():
    items = [("fact one", "ent a"), ("fact two", "ent b"), ("fact three", "ent a")]
    conf = configure_implicit_kg(items, 0.0, 0, lambda q: ["ent a"])
    ids = _ids(conf)
    assert conf.retrieve("q").entry_set == {ids["fact one"], ids["fact three"]}


def test_implicit_kg_three_chain():
    emb = TableEmbedder({"A": [1, 0, 0], "B": [1, 1, 0], "C": [0, 1, 0]})
    items = [("about a", "A"), ("about b", "B"), ("about c", "C")]
    conf = configure_implicit_kg(items, 0.5, 2, lambda q: ["A"], embedder=emb)
    assert conf.retrieve("q").entry_set == set(conf.store.entries)
    one_hop = configure_implicit_kg(items, 0.5, 1, lambda q: ["A"], embedder=emb)
    ids = _ids(one_hop)
    assert one_hop.retrieve("q").entry_set == {ids["about a"], ids["about b"]}


@pytest.mark.parametrize("seed", range(12))
@pytest.mark.parametrize("L", [0, 1, 2, 3])
def test_implicit_kg_equals_similarity_bfs(seed, L):
    rng = random.Random(seed)
    entities = [f"ent {w}" for w in rng.sample(WORDS, 8)]
    items = [(f"item {i}", rng.choice(entities)) for i in range(25)]
    delta = rng.uniform(0.1, 0.4)
    seeds = [items[0][1]]
    emb = GaussianEmbedder(dims=6, seed=seed)
    conf = configure_implicit_kg(items, delta, L, lambda q: seeds, embedder=emb)

    vecs = np.stack([_unit(emb.embed(e)) for _, e in items])
    sims = vecs @ vecs.T
    adj = {i: {j for j in range(25) if j != i and sims[i, j] >= delta} for i in range(25)}
    start = {i for i, (_, e) in enumerate(items) if e == seeds[0]}
    ids = _ids(conf)
    want = {ids[items[i][0]] for i in _bfs(adj, start, L)}
    assert conf.retrieve("q").entry_set == want


# ------------------------------------------------------------------ explicit KG


def test_explicit_kg_no_edges_is_seeds():
    items = [("x1", "hub"), ("x2", "leaf")]
    conf = configure_explicit_kg(items, [], 5, lambda q: ["hub"])
    assert conf.retrieve("q").entry_set == {_ids(conf)["x1"]}


def test_explicit_kg_star():
    items = [("center fact", "hub")] + [(f"leaf fact {i}", f"leaf {i}") for i in range(4)]
    edges = [("hub", f"leaf {i}") for i in range(4)]
    conf = configure_explicit_kg(items, edges, 1, lambda q: ["hub"])
    assert conf.retrieve("q").entry_set == set(conf.store.entries)


def test_explicit_kg_dangling_edge():
    with pytest.raises(ValidationError):
        configure_explicit_kg([("x", "a")], [("a", "zzz")], 1, lambda q: ["a"])


@pytest.mark.parametrize("seed", range(15))
def test_explicit_kg_equals_edge_bfs(seed):
    rng = random.Random(seed)
    nodes = [f"node {i}" for i in range(8)]
    items = [(f"fact {i}", rng.choice(nodes)) for i in range(20)]
    used = sorted({e for _, e in items}, key=lambda s: int(s.split()[1]))
    edges = [(a, b) for i, a in enumerate(used) for b in used[i + 1 :] if rng.random() < 0.3]
    conf = configure_explicit_kg(items, edges, 2, lambda q: [used[0]])

    adj: dict[int, set[int]] = {}
    for a, b in edges:
        adj.setdefault(int(a.split()[1]), set()).add(int(b.split()[1]))
    reached = _bfs(adj, {int(used[0].split()[1])}, 2)
    ids = _ids(conf)
    want = {ids[t] for t, e in items if int(e.split()[1]) in reached}
    assert conf.retrieve("q").entry_set == want


# ------------------------------------------------------------------ strictness


def test_strictness_n1_4_n2_3_k_2():
    w = build_strictness_witness(4, 3, 2)
    gated = w.gated()
    assert gated == w.n1_ids and len(gated) == 4 > w.k
    assert len(w.flat_baseline()) == 2
    assert gated != w.flat_baseline()


def test_strictness_smallest_witness():
    w = build_strictness_witness(2, 1, 1)
    assert w.gated() == w.n1_ids and len(w.n1_ids) == 2


def test_gated_strictly_inside_union():
    w = build_strictness_witness(4, 3, 2)
    union = w.union()
    assert union >= w.n1_ids | w.n2_ids
    assert w.gated() < union


@pytest.mark.parametrize("n1, k", [(1, 1), (2, 2), (3, 0)])
def test_strictness_precondition(n1, k):
    with pytest.raises(ValidationError):
        build_strictness_witness(n1, 1, k)


# ------------------------------------------------------------------ counting


def test_counts_reduction_case():
    row = comparison_count_experiment(100, 10, 2, trials=3)
    assert (row.two_stage, row.flat, row.reduction_holds, row.consistent) == (30, 100, True, True)


def test_counts_no_reduction_case():
    row = comparison_count_experiment(100, 2, 2, trials=3)
    assert (row.two_stage, row.flat, row.reduction_holds) == (150, 100, False)


def test_counts_boundary_is_not_a_reduction():
    row = comparison_count_experiment(90, 3, 2, trials=2)
    assert row.two_stage == row.flat == 90 and not row.reduction_holds


def test_bucket_corpus_shape():
    store = build_bucket_corpus(20, 5, 3)
    assert len(store.entries) == 20
    assert len(store.abstraction_index) == 4 and len(store.anchors) == 12
    with pytest.raises(ValidationError):
        build_bucket_corpus(10, 20, 1)


def test_count_grid_matches_closed_form():
    rows = count_grid(Ns=(60,), Bs=(2, 3, 6), ms=(1, 2), trials=1)
    for r in rows:
        assert r.consistent
        assert r.reduction_holds == (r.B > r.m + 1)
    table = format_count_table(rows)
    assert table.splitlines()[0].split()[:3] == ["N", "B", "m"]
    assert len(table.splitlines()) == len(rows) + 1


@pytest.mark.parametrize("suite", SUITES)
def test_builtin_suites_pass(suite):
    checks = run_suite(suite, seed=3, instances=5)
    assert checks and all(c.passed for c in checks), [c for c in checks if not c.passed]
