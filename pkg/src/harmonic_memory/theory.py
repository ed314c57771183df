"""Special-case configurations of the engine and the experiments that check them.

Each ``configure_*`` function builds a store plus retrieval settings under
which the engine should reproduce a classical retriever: flat top-k RAG,
an entity graph with similarity edges, or one with explicit edges. The
strictness witness and the comparison-count experiment measure what the
two-key layout adds.
"""

from __future__ import annotations

import random
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from .embedding import Embedder, GaussianEmbedder, VectorIndex
from .errors import ValidationError
from .retrieval import (
    RetrievalConfig,
    RetrievalResult,
    ScriptedPolicy,
    policy_retrieve,
    semantic_retrieve,
)
from .store import MemoryEntry, MemoryStore
from .text import canonical

SeedSelector = Callable[[str], Iterable[str]]


@dataclass
class Configured:
    """A store and settings that make the engine act as some simpler retriever."""

    store: MemoryStore
    cfg: RetrievalConfig
    script: list[str]

    def retrieve(self, query: str) -> RetrievalResult:
        return policy_retrieve(query, ScriptedPolicy(self.script), self.store, self.cfg)


def configure_flat_rag(chunks: Sequence[str], k: int, embedder: Embedder | None = None) -> Configured:
    """One cue-less entry per chunk, retrieved by abstraction top-k alone.

    Chunks must be distinct after canonicalization; two equal chunks would
    share one abstraction key and come back together.
    """
    if not chunks:
        raise ValidationError("flat RAG needs at least one chunk")
    if k < 1:
        raise ValidationError("k must be >= 1")
    keys = [canonical(c) for c in chunks]
    if len(set(keys)) != len(keys):
        raise ValidationError("chunks must be distinct after canonicalization")
    store = MemoryStore(embedder=embedder or GaussianEmbedder())
    for chunk in chunks:
        store.put_entry(MemoryEntry(abstraction=chunk, value=chunk))
    cfg = RetrievalConfig(k_abstraction=k, k_cue=0, mode="union", delta_adj=None, budget=2, max_steps=2)
    return Configured(store, cfg, ["expand-all", "stop"])


def _entity_store(items: Sequence[tuple[str, str]], embedder: Embedder | None) -> MemoryStore:
    if not items:
        raise ValidationError("need at least one item")
    store = MemoryStore(embedder=embedder or GaussianEmbedder())
    for text, entity in items:
        if not canonical(entity):
            raise ValidationError(f"item {text!r} has an empty entity")
        entry_id = store.put_entry(MemoryEntry(abstraction=text, value=text))
        store.link_cue(entry_id, entity)
    return store


def _graph_cfg(L: int, seed_selector: SeedSelector, **kw) -> RetrievalConfig:
    if L < 0:
        raise ValidationError("L must be >= 0")
    # L+1 expansions then a stop: the first admits the seeds, each further one adds a hop
    return RetrievalConfig(
        k_abstraction=0, k_cue=0, cue_selector=seed_selector, hops=L,
        budget=L + 2, max_steps=L + 2, **kw,
    )


def configure_implicit_kg(
    items: Sequence[tuple[str, str]],
    delta: float,
    L: int,
    seed_selector: SeedSelector,
    embedder: Embedder | None = None,
) -> Configured:
    """Each item gets exactly one cue, its entity; entities within ``delta`` are adjacent."""
    store = _entity_store(items, embedder)
    cfg = _graph_cfg(L, seed_selector, delta_adj=delta, edge_kinds={"shared-cue", "similar-cue"})
    return Configured(store, cfg, ["expand-all"] * (L + 1) + ["stop"])


def configure_explicit_kg(
    items: Sequence[tuple[str, str]],
    edges: Iterable[tuple[str, str]],
    L: int,
    seed_selector: SeedSelector,
    embedder: Embedder | None = None,
) -> Configured:
    """Like the implicit graph, but adjacency is only the given directed entity edges."""
    store = _entity_store(items, embedder)
    for src, dst in edges:
        a, b = store.anchor_for_label(src), store.anchor_for_label(dst)
        if a is None or b is None:
            raise ValidationError(f"edge ({src!r}, {dst!r}) names an entity with no item")
        store.add_anchor_edge(a.id, b.id)
    cfg = _graph_cfg(L, seed_selector, delta_adj=None, edge_kinds={"explicit-edge"})
    return Configured(store, cfg, ["expand-all"] * (L + 1) + ["stop"])


# ------------------------------------------------------------- strictness


@dataclass
class StrictnessInstance:
    store: MemoryStore
    cfg: RetrievalConfig
    query: str
    k: int
    a1: str
    a2: str
    c_star: str
    n1_ids: set[str]
    n2_ids: set[str]
    filler_ids: set[str]

    @property
    def expected(self) -> set[str]:
        return set(self.n1_ids)

    def gated(self) -> set[str]:
        return semantic_retrieve(self.query, self.store, self.cfg).entry_set

    def union(self) -> set[str]:
        return semantic_retrieve(self.query, self.store, self.cfg.replace(mode="union")).entry_set

    def flat_baseline(self) -> set[str]:
        """Plain top-k over every entry's text; returns exactly k ids whenever the store holds k."""
        texts = {eid: f"{e.abstraction} {e.value}" for eid, e in self.store.entries.items()}
        index = VectorIndex(self.store.embedder.dims)
        for eid, text in texts.items():
            index.add(eid, self.store.embedder.embed(text))
        return {eid for eid, _ in index.top_k(self.store.embedder.embed(self.query), self.k)}


def build_strictness_witness(
    n1: int, n2: int, k: int, fillers: int = 2, embedder: Embedder | None = None
) -> StrictnessInstance:
    """Two abstraction buckets sharing one cue, plus fillers with private cues.

    The gated query selects abstraction a1 and the shared cue, so it returns
    exactly the a1 entries carrying that cue. Fillers live in bucket a1 too,
    which is what makes union retrieval strictly larger.
    """
    if not n1 > k >= 1:
        raise ValidationError(f"need n1 > k >= 1, got n1={n1}, k={k}")
    if n2 < 1:
        raise ValidationError("n2 must be >= 1")
    a1, a2, c_star = "alpha topic", "beta topic", "shared anchor"
    store = MemoryStore(embedder=embedder or GaussianEmbedder())
    n1_ids, n2_ids, filler_ids = set(), set(), set()
    for i in range(n1):
        eid = store.put_entry(MemoryEntry(abstraction=a1, value=f"alpha fact {i}"))
        store.link_cue(eid, c_star)
        n1_ids.add(eid)
    for i in range(n2):
        eid = store.put_entry(MemoryEntry(abstraction=a2, value=f"beta fact {i}"))
        store.link_cue(eid, c_star)
        n2_ids.add(eid)
    for i in range(fillers):
        eid = store.put_entry(MemoryEntry(abstraction=a1, value=f"alpha filler {i}"))
        store.link_cue(eid, f"filler cue {i}")
        filler_ids.add(eid)
    cfg = RetrievalConfig(
        k_abstraction=1, k_cue=1, mode="gated", delta_adj=None,
        abstraction_selector=lambda q: [a1], cue_selector=lambda q: [c_star],
    )
    return StrictnessInstance(store, cfg, f"{a1} {c_star}", k, a1, a2, c_star, n1_ids, n2_ids, filler_ids)


# ------------------------------------------------------- comparison counts


@dataclass
class CountRow:
    N: int
    B: int
    m: int
    trials: int
    two_stage: float
    flat: float
    analytic_two_stage: int
    reduction_holds: bool
    consistent: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def build_bucket_corpus(N: int, B: int, m: int, embedder: Embedder | None = None) -> MemoryStore:
    """N entries in N/B abstraction buckets; every entry links all m cues of its bucket."""
    if not (N >= B >= 1 and m >= 1):
        raise ValidationError(f"need N >= B >= 1 and m >= 1, got N={N}, B={B}, m={m}")
    if N % B:
        raise ValidationError(f"N={N} is not a multiple of B={B}")
    store = MemoryStore(embedder=embedder or GaussianEmbedder())
    for j in range(N // B):
        for i in range(B):
            eid = store.put_entry(MemoryEntry(abstraction=f"bucket {j}", value=f"bucket {j} item {i}"))
            for r in range(m):
                store.link_cue(eid, f"bucket {j} cue {r}")
    return store


def comparison_count_experiment(
    N: int, B: int, m: int, trials: int = 5, *, seed: int = 0, embedder: Embedder | None = None
) -> CountRow:
    """Mean similarity evaluations per query: two-key retrieval versus a flat scan of all values.

    Counts are deltas of the indices' own comparison counters, compared with
    the analytic N/B + m*N/B.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    store = build_bucket_corpus(N, B, m, embedder)
    flat = VectorIndex(store.embedder.dims)
    for eid, e in store.entries.items():
        flat.add(eid, store.embedder.embed(e.value))
    cfg = RetrievalConfig(k_abstraction=1, k_cue=m, delta_adj=None)
    rng = random.Random(seed)
    two_total = flat_total = 0
    for _ in range(trials):
        query = f"bucket {rng.randrange(N // B)} item {rng.randrange(B)}"
        before = store.abstraction_index.comparisons + store.cue_index.comparisons
        semantic_retrieve(query, store, cfg)
        two_total += store.abstraction_index.comparisons + store.cue_index.comparisons - before
        before = flat.comparisons
        flat.top_k(store.embedder.embed(query), 1)
        flat_total += flat.comparisons - before
    analytic = N // B + m * N // B
    two_stage, flat_mean = two_total / trials, flat_total / trials
    return CountRow(
        N=N, B=B, m=m, trials=trials,
        two_stage=two_stage, flat=flat_mean, analytic_two_stage=analytic,
        reduction_holds=two_stage < flat_mean,
        consistent=two_stage == analytic and flat_mean == N,
    )


def count_grid(
    Ns: Iterable[int] = (100, 1000), Bs: Iterable[int] = (2, 5, 10, 50), ms: Iterable[int] = (1, 2, 4), trials: int = 3
) -> list[CountRow]:
    return [comparison_count_experiment(N, B, m, trials) for N in Ns for B in Bs for m in ms]


def format_count_table(rows: Sequence[CountRow]) -> str:
    head = f"{'N':>6} {'B':>4} {'m':>3} {'two_stage':>10} {'flat':>7} {'reduces':>8} {'B>m+1':>6}"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r.N:>6} {r.B:>4} {r.m:>3} {r.two_stage:>10g} {r.flat:>7g} "
            f"{str(r.reduction_holds):>8} {str(r.B > r.m + 1):>6}"
        )
    return "\n".join(lines)


# ------------------------------------------------------------------ suite

SUITES = ("rag", "kg", "strictness", "efficiency")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed, "detail": self.detail}


def run_suite(suite: str, seed: int = 0, instances: int = 10) -> list[Check]:
    """One check per instance of the named suite; the test suite runs larger versions."""
    from . import oracles

    rng = random.Random(seed)
    checks: list[Check] = []
    if suite == "rag":
        for i in range(instances):
            chunks, query, k = oracles.random_flat_instance(rng)
            conf = configure_flat_rag(chunks, k)
            got = conf.retrieve(query).entry_set
            want = oracles.flat_topk_oracle(conf.store, chunks, query, k)
            checks.append(Check(suite, f"flat-{i}", got == want, {"chunks": len(chunks), "k": k}))
    elif suite == "kg":
        for i in range(instances):
            items, delta, seeds = oracles.random_kg_instance(rng)
            for L in range(4):
                conf = configure_implicit_kg(items, delta, L, lambda q, s=seeds: s)
                got = conf.retrieve("seed").entry_set
                want = oracles.implicit_kg_oracle(conf.store, items, delta, seeds, L)
                checks.append(Check(suite, f"implicit-{i}-L{L}", got == want, {"size": len(got)}))
            items, edges, seeds = oracles.random_edge_instance(rng)
            conf = configure_explicit_kg(items, edges, 2, lambda q, s=seeds: s)
            got = conf.retrieve("seed").entry_set
            want = oracles.explicit_kg_oracle(items, edges, seeds, 2, conf.store)
            checks.append(Check(suite, f"explicit-{i}-L2", got == want, {"size": len(got)}))
    elif suite == "strictness":
        for n1, n2, k in [(2, 1, 1), (4, 3, 2), (6, 2, 5), (10, 4, 3)]:
            w = build_strictness_witness(n1, n2, k)
            gated, union, flat = w.gated(), w.union(), w.flat_baseline()
            ok = gated == w.expected and len(flat) == k and gated < union
            detail = {"gated": len(gated), "k": k, "union": len(union)}
            checks.append(Check(suite, f"n1={n1},n2={n2},k={k}", ok, detail))
    elif suite == "efficiency":
        for r in count_grid(trials=1):
            ok = r.consistent and r.reduction_holds == (r.B > r.m + 1)
            checks.append(Check(suite, f"N={r.N},B={r.B},m={r.m}", ok, r.to_dict()))
    else:
        raise ValidationError(f"unknown suite {suite!r}; expected one of {SUITES}")
    return checks
