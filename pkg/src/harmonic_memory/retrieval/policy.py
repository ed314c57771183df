"""Policy-guided sequential retrieval over (query, working set, frontier, budget) states."""

from __future__ import annotations

import logging
import math
import random
import re
from collections.abc import Callable, Sequence

import numpy as np

from ..errors import ActionError, NotFoundError
from ..provider import ChatProvider, ProviderError
from ..store import MemoryStore
from ..text import canonical
from .graph import neighbors
from .semantic import build_result, semantic_hits
from .types import (
    Action,
    Expand,
    FrontierItem,
    Refine,
    RetrievalConfig,
    RetrievalResult,
    RetrievalState,
    Stop,
    TraceStep,
    action_kind,
)

logger = logging.getLogger(__name__)

Policy = Callable[[RetrievalState], Action]

_ITEM_SEP = " \u2014 "  # frontier line format: [id] abstraction <dash> value (score)
_REPLY = re.compile(r"^\s*(REFINE|EXPAND|STOP)\b\s*:?\s*(.*)$", re.IGNORECASE)


def init_frontier(query: str, store: MemoryStore, cfg: RetrievalConfig) -> RetrievalState:
    """Empty working set; the semantic hits form the first frontier."""
    qvec = store.embedder.embed(query) if store.entries else np.zeros(store.embedder.dims)
    frontier = semantic_hits(query, store, cfg, qvec) if store.entries else {}
    return RetrievalState(t=0, query=query, query_vector=qvec, working={}, frontier=frontier, budget=cfg.budget)


def relevance(entry_id: str, query_vector: np.ndarray, store: MemoryStore) -> float:
    """Best cosine of the query against the entry's abstraction and cue labels."""
    if not np.any(query_vector):
        return 0.0
    entry = store.entries[entry_id]
    vecs = [store.abstraction_index.get(canonical(entry.abstraction))]
    vecs += [store.cue_index.get(a) for a in entry.cue_ids]
    q = query_vector / np.linalg.norm(query_vector)
    return float(max(np.clip(q @ v / np.linalg.norm(v), -1.0, 1.0) for v in vecs))


def validate_action(state: RetrievalState, action: object, cfg: RetrievalConfig) -> str | None:
    """Why ``action`` cannot be applied to ``state``, or None if it can."""
    if isinstance(action, Stop):
        return None
    if state.budget <= 0:
        return "budget exhausted"
    if isinstance(action, Refine):
        return None if action.new_query.strip() else "refine with empty query"
    if isinstance(action, Expand):
        if not action.selected:
            return "expand with empty selection"
        missing = sorted(action.selected - state.frontier.keys())
        return f"expand ids not in frontier: {missing}" if missing else None
    return f"not an action: {action!r}"


def apply_action(state: RetrievalState, action: Action, store: MemoryStore, cfg: RetrievalConfig) -> RetrievalState:
    """One transition; Stop returns the state unchanged."""
    problem = validate_action(state, action, cfg)
    if problem:
        raise ActionError(problem)
    if isinstance(action, Stop):
        return state
    nxt = state.copy()
    nxt.t += 1
    nxt.budget -= cfg.action_costs[action_kind(action)]

    if isinstance(action, Refine):
        nxt.query = action.new_query
        nxt.query_vector = store.embedder.embed(action.new_query)
        nxt.refinements += 1
        for entry_id, item in semantic_hits(action.new_query, store, cfg, nxt.query_vector).items():
            if entry_id in nxt.working:
                continue
            cur = nxt.frontier.get(entry_id)
            if cur is None or item.score > cur.score:
                nxt.frontier[entry_id] = item
        return nxt

    for entry_id in sorted(action.selected):
        nxt.working[entry_id] = nxt.frontier.pop(entry_id).score
    for entry_id in sorted(action.selected):
        parent_score = nxt.working[entry_id]
        for item in neighbors(entry_id, store, cfg):
            if item.entry_id in nxt.working:
                continue
            score = max(parent_score * cfg.hop_decay * item.score, relevance(item.entry_id, nxt.query_vector, store))
            cur = nxt.frontier.get(item.entry_id)
            if cur is None or score > cur.score:
                nxt.frontier[item.entry_id] = FrontierItem(item.entry_id, score, item.provenance, item.via, item.parent)
    return nxt


def policy_retrieve(
    query: str,
    policy: Policy,
    store: MemoryStore,
    cfg: RetrievalConfig | None = None,
) -> RetrievalResult:
    """Run the policy until it stops, the budget runs out, or ``max_steps`` loop turns pass.

    Every loop turn counts as a step, including the one that ends the run, so a
    scripted [Expand, Stop] run reports two steps. Invalid actions are turned
    into Stop and flagged in the trace.
    """
    cfg = cfg or RetrievalConfig()
    with store.lock:
        state = init_frontier(query, store, cfg)
        trace: list[TraceStep] = []
        actions: list[Action] = []
        flags: list[str] = []
        spent = 0
        steps = 0
        for _ in range(cfg.max_steps):
            steps += 1
            flag = None
            if state.budget <= 0:
                action: Action = Stop("budget exhausted")
            else:
                try:
                    action = policy(state)
                except ProviderError as exc:
                    action = Stop(f"policy failed: {exc}")
                problem = validate_action(state, action, cfg)
                if problem:
                    action = Stop(f"invalid action coerced to stop: {problem}")
            if isinstance(action, Stop):
                flag = action.reason
            cost = cfg.action_costs[action_kind(action)]
            trace.append(
                TraceStep(state.t, state.query, sorted(state.working), sorted(state.frontier),
                          state.budget, action.render(), cost, flag)
            )
            actions.append(action)
            if flag:
                flags.append(f"t={state.t}: {flag}")
            if isinstance(action, Stop):
                break
            state = apply_action(state, action, store, cfg)
            spent += cost
        return build_result(
            state.working, store, steps_taken=steps, budget_spent=spent, trace=trace, actions=actions, flags=flags
        )


class HeuristicPolicy:
    """Deterministic default: expand confident frontier items, refine once on a cold start."""

    def __init__(self, store: MemoryStore, cfg: RetrievalConfig) -> None:
        self.store = store
        self.cfg = cfg

    def __call__(self, state: RetrievalState) -> Action:
        return heuristic_policy(state, self.cfg, self.store)

    def retrieve(self, query: str) -> RetrievalResult:
        return policy_retrieve(query, self, self.store, self.cfg)


def heuristic_policy(state: RetrievalState, cfg: RetrievalConfig, store: MemoryStore | None = None) -> Action:
    confident = [eid for eid, it in state.frontier.items() if it.score >= cfg.theta]
    if confident and state.budget >= cfg.action_costs["expand"]:
        return Expand(confident)
    if state.t == 0 and not state.frontier and state.refinements == 0 and store is not None and store.entries:
        refined = _near_miss_query(state, store)
        if refined and state.budget >= cfg.action_costs["refine"]:
            return Refine(refined)
    return Stop()


def _near_miss_query(state: RetrievalState, store: MemoryStore) -> str | None:
    if not np.any(state.query_vector):
        return None
    best = min(store.entries, key=lambda e: (-relevance(e, state.query_vector, store), e))
    entry = store.entries[best]
    labels = sorted(store.anchors[a].label for a in entry.cue_ids)
    extra = " ".join(labels) if labels else entry.abstraction
    return f"{state.query} {extra}"


class ProviderPolicy:
    """Asks a chat provider for the next action using the policy prompt."""

    def __init__(self, provider: ChatProvider, store: MemoryStore) -> None:
        self.provider = provider
        self.store = store
        self.flags: list[str] = []

    def render(self, state: RetrievalState) -> str:
        def line(entry_id: str, score: float) -> str:
            e = self.store.entries[entry_id]
            return f"[{entry_id}] {e.abstraction}{_ITEM_SEP}{e.value} ({score:.3f})"

        working = "\n".join(line(e, s) for e, s in sorted(state.working.items())) or "(empty)"
        frontier = "\n".join(line(e, it.score) for e, it in sorted(state.frontier.items())) or "(empty)"
        return self.provider.prompts.render(
            "policy", query=state.query, budget=str(state.budget), working_set=working, frontier=frontier
        )

    def __call__(self, state: RetrievalState) -> Action:
        reply = self.provider.complete(self.render(state))
        action = parse_policy_reply(reply, state)
        if isinstance(action, Stop) and action.reason:
            self.flags.append(action.reason)
        return action


def parse_policy_reply(reply: str, state: RetrievalState) -> Action:
    """Parse ``REFINE: <text>``, ``EXPAND: <ids>`` or ``STOP`` from the first matching line."""
    for raw in reply.strip().splitlines():
        m = _REPLY.match(raw.strip().strip("`*"))
        if not m:
            continue
        verb, rest = m.group(1).upper(), m.group(2).strip()
        if verb == "STOP":
            return Stop()
        if verb == "REFINE":
            return Refine(rest) if rest else Stop("policy reply: REFINE without text")
        ids = [tok for tok in re.split(r"[,\s]+", rest.strip("[]")) if tok]
        if not ids:
            return Stop("policy reply: EXPAND without ids")
        chosen = []
        for tok in ids:
            tok = tok.strip("[]'\"")
            if tok in state.frontier:
                chosen.append(tok)
            elif tok.isdigit() and f"m{int(tok):06d}" in state.frontier:
                chosen.append(f"m{int(tok):06d}")
            else:
                return Stop(f"policy reply: {tok!r} is not in the frontier")
        return Expand(chosen)
    return Stop(f"policy reply unparseable: {reply[:80]!r}")


class ScriptedPolicy:
    """Replays a fixed script; the string "expand-all" expands the whole frontier.

    Once the script is used up it keeps returning Stop.
    """

    def __init__(self, script: Sequence[Action | str]) -> None:
        self.script = list(script)
        self.position = 0

    def __call__(self, state: RetrievalState) -> Action:
        if self.position >= len(self.script):
            return Stop()
        step = self.script[self.position]
        self.position += 1
        if step == "expand-all":
            return Expand(state.frontier) if state.frontier else Stop("nothing to expand")
        if step == "stop":
            return Stop()
        if isinstance(step, str):
            raise ValueError(f"unknown script step {step!r}")
        return step


class StochasticPolicy:
    """Random actions drawn from a fixed distribution over refine/expand/stop.

    Invalid choices are possible on purpose (e.g. Expand on an empty frontier),
    which exercises the coercion path. ``log_probs`` records the log
    probability of each sampled action kind.
    """

    KINDS = ("refine", "expand", "stop")

    def __init__(
        self,
        rng: random.Random,
        probs: Sequence[float] = (0.2, 0.6, 0.2),
        vocabulary: Sequence[str] = ("memory", "event", "plan"),
    ) -> None:
        if len(probs) != 3 or any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0):
            raise ValueError("probs must be three non-negative numbers summing to 1")
        self.rng = rng
        self.probs = tuple(probs)
        self.vocabulary = list(vocabulary)
        self.log_probs: list[float] = []
        self.kinds: list[str] = []

    def distribution(self, state: RetrievalState) -> dict[str, float]:
        return dict(zip(self.KINDS, self.probs))

    def __call__(self, state: RetrievalState) -> Action:
        kind = self.rng.choices(self.KINDS, weights=self.probs)[0]
        self.kinds.append(kind)
        self.log_probs.append(math.log(self.probs[self.KINDS.index(kind)]))
        if kind == "stop":
            return Stop()
        if kind == "refine":
            return Refine(" ".join(self.rng.sample(self.vocabulary, k=min(2, len(self.vocabulary)))))
        ids = sorted(state.frontier)
        if not ids:
            return Expand([])
        n = self.rng.randint(1, len(ids))
        return Expand(self.rng.sample(ids, n))


def entry_summary(store: MemoryStore, entry_id: str) -> dict:
    entry = store.entries.get(entry_id)
    if entry is None:
        raise NotFoundError(f"unknown entry {entry_id!r}")
    return {
        "id": entry.id,
        "abstraction": entry.abstraction,
        "value": entry.value,
        "cues": sorted(store.anchors[a].label for a in entry.cue_ids),
        "episodes": sorted(entry.episodic_ids),
    }
