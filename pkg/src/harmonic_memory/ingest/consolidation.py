"""Create-or-update consolidation of candidate memories into the store."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol

from ..provider import ChatProvider
from ..store import MemoryEntry, MemoryStore
from ..text import canonical
from .extraction import CandidateMemory

MERGE_SEPARATOR = " | "

_DECISION = re.compile(r"^\W*Decision\W*:\s*\[?\s*(\w+)", re.IGNORECASE | re.MULTILINE)
_UPDATED_INDEX = re.compile(r"^\W*UpdatedIndex\W*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_UPDATED_VALUE = re.compile(r"^\W*UpdatedValue\W*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)


@dataclass(frozen=True)
class ConsolidationDecision:
    outcome: str  # "create" | "update"
    target_entry_id: str | None = None
    merged_value: str | None = None
    refined_abstraction: str | None = None

    @classmethod
    def create(cls) -> ConsolidationDecision:
        return cls("create")

    @classmethod
    def update(
        cls, target: str, merged_value: str | None = None, refined_abstraction: str | None = None
    ) -> ConsolidationDecision:
        return cls("update", target, merged_value, refined_abstraction)


def find_consolidation_targets(
    abstraction: str, store: MemoryStore, k: int, gamma: float
) -> list[tuple[str, float]]:
    """Top-k existing entries by abstraction cosine, keeping those scoring >= gamma."""
    if not store.entries or k <= 0:
        return []
    query = store.embedder.embed(canonical(abstraction))
    scored = []
    for key, score in store.abstraction_index.score_all(query).items():
        for entry_id in store.abstraction_members[key]:
            scored.append((entry_id, score))
    scored.sort(key=lambda es: (-es[1], es[0]))
    return [(e, s) for e, s in scored[:k] if s >= gamma]


class Judge(Protocol):
    def decide(
        self,
        candidate: CandidateMemory,
        targets: list[tuple[str, float]],
        store: MemoryStore,
        flags: list[str],
    ) -> ConsolidationDecision: ...


class StubJudge:
    """Matches the first target whose canonical abstraction equals the candidate's."""

    def decide(self, candidate, targets, store, flags) -> ConsolidationDecision:
        want = canonical(candidate.abstraction)
        for entry_id, _ in targets:
            if canonical(store.entries[entry_id].abstraction) == want:
                return ConsolidationDecision.update(entry_id)
        return ConsolidationDecision.create()


class ProviderJudge:
    def __init__(self, provider: ChatProvider) -> None:
        self.provider = provider

    def decide(self, candidate, targets, store, flags) -> ConsolidationDecision:
        if not targets:
            return ConsolidationDecision.create()
        info = "\n".join(
            f"[{i}] Index: {store.entries[eid].abstraction}\n    Value: {store.entries[eid].value}"
            for i, (eid, _) in enumerate(targets, start=1)
        )
        prompts = self.provider.prompts
        prompt = prompts.render(
            "update", new_index=candidate.abstraction, new_value=candidate.value, candidates_info=info
        ) + prompts.render("update_response")
        reply = self.provider.complete(prompt)
        return parse_update_reply(reply, [eid for eid, _ in targets], flags)


def parse_update_reply(reply: str, target_ids: list[str], flags: list[str]) -> ConsolidationDecision:
    m = _DECISION.search(reply)
    if not m:
        flags.append("judge: no Decision line in provider reply, treated as new")
        return ConsolidationDecision.create()
    choice = m.group(1)
    if choice.lower() == "new":
        return ConsolidationDecision.create()
    if choice in target_ids:
        target = choice
    elif choice.isdigit() and 1 <= int(choice) <= len(target_ids):
        target = target_ids[int(choice) - 1]
    else:
        flags.append(f"judge: provider chose {choice!r}, not among the candidates; treated as new")
        return ConsolidationDecision.create()
    refined = None
    im = _UPDATED_INDEX.search(reply)
    if im and im.group(1).strip().lower() not in ("", "unchanged", "none", "n/a"):
        refined = im.group(1).strip()
    vm = _UPDATED_VALUE.search(reply)
    merged = vm.group(1).strip() if vm and vm.group(1).strip() else None
    return ConsolidationDecision.update(target, merged, refined)


def judge_match(
    candidate: CandidateMemory,
    targets: list[tuple[str, float]],
    store: MemoryStore,
    judge: Judge | None = None,
    flags: list[str] | None = None,
) -> str | None:
    decision = (judge or StubJudge()).decide(candidate, targets, store, flags if flags is not None else [])
    return decision.target_entry_id if decision.outcome == "update" else None


def merge_values(old: str, new: str, separator: str = MERGE_SEPARATOR) -> str:
    """Append ``new`` unless an identical (canonical) part is already present."""
    parts = {canonical(p) for p in old.split(separator)}
    if canonical(new) in parts:
        return old
    return old + separator + new


def resolve(
    candidate: CandidateMemory,
    decision: ConsolidationDecision,
    store: MemoryStore,
    flags: list[str],
) -> tuple[ConsolidationDecision, str, str]:
    """Settle a decision against the current store: (effective decision, abstraction, value)."""
    if decision.outcome == "update":
        target = store.entries.get(decision.target_entry_id or "")
        if target is None:
            flags.append(f"consolidation: update target {decision.target_entry_id!r} vanished, created instead")
            decision = ConsolidationDecision.create()
        else:
            value = decision.merged_value or merge_values(target.value, candidate.value)
            abstraction = decision.refined_abstraction or target.abstraction
            return decision, abstraction, value
    return decision, candidate.abstraction, candidate.value


def apply_consolidation(
    candidate: CandidateMemory,
    decision: ConsolidationDecision,
    store: MemoryStore,
    *,
    episode_id: str | None = None,
    flags: list[str] | None = None,
) -> tuple[ConsolidationDecision, MemoryEntry]:
    """Create a new entry or update the target; returns the effective decision and entry."""
    flags = flags if flags is not None else []
    episodes = [episode_id] if episode_id else []
    with store.lock:
        decision, abstraction, value = resolve(candidate, decision, store, flags)
        if decision.outcome == "update":
            entry = store.update_entry(
                decision.target_entry_id,
                value,
                abstraction=decision.refined_abstraction,
                episodic_ids=episodes,
            )
            return decision, entry
        entry = store.create_entry(abstraction, value, episodic_ids=episodes)
        return ConsolidationDecision("create", entry.id), entry
