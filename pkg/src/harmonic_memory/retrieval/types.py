"""Retrieval configuration, MDP state, actions, and results."""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ValidationError

EDGE_KINDS = frozenset({"shared-cue", "similar-cue", "explicit-edge"})
MODES = ("union", "gated")

LabelSelector = Callable[[str], Iterable[str]]


@dataclass
class RetrievalConfig:
    k_abstraction: int = 5
    k_cue: int = 5
    mode: str = "union"
    delta_adj: float | None = 0.8  # None disables similar-cue adjacency
    hops: int = 0
    budget: int = 8
    max_steps: int = 10
    action_costs: dict[str, int] = field(default_factory=lambda: {"refine": 1, "expand": 1, "stop": 0})
    theta: float = 0.25
    hop_decay: float = 0.5
    edge_kinds: frozenset[str] = EDGE_KINDS
    # injected selectors replace similarity TopK with a fixed label set (theory constructions)
    abstraction_selector: LabelSelector | None = None
    cue_selector: LabelSelector | None = None

    def __post_init__(self) -> None:
        self.edge_kinds = frozenset(self.edge_kinds)
        self.action_costs = {"stop": 0, **self.action_costs}
        if self.k_abstraction < 0 or self.k_cue < 0:
            raise ValidationError("k_abstraction and k_cue must be >= 0")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.delta_adj is not None and not 0.0 <= self.delta_adj <= 1.0:
            raise ValidationError("delta_adj must lie in [0, 1]")
        if self.hops < 0:
            raise ValidationError("hops must be >= 0")
        if self.budget <= 0:
            raise ValidationError("budget must be a positive integer")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")
        for kind in ("refine", "expand"):
            cost = self.action_costs.get(kind)
            if not isinstance(cost, int) or cost <= 0:
                raise ValidationError(f"action cost for {kind!r} must be a positive integer")
        if self.action_costs["stop"] != 0:
            raise ValidationError("stop must cost 0")
        unknown = self.edge_kinds - EDGE_KINDS
        if unknown:
            raise ValidationError(f"unknown edge kinds {sorted(unknown)}")

    def replace(self, **overrides) -> RetrievalConfig:
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise ValidationError(f"unknown retrieval settings {sorted(bad)}")
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(overrides)
        return RetrievalConfig(**values)

    def to_dict(self) -> dict:
        return {
            "k_abstraction": self.k_abstraction,
            "k_cue": self.k_cue,
            "mode": self.mode,
            "delta_adj": self.delta_adj,
            "hops": self.hops,
            "budget": self.budget,
            "max_steps": self.max_steps,
            "action_costs": dict(self.action_costs),
            "theta": self.theta,
            "hop_decay": self.hop_decay,
            "edge_kinds": sorted(self.edge_kinds),
        }


@dataclass(frozen=True)
class FrontierItem:
    entry_id: str
    score: float
    provenance: str  # abstraction | cue | shared-cue | similar-cue | explicit-edge
    via: str | None = None  # abstraction key or anchor id
    parent: str | None = None  # entry that exposed this item, for graph provenance


@dataclass(frozen=True)
class Refine:
    new_query: str

    def render(self) -> str:
        return f"REFINE: {self.new_query}"


@dataclass(frozen=True)
class Expand:
    selected: frozenset[str]

    def __init__(self, selected: Iterable[str]) -> None:
        object.__setattr__(self, "selected", frozenset(selected))

    def render(self) -> str:
        return "EXPAND: " + ",".join(sorted(self.selected))


@dataclass(frozen=True)
class Stop:
    reason: str | None = None

    def render(self) -> str:
        return "STOP"


Action = Refine | Expand | Stop


def action_kind(action: Action) -> str:
    if isinstance(action, Refine):
        return "refine"
    if isinstance(action, Expand):
        return "expand"
    return "stop"


@dataclass
class RetrievalState:
    t: int
    query: str
    query_vector: np.ndarray
    working: dict[str, float]
    frontier: dict[str, FrontierItem]
    budget: int
    refinements: int = 0

    def copy(self) -> RetrievalState:
        return RetrievalState(
            t=self.t,
            query=self.query,
            query_vector=self.query_vector,
            working=dict(self.working),
            frontier=dict(self.frontier),
            budget=self.budget,
            refinements=self.refinements,
        )

    def digest(self) -> str:
        return (
            f"t={self.t} q={self.query!r} W={sorted(self.working)} "
            f"F={sorted(self.frontier)} b={self.budget}"
        )


@dataclass
class TraceStep:
    t: int
    query: str
    working: list[str]
    frontier: list[str]
    budget: int
    action: str
    cost: int
    flag: str | None = None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "query": self.query,
            "working": self.working,
            "frontier": self.frontier,
            "budget": self.budget,
            "action": self.action,
            "cost": self.cost,
            "flag": self.flag,
        }


@dataclass
class RetrievalResult:
    entries: list[str] = field(default_factory=list)
    scores: dict[str, float] = field(default_factory=dict)
    episodic_groups: dict[str, list[str]] = field(default_factory=dict)
    steps_taken: int = 0
    budget_spent: int = 0
    trace: list[TraceStep] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def entry_set(self) -> set[str]:
        return set(self.entries)
