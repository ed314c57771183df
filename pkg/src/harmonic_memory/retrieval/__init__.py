"""Semantic, graph, and policy-guided retrieval."""

from .graph import neighbors, traverse, traverse_scored
from .policy import (
    HeuristicPolicy,
    Policy,
    ProviderPolicy,
    ScriptedPolicy,
    StochasticPolicy,
    apply_action,
    entry_summary,
    heuristic_policy,
    init_frontier,
    parse_policy_reply,
    policy_retrieve,
    relevance,
    validate_action,
)
from .semantic import episodic_groups, match_keys, semantic_hits, semantic_retrieve
from .types import (
    EDGE_KINDS,
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

__all__ = [
    "Action",
    "EDGE_KINDS",
    "Expand",
    "FrontierItem",
    "HeuristicPolicy",
    "Policy",
    "ProviderPolicy",
    "Refine",
    "RetrievalConfig",
    "RetrievalResult",
    "RetrievalState",
    "ScriptedPolicy",
    "StochasticPolicy",
    "Stop",
    "TraceStep",
    "action_kind",
    "apply_action",
    "entry_summary",
    "episodic_groups",
    "heuristic_policy",
    "init_frontier",
    "match_keys",
    "neighbors",
    "parse_policy_reply",
    "policy_retrieve",
    "relevance",
    "semantic_hits",
    "semantic_retrieve",
    "traverse",
    "traverse_scored",
    "validate_action",
]
