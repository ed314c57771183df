"""Group-relative policy optimization arithmetic over retrieval trajectories.

This module scores trajectories and computes advantages and losses from
log-probabilities supplied by the caller. It never differentiates anything
or updates parameters; an external trainer consumes the exported records.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np

from .errors import ValidationError
from .provider import ChatProvider
from .retrieval import (
    Action,
    Expand,
    Refine,
    RetrievalConfig,
    RetrievalState,
    Stop,
    action_kind,
    policy_retrieve,
)
from .retrieval.policy import Policy
from .store import MemoryStore
from .text import content_tokens

ACTION_KINDS = ("refine", "expand", "stop")
NORMALIZATION_TOL = 1e-9

_SCORE = re.compile(r"score\W*:?\s*([01](?:\.\d+)?|\.\d+)", re.IGNORECASE)


@dataclass
class ScoreWeights:
    w1: float = 1.0
    w2: float = 0.5
    w3: float = 0.1
    delta_red: float = 0.9
    beta: float = 0.0

    def __post_init__(self) -> None:
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValidationError("score weights must be non-negative")
        if not 0.0 <= self.delta_red <= 1.0:
            raise ValidationError("delta_red must lie in [0, 1]")
        if self.beta < 0:
            raise ValidationError("beta must be non-negative")


@dataclass
class TrajectoryStep:
    state_digest: str
    action: str
    kind: str
    cost: int
    logprob_current: float | None = None
    logprob_ref: float | None = None
    dist_current: dict[str, float] | None = None
    dist_ref: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValidationError(f"unknown action kind {self.kind!r}")
        for lp in (self.logprob_current, self.logprob_ref):
            if lp is not None and lp > 0:
                raise ValidationError(f"log-probability must be <= 0, got {lp}")
        for dist in (self.dist_current, self.dist_ref):
            if dist is not None:
                check_distribution(dist)

    def to_dict(self) -> dict:
        return {
            "state": self.state_digest,
            "action": self.action,
            "kind": self.kind,
            "cost": self.cost,
            "logprob_current": self.logprob_current,
            "logprob_ref": self.logprob_ref,
            "dist_current": self.dist_current,
            "dist_ref": self.dist_ref,
        }


@dataclass
class Trajectory:
    query: str
    steps: list[TrajectoryStep]
    retrieved: list[str]
    components: dict[str, float] | None = None
    score: float | None = None
    advantage: float | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.steps or self.steps[-1].kind != "stop":
            raise ValidationError("a trajectory must end with a stop step")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "steps": [s.to_dict() for s in self.steps],
            "retrieved": list(self.retrieved),
            "components": self.components,
            "score": self.score,
            "advantage": self.advantage,
            "flags": list(self.flags),
        }


def check_distribution(dist: dict[str, float]) -> None:
    unknown = set(dist) - set(ACTION_KINDS)
    if unknown:
        raise ValidationError(f"distribution over unknown actions {sorted(unknown)}")
    if any(p < 0 or not math.isfinite(p) for p in dist.values()):
        raise ValidationError("distribution has negative or non-finite mass")
    total = math.fsum(dist.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise ValidationError(f"distribution sums to {total}, not 1")


# ------------------------------------------------------------------ scoring


def groundedness(
    query: str,
    retrieved: Sequence[str],
    store: MemoryStore,
    *,
    reference_answer: str | None = None,
    provider: ChatProvider | None = None,
) -> float:
    """How well the retrieved values support an answer, in [0, 1].

    With a provider the judge prompt decides. Otherwise, given a reference
    answer, the share of its content tokens found in the retrieved values;
    without one, the query's cosine to the centroid of the value embeddings,
    clamped at 0.
    """
    if not retrieved:
        return 0.0
    values = [store.entries[e].value for e in retrieved]
    if provider is not None:
        memories = "\n".join(f"- {store.entries[e].abstraction}: {v}" for e, v in zip(retrieved, values))
        reply = provider.render_and_complete("groundedness", query=query, memories=memories)
        m = _SCORE.search(reply)
        if not m:
            raise ValidationError(f"groundedness reply has no score: {reply[:80]!r}")
        return min(1.0, max(0.0, float(m.group(1))))
    if reference_answer is not None:
        wanted = set(content_tokens(reference_answer))
        if wanted:
            have: set[str] = set()
            for v in values:
                have.update(content_tokens(v))
            return len(wanted & have) / len(wanted)
    centroid = np.mean([store.embedder.embed(v) for v in values], axis=0)
    q = store.embedder.embed(query)
    norm = np.linalg.norm(centroid) * np.linalg.norm(q)
    if norm == 0:
        return 0.0
    return float(min(1.0, max(0.0, np.dot(centroid, q) / norm)))


def redundancy(retrieved: Sequence[str], store: MemoryStore, delta_red: float) -> float:
    """Share of ordered value pairs, self-pairs included, with cosine above ``delta_red``."""
    n = len(retrieved)
    if n == 0:
        return 0.0
    vecs = np.stack([store.embedder.embed(store.entries[e].value) for e in retrieved])
    vecs = vecs / np.linalg.norm(vecs, axis=1, keepdims=True)
    sims = np.clip(vecs @ vecs.T, -1.0, 1.0)
    # a vector's cosine with itself can land a hair under 1.0
    np.fill_diagonal(sims, 1.0)
    return float(np.count_nonzero(sims > delta_red)) / (n * n)


def trajectory_cost(traj: Trajectory, cfg: RetrievalConfig | None = None) -> int:
    costs = (cfg or RetrievalConfig()).action_costs
    return sum(costs[s.kind] for s in traj.steps)


def score_components(
    traj: Trajectory,
    store: MemoryStore,
    weights: ScoreWeights,
    cfg: RetrievalConfig | None = None,
    *,
    reference_answer: str | None = None,
    provider: ChatProvider | None = None,
) -> dict[str, float]:
    traj.components = {
        "ground": groundedness(
            traj.query, traj.retrieved, store, reference_answer=reference_answer, provider=provider
        ),
        "redund": redundancy(traj.retrieved, store, weights.delta_red),
        "cost": float(trajectory_cost(traj, cfg)),
    }
    return traj.components


def score_trajectory(traj: Trajectory, weights: ScoreWeights) -> float:
    """Weighted groundedness minus weighted redundancy and cost."""
    if traj.components is None:
        raise ValidationError("trajectory components have not been scored")
    c = traj.components
    traj.score = weights.w1 * c["ground"] - weights.w2 * c["redund"] - weights.w3 * c["cost"]
    return traj.score


def group_advantages(scores: Sequence[float]) -> list[float]:
    if len(scores) < 1:
        raise ValidationError("a group needs at least one score")
    mean = math.fsum(scores) / len(scores)
    return [s - mean for s in scores]


def gr_loss(group: Sequence[Trajectory], advantages: Sequence[float]) -> float:
    """Negative advantage-weighted sum of per-step log-probabilities."""
    if len(group) != len(advantages):
        raise ValidationError("advantages must align with the group")
    total = 0.0
    for traj, adv in zip(group, advantages):
        logps = []
        for step in traj.steps:
            if step.logprob_current is None:
                raise ValidationError("a step is missing logprob_current")
            logps.append(step.logprob_current)
        total += adv * math.fsum(logps)
    return -total


def kl_divergence(p: dict[str, float], q: dict[str, float]) -> float:
    """Discrete KL(p || q); zero-mass terms of p contribute nothing."""
    check_distribution(p)
    check_distribution(q)
    terms = []
    for a, pa in p.items():
        if pa == 0:
            continue
        qa = q.get(a, 0.0)
        if qa == 0:
            raise ValidationError(f"reference gives zero mass to {a!r} where the policy does not")
        terms.append(pa * math.log(pa / qa))
    return max(0.0, math.fsum(terms))


def kl_regularized_loss(group: Sequence[Trajectory], advantages: Sequence[float], beta: float) -> float:
    if beta < 0:
        raise ValidationError("beta must be non-negative")
    kl = 0.0
    for traj in group:
        for step in traj.steps:
            if step.dist_current is None or step.dist_ref is None:
                raise ValidationError("KL needs both action distributions on every step")
            kl += kl_divergence(step.dist_current, step.dist_ref)
    return gr_loss(group, advantages) + beta * kl


# ----------------------------------------------------------------- sampling


def _one_hot(kind: str) -> dict[str, float]:
    return {k: 1.0 if k == kind else 0.0 for k in ACTION_KINDS}


def policy_distribution(policy: Policy, state: RetrievalState, action: Action) -> dict[str, float]:
    """The policy's distribution over action kinds; one-hot for deterministic policies."""
    dist_fn = getattr(policy, "distribution", None)
    if callable(dist_fn):
        return dist_fn(state)
    return _one_hot(action_kind(action))


class MixedPolicy:
    """Follows ``main`` but switches to ``reference`` with probability ``epsilon``.

    Both components are consulted every step so the mixture distribution is
    exact, which means stateful components (scripts) advance on every call.
    """

    def __init__(self, main: Policy, reference: Policy, epsilon: float, rng: random.Random) -> None:
        if not 0.0 <= epsilon <= 1.0:
            raise ValidationError("epsilon must lie in [0, 1]")
        self.main = main
        self.reference = reference
        self.epsilon = epsilon
        self.rng = rng
        self._last: dict[str, float] | None = None

    def __call__(self, state: RetrievalState) -> Action:
        a_main = self.main(state)
        a_ref = self.reference(state)
        d_main = policy_distribution(self.main, state, a_main)
        d_ref = policy_distribution(self.reference, state, a_ref)
        self._last = {k: (1 - self.epsilon) * d_main[k] + self.epsilon * d_ref[k] for k in ACTION_KINDS}
        return a_ref if self.rng.random() < self.epsilon else a_main

    def distribution(self, state: RetrievalState) -> dict[str, float]:
        if self._last is None:
            raise ValidationError("distribution requested before the policy acted")
        return self._last


def stop_early(state: RetrievalState) -> Action:
    return Stop()


class _Recorder:
    """Wraps a policy and remembers its distributions, keyed by step."""

    def __init__(self, policy: Policy, reference: Callable[[RetrievalState], dict[str, float]] | None) -> None:
        self.policy = policy
        self.reference = reference
        self.seen: dict[int, tuple[dict[str, float], dict[str, float] | None, str]] = {}

    def __call__(self, state: RetrievalState) -> Action:
        action = self.policy(state)
        if isinstance(action, (Refine, Expand, Stop)):
            chosen, dist = action_kind(action), policy_distribution(self.policy, state, action)
        else:
            chosen, dist = "stop", _one_hot("stop")
        ref = self.reference(state) if self.reference is not None else None
        self.seen[state.t] = (dist, ref, chosen)
        return action


def sample_group(
    query: str,
    policy_factory: Callable[[], Policy],
    store: MemoryStore,
    cfg: RetrievalConfig,
    G: int,
    *,
    reference: Callable[[RetrievalState], dict[str, float]] | None = None,
) -> list[Trajectory]:
    """Run ``G`` independent retrievals, each with a fresh policy from ``policy_factory``.

    Step log-probabilities come from the policy's distribution over action
    kinds (deterministic policies put all mass on their action). Stops the
    loop forced without consulting the policy get a one-hot stop for both
    distributions. A run cut off by ``max_steps`` gets a terminal stop marker.
    """
    if G < 1:
        raise ValidationError("group size G must be >= 1")
    group = []
    for _ in range(G):
        rec = _Recorder(policy_factory(), reference)
        result = policy_retrieve(query, rec, store, cfg)
        steps = []
        for trace_step, action in zip(result.trace, result.actions):
            kind = action_kind(action)
            if trace_step.t in rec.seen:
                # an invalid choice coerced to Stop is still charged at the probability of what was chosen
                dist, ref, chosen = rec.seen[trace_step.t]
            else:
                dist, ref, chosen = _one_hot(kind), _one_hot(kind) if reference is not None else None, kind
            steps.append(
                TrajectoryStep(
                    state_digest=f"t={trace_step.t} q={trace_step.query!r} W={trace_step.working} "
                    f"F={trace_step.frontier} b={trace_step.budget}",
                    action=trace_step.action,
                    kind=kind,
                    cost=trace_step.cost,
                    logprob_current=_safe_log(dist[chosen]),
                    logprob_ref=_safe_log(ref[chosen]) if ref is not None else None,
                    dist_current=dist,
                    dist_ref=ref,
                )
            )
        if steps[-1].kind != "stop":
            ref = _one_hot("stop") if reference is not None else None
            steps.append(
                TrajectoryStep(
                    state_digest="max steps reached",
                    action="STOP",
                    kind="stop",
                    cost=0,
                    logprob_current=0.0,
                    logprob_ref=0.0 if ref else None,
                    dist_current=_one_hot("stop"),
                    dist_ref=ref,
                )
            )
        group.append(Trajectory(query, steps, list(result.entries), flags=list(result.flags)))
    return group


def _safe_log(p: float) -> float:
    return math.log(p) if p > 0 else float("-inf")


def score_group(
    group: Sequence[Trajectory],
    store: MemoryStore,
    weights: ScoreWeights,
    cfg: RetrievalConfig | None = None,
    *,
    reference_answer: str | None = None,
    provider: ChatProvider | None = None,
) -> list[float]:
    """Score every trajectory and attach group-relative advantages; returns the advantages."""
    scores = []
    for traj in group:
        score_components(traj, store, weights, cfg, reference_answer=reference_answer, provider=provider)
        scores.append(score_trajectory(traj, weights))
    advantages = group_advantages(scores)
    for traj, adv in zip(group, advantages):
        traj.advantage = adv
    return advantages


def export_trajectories(group: Iterable[Trajectory], out: str | Path | IO[str]) -> int:
    """Write one JSON record per trajectory; returns the count written."""
    lines = [json.dumps(t.to_dict(), sort_keys=True) for t in group]
    text = "".join(line + "\n" for line in lines)
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return len(lines)
