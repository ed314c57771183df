"""End-to-end memory construction: segment, ground, extract, consolidate, cue."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from ..errors import ValidationError
from ..provider import ChatProvider, ProviderError
from ..store import DocumentSource, EpisodeMode, MemoryStore, Segment
from ..text import canonical
from .consolidation import (
    Judge,
    ProviderJudge,
    StubJudge,
    find_consolidation_targets,
    resolve,
)
from .cues import generate_cue_anchors
from .episodic import build_episodic
from .extraction import CandidateMemory, extract_candidates
from .segmentation import segment_source

logger = logging.getLogger(__name__)

SEGMENTERS = ("structural", "provider", "fixed-window")


@dataclass
class IngestConfig:
    k: int = 10
    gamma: float = 0.7
    episodic_mode: EpisodeMode = EpisodeMode.RAW
    segmenter: str = "fixed-window"
    window: int = 4
    max_workers: int = 4

    def __post_init__(self) -> None:
        self.episodic_mode = EpisodeMode(self.episodic_mode)
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if self.segmenter not in SEGMENTERS:
            raise ValidationError(f"segmenter must be one of {SEGMENTERS}")
        if self.window < 1:
            raise ValidationError("window must be >= 1")


@dataclass
class IngestReport:
    segments_made: int = 0
    episodes_made: int = 0
    candidates_extracted: int = 0
    entries_created: int = 0
    entries_updated: int = 0
    candidates_skipped: int = 0
    anchors_created: int = 0
    anchors_reused: int = 0
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def ingest(
    source: DocumentSource,
    store: MemoryStore,
    cfg: IngestConfig | None = None,
    *,
    provider: ChatProvider | None = None,
    judge: Judge | None = None,
) -> IngestReport:
    """Run the full construction pipeline for one source.

    Re-ingesting a source id with identical units reuses its stored segments
    and episodes; extraction and consolidation run again, so every candidate
    becomes an update of the entry it created the first time.
    """
    cfg = cfg or IngestConfig()
    report = IngestReport()
    if not source.units:
        return report
    source.validate()
    if judge is None:
        judge = ProviderJudge(provider) if provider is not None else StubJudge()

    with store.lock:
        segments = _register_segments(source, store, cfg, provider, report)
        extracted = _extract_all(segments, provider, cfg, report.flags)
        for seg, candidates in zip(segments, extracted):
            episode = store.episode_of(seg.id)
            for cand in candidates:
                report.candidates_extracted += 1
                _land_candidate(cand, episode.id if episode else None, store, cfg, provider, judge, report)
    return report


def _register_segments(
    source: DocumentSource,
    store: MemoryStore,
    cfg: IngestConfig,
    provider: ChatProvider | None,
    report: IngestReport,
) -> list[Segment]:
    existing = store.sources.get(source.id)
    if existing is not None:
        if existing.kind != source.kind or existing.units != source.units:
            raise ValidationError(f"source {source.id!r} already ingested with different content")
        return store.segments_of(source.id)

    segments = segment_source(
        source, mode=cfg.segmenter, window=cfg.window, provider=provider, flags=report.flags
    )
    store.add_source(source)
    for seg in segments:
        store.add_segment(seg)
        report.segments_made += 1
    episodes = _map(
        lambda s: build_episodic(s, cfg.episodic_mode, provider=provider, flags=report.flags),
        segments,
        provider,
        cfg,
    )
    for ep in episodes:
        store.add_episode(ep)
        report.episodes_made += 1
    return segments


def _extract_all(
    segments: list[Segment], provider: ChatProvider | None, cfg: IngestConfig, flags: list[str]
) -> list[list[CandidateMemory]]:
    return _map(lambda s: extract_candidates(s, provider=provider, flags=flags), segments, provider, cfg)


def _map(fn, items, provider, cfg):
    # provider calls may overlap; results keep segment order so consolidation stays serial
    if provider is None or cfg.max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
        return list(pool.map(fn, items))


def _land_candidate(
    cand: CandidateMemory,
    episode_id: str | None,
    store: MemoryStore,
    cfg: IngestConfig,
    provider: ChatProvider | None,
    judge: Judge,
    report: IngestReport,
) -> None:
    """Decide, generate cues, then mutate; a provider failure skips the whole candidate."""
    if not cand.abstraction.strip() or not cand.value.strip():
        report.candidates_skipped += 1
        report.flags.append(f"candidate from {cand.segment_id} has empty text, skipped")
        return
    try:
        targets = find_consolidation_targets(cand.abstraction, store, cfg.k, cfg.gamma)
        decision = judge.decide(cand, targets, store, report.flags)
        decision, abstraction, value = resolve(cand, decision, store, report.flags)
        labels = generate_cue_anchors(abstraction, value, provider=provider, flags=report.flags)
    except ProviderError as exc:
        report.candidates_skipped += 1
        report.flags.append(f"candidate {cand.abstraction!r} skipped: {exc}")
        return

    episodes = [episode_id] if episode_id else []
    if decision.outcome == "update":
        entry = store.update_entry(
            decision.target_entry_id, value, abstraction=decision.refined_abstraction, episodic_ids=episodes
        )
        report.entries_updated += 1
        own = canonical(entry.abstraction)
        for anchor_id in sorted(entry.cue_ids):
            if store.anchors[anchor_id].label == own:
                store.unlink_cue(entry.id, anchor_id)
    else:
        entry = store.create_entry(abstraction, value, episodic_ids=episodes)
        report.entries_created += 1
    for label in labels:
        if store.anchor_for_label(label) is None:
            report.anchors_created += 1
        else:
            report.anchors_reused += 1
        store.link_cue(entry.id, label)



