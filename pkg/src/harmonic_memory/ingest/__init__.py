"""Memory construction: segmentation through cue anchoring."""

from .consolidation import (
    ConsolidationDecision,
    ProviderJudge,
    StubJudge,
    apply_consolidation,
    find_consolidation_targets,
    judge_match,
    merge_values,
)
from .cues import generate_cue_anchors, stub_cues
from .episodic import build_episodic
from .extraction import CandidateMemory, extract_candidates
from .pipeline import IngestConfig, IngestReport, ingest
from .segmentation import segment_source, source_from_markdown

__all__ = [
    "CandidateMemory",
    "ConsolidationDecision",
    "IngestConfig",
    "IngestReport",
    "ProviderJudge",
    "StubJudge",
    "apply_consolidation",
    "build_episodic",
    "extract_candidates",
    "find_consolidation_targets",
    "generate_cue_anchors",
    "ingest",
    "judge_match",
    "merge_values",
    "segment_source",
    "source_from_markdown",
    "stub_cues",
]
