"""Agent memory engine: abstraction-keyed entries, cue anchors, and policy-guided retrieval."""

from .embedding import HashEmbedder, HttpEmbedder, VectorIndex, cosine
from .errors import EngineError
from .store import DocumentSource, EpisodeMode, MemoryEntry, MemoryStore, SourceKind, Unit

__version__ = "0.1.0"

__all__ = [
    "DocumentSource",
    "EngineError",
    "EpisodeMode",
    "HashEmbedder",
    "HttpEmbedder",
    "MemoryEntry",
    "MemoryStore",
    "SourceKind",
    "Unit",
    "VectorIndex",
    "cosine",
]
