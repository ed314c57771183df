"""Authoritative memory store: entries, cue anchors, episodes, and their links.

Entries carry exactly one primary abstraction. Cue anchors are deduplicated
by canonical label and linked many-to-many with entries; an anchor that
loses its last link is pruned. Two embedding indices are kept in sync with
the live state: one over distinct canonical abstractions, one over anchors.
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .embedding import Embedder, HashEmbedder, VectorIndex
from .errors import DuplicateIdError, NotFoundError, SnapshotError, ValidationError
from .text import canonical, whitespace_token_count

SNAPSHOT_MAGIC = "MEMORA-SNAPSHOT v1"
SNAPSHOT_FORMAT_VERSION = 1


class SourceKind(str, enum.Enum):
    CONVERSATION = "conversation"
    FORMATTED_DOC = "formatted-doc"
    LOG = "log"
    TRACE = "trace"


class EpisodeMode(str, enum.Enum):
    EXTRACTED = "extracted"
    RAW = "raw"


@dataclass
class Unit:
    ordinal: int
    text: str
    label: str | None = None  # speaker for conversations, "heading" for document headings
    timestamp: str | None = None

    @property
    def is_heading(self) -> bool:
        return self.label == "heading" or self.text.lstrip().startswith("#")


@dataclass
class DocumentSource:
    id: str
    kind: SourceKind
    units: list[Unit] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.kind = SourceKind(self.kind)

    def validate(self) -> None:
        ordinals = [u.ordinal for u in self.units]
        if ordinals != list(range(1, len(ordinals) + 1)):
            raise ValidationError(f"source {self.id!r}: ordinals must run 1..n contiguously")
        for u in self.units:
            if not u.text.strip():
                raise ValidationError(f"source {self.id!r}: unit {u.ordinal} has empty text")

    @classmethod
    def from_texts(
        cls, source_id: str, texts: Iterable[str], kind: SourceKind | str = SourceKind.CONVERSATION
    ) -> DocumentSource:
        units = [Unit(ordinal=i, text=t) for i, t in enumerate(texts, start=1)]
        return cls(id=source_id, kind=SourceKind(kind), units=units)


@dataclass
class Segment:
    id: str
    source_id: str
    topic: str
    unit_ordinals: list[int]
    text: str
    timestamp: str | None = None


@dataclass
class EpisodicMemory:
    id: str
    segment_id: str
    index_phrase: str
    value_text: str
    mode: EpisodeMode

    def __post_init__(self) -> None:
        self.mode = EpisodeMode(self.mode)


@dataclass
class MemoryEntry:
    abstraction: str
    value: str
    id: str | None = None
    cue_ids: set[str] = field(default_factory=set)
    episodic_ids: set[str] = field(default_factory=set)
    created_at: float = 0.0
    updated_at: float = 0.0
    revision: int = 0


@dataclass
class CueAnchor:
    id: str
    label: str
    entry_ids: set[str] = field(default_factory=set)
    # injected directed edges to other anchors (explicit knowledge-graph relations)
    edges: set[str] = field(default_factory=set)


_ID_PREFIX = {"entry": "m", "anchor": "c", "episode": "ep", "segment": "s"}


class MemoryStore:
    """In-process store with snapshot persistence.

    Mutating calls take ``self.lock``; a caller coordinating several mutations
    (e.g. an ingestion run) may hold it across them since it is re-entrant.
    """

    def __init__(self, embedder: Embedder | None = None, clock: Callable[[], float] = time.time) -> None:
        self.embedder: Embedder = embedder or HashEmbedder()
        self.clock = clock
        self.lock = threading.RLock()
        self.entries: dict[str, MemoryEntry] = {}
        self.anchors: dict[str, CueAnchor] = {}
        self.episodes: dict[str, EpisodicMemory] = {}
        self.segments: dict[str, Segment] = {}
        self.sources: dict[str, DocumentSource] = {}
        self.label_index: dict[str, str] = {}
        self.abstraction_members: dict[str, set[str]] = {}
        self.abstraction_index = VectorIndex(self.embedder.dims)
        self.cue_index = VectorIndex(self.embedder.dims)
        self._counters: dict[str, int] = {kind: 0 for kind in _ID_PREFIX}

    # ------------------------------------------------------------------ ids

    def _new_id(self, kind: str, taken: dict[str, Any]) -> str:
        while True:
            self._counters[kind] += 1
            candidate = f"{_ID_PREFIX[kind]}{self._counters[kind]:06d}"
            if candidate not in taken:
                return candidate

    # -------------------------------------------------------------- entries

    def put_entry(self, entry: MemoryEntry) -> str:
        if not entry.abstraction or not entry.abstraction.strip():
            raise ValidationError("entry abstraction must be non-empty")
        if not entry.value or not entry.value.strip():
            raise ValidationError("entry value must be non-empty")
        if entry.cue_ids:
            raise ValidationError("link cues with link_cue after put_entry")
        with self.lock:
            if entry.id is None:
                entry.id = self._new_id("entry", self.entries)
            elif entry.id in self.entries:
                raise DuplicateIdError(f"entry {entry.id!r} already exists")
            for ep in entry.episodic_ids:
                if ep not in self.episodes:
                    raise NotFoundError(f"unknown episode {ep!r}")
            now = self.clock()
            entry.revision = 0
            entry.created_at = entry.updated_at = now
            entry.episodic_ids = set(entry.episodic_ids)
            self.entries[entry.id] = entry
            self._index_abstraction(entry.id, entry.abstraction)
            return entry.id

    def create_entry(self, abstraction: str, value: str, episodic_ids: Iterable[str] = ()) -> MemoryEntry:
        entry = MemoryEntry(abstraction=abstraction, value=value, episodic_ids=set(episodic_ids))
        self.put_entry(entry)
        return entry

    def get_entry(self, entry_id: str) -> MemoryEntry:
        try:
            return self.entries[entry_id]
        except KeyError:
            raise NotFoundError(f"unknown entry {entry_id!r}") from None

    def update_entry(
        self,
        entry_id: str,
        value: str,
        *,
        abstraction: str | None = None,
        episodic_ids: Iterable[str] = (),
    ) -> MemoryEntry:
        """Apply one Update: replace the value, optionally refine the abstraction."""
        if not value.strip():
            raise ValidationError("entry value must be non-empty")
        with self.lock:
            entry = self.get_entry(entry_id)
            for ep in episodic_ids:
                if ep not in self.episodes:
                    raise NotFoundError(f"unknown episode {ep!r}")
            if abstraction is not None and abstraction.strip() and abstraction != entry.abstraction:
                self._unindex_abstraction(entry.id, entry.abstraction)
                entry.abstraction = abstraction
                self._index_abstraction(entry.id, abstraction)
            entry.value = value
            entry.episodic_ids.update(episodic_ids)
            entry.revision += 1
            entry.updated_at = self.clock()
            return entry

    def remove_entry(self, entry_id: str) -> list[str]:
        """Delete an entry and its links; return ids of anchors pruned as orphans."""
        with self.lock:
            entry = self.get_entry(entry_id)
            pruned = []
            for anchor_id in sorted(entry.cue_ids):
                if self._drop_link(entry, anchor_id):
                    pruned.append(anchor_id)
            self._unindex_abstraction(entry.id, entry.abstraction)
            del self.entries[entry_id]
            return pruned

    def _index_abstraction(self, entry_id: str, abstraction: str) -> None:
        key = canonical(abstraction)
        members = self.abstraction_members.setdefault(key, set())
        if not members:
            self.abstraction_index.add(key, self.embedder.embed(key))
        members.add(entry_id)

    def _unindex_abstraction(self, entry_id: str, abstraction: str) -> None:
        key = canonical(abstraction)
        members = self.abstraction_members.get(key)
        if members is None:
            return
        members.discard(entry_id)
        if not members:
            del self.abstraction_members[key]
            self.abstraction_index.remove(key)

    def entries_for_abstraction(self, key: str) -> set[str]:
        return set(self.abstraction_members.get(canonical(key), ()))

    # -------------------------------------------------------------- anchors

    def anchor_for_label(self, label: str) -> CueAnchor | None:
        anchor_id = self.label_index.get(canonical(label))
        return self.anchors[anchor_id] if anchor_id is not None else None

    def link_cue(self, entry_id: str, label: str) -> str:
        key = canonical(label)
        if not key:
            raise ValidationError("cue label must be non-empty")
        with self.lock:
            entry = self.get_entry(entry_id)
            anchor_id = self.label_index.get(key)
            if anchor_id is None:
                anchor_id = self._new_id("anchor", self.anchors)
                self.anchors[anchor_id] = CueAnchor(id=anchor_id, label=key)
                self.label_index[key] = anchor_id
                self.cue_index.add(anchor_id, self.embedder.embed(key))
            self.anchors[anchor_id].entry_ids.add(entry.id)
            entry.cue_ids.add(anchor_id)
            return anchor_id

    def unlink_cue(self, entry_id: str, anchor_id: str) -> bool:
        """Drop one link; returns True when the anchor was pruned."""
        with self.lock:
            entry = self.get_entry(entry_id)
            if anchor_id not in entry.cue_ids:
                raise NotFoundError(f"entry {entry_id!r} is not linked to {anchor_id!r}")
            return self._drop_link(entry, anchor_id)

    def _drop_link(self, entry: MemoryEntry, anchor_id: str) -> bool:
        entry.cue_ids.discard(anchor_id)
        anchor = self.anchors[anchor_id]
        anchor.entry_ids.discard(entry.id)
        if anchor.entry_ids:
            return False
        del self.anchors[anchor_id]
        del self.label_index[anchor.label]
        self.cue_index.remove(anchor_id)
        for other in self.anchors.values():
            other.edges.discard(anchor_id)
        return True

    def add_anchor_edge(self, src_anchor: str, dst_anchor: str) -> None:
        with self.lock:
            for a in (src_anchor, dst_anchor):
                if a not in self.anchors:
                    raise NotFoundError(f"unknown anchor {a!r}")
            self.anchors[src_anchor].edges.add(dst_anchor)

    # ---------------------------------------------------- sources/segments

    def add_source(self, source: DocumentSource) -> None:
        source.validate()
        with self.lock:
            if source.id in self.sources:
                raise DuplicateIdError(f"source {source.id!r} already exists")
            self.sources[source.id] = source

    def add_segment(self, segment: Segment) -> Segment:
        with self.lock:
            if segment.source_id not in self.sources:
                raise NotFoundError(f"unknown source {segment.source_id!r}")
            if not segment.id:
                segment.id = self._new_id("segment", self.segments)
            elif segment.id in self.segments:
                raise DuplicateIdError(f"segment {segment.id!r} already exists")
            self.segments[segment.id] = segment
            return segment

    def add_episode(self, episode: EpisodicMemory) -> EpisodicMemory:
        with self.lock:
            if episode.segment_id not in self.segments:
                raise NotFoundError(f"unknown segment {episode.segment_id!r}")
            if any(e.segment_id == episode.segment_id for e in self.episodes.values()):
                raise DuplicateIdError(f"segment {episode.segment_id!r} already has an episode")
            if not episode.id:
                episode.id = self._new_id("episode", self.episodes)
            elif episode.id in self.episodes:
                raise DuplicateIdError(f"episode {episode.id!r} already exists")
            self.episodes[episode.id] = episode
            return episode

    def segments_of(self, source_id: str) -> list[Segment]:
        segs = [s for s in self.segments.values() if s.source_id == source_id]
        return sorted(segs, key=lambda s: s.unit_ordinals[0])

    def episode_of(self, segment_id: str) -> EpisodicMemory | None:
        for ep in self.episodes.values():
            if ep.segment_id == segment_id:
                return ep
        return None

    # ------------------------------------------------------------ reporting

    def stats(self) -> dict[str, float]:
        n = len(self.entries)
        links = sum(len(e.cue_ids) for e in self.entries.values())
        tokens = sum(whitespace_token_count(e.value) for e in self.entries.values())
        tokens += sum(whitespace_token_count(ep.value_text) for ep in self.episodes.values())
        return {
            "entry_count": n,
            "anchor_count": len(self.anchors),
            "episode_count": len(self.episodes),
            "mean_cues_per_entry": links / n if n else 0.0,
            "approx_token_total": tokens,
        }

    def check_invariants(self) -> list[str]:
        """Full scan for link, index, and reference violations; empty list means sound."""
        problems = []
        for e in self.entries.values():
            for a in e.cue_ids:
                if a not in self.anchors:
                    problems.append(f"entry {e.id} links missing anchor {a}")
                elif e.id not in self.anchors[a].entry_ids:
                    problems.append(f"entry {e.id} -> {a} lacks back-link")
            for ep in e.episodic_ids:
                if ep not in self.episodes:
                    problems.append(f"entry {e.id} references missing episode {ep}")
        for a in self.anchors.values():
            if not a.entry_ids:
                problems.append(f"anchor {a.id} is orphaned")
            for e in a.entry_ids:
                if e not in self.entries:
                    problems.append(f"anchor {a.id} links missing entry {e}")
                elif a.id not in self.entries[e].cue_ids:
                    problems.append(f"anchor {a.id} -> {e} lacks back-link")
            if self.label_index.get(a.label) != a.id:
                problems.append(f"anchor {a.id} label not indexed")
            for dst in a.edges:
                if dst not in self.anchors:
                    problems.append(f"anchor {a.id} edge to missing {dst}")
        if set(self.label_index.values()) != set(self.anchors):
            problems.append("label index out of sync with anchors")
        live_keys = {canonical(e.abstraction) for e in self.entries.values()}
        if set(self.abstraction_index.keys()) != live_keys:
            problems.append("abstraction index out of sync with live abstractions")
        if set(self.cue_index.keys()) != set(self.anchors):
            problems.append("cue index out of sync with anchors")
        for ep in self.episodes.values():
            if ep.segment_id not in self.segments:
                problems.append(f"episode {ep.id} references missing segment {ep.segment_id}")
        for seg in self.segments.values():
            if seg.source_id not in self.sources:
                problems.append(f"segment {seg.id} references missing source {seg.source_id}")
        return problems

    # -------------------------------------------------------- persistence

    def _records(self) -> list[dict[str, Any]]:
        out: list[dict[str, Any]] = []
        for src in sorted(self.sources.values(), key=lambda s: s.id):
            out.append(
                {
                    "kind": "source",
                    "id": src.id,
                    "source_kind": src.kind.value,
                    "units": [
                        {"ordinal": u.ordinal, "text": u.text, "label": u.label, "timestamp": u.timestamp}
                        for u in src.units
                    ],
                }
            )
        for seg in sorted(self.segments.values(), key=lambda s: s.id):
            out.append(
                {
                    "kind": "segment",
                    "id": seg.id,
                    "source_id": seg.source_id,
                    "topic": seg.topic,
                    "unit_ordinals": list(seg.unit_ordinals),
                    "text": seg.text,
                    "timestamp": seg.timestamp,
                }
            )
        for ep in sorted(self.episodes.values(), key=lambda e: e.id):
            out.append(
                {
                    "kind": "episode",
                    "id": ep.id,
                    "segment_id": ep.segment_id,
                    "index_phrase": ep.index_phrase,
                    "value_text": ep.value_text,
                    "mode": ep.mode.value,
                }
            )
        for e in sorted(self.entries.values(), key=lambda e: e.id):
            out.append(
                {
                    "kind": "entry",
                    "id": e.id,
                    "abstraction": e.abstraction,
                    "value": e.value,
                    "cue_ids": sorted(e.cue_ids),
                    "episodic_ids": sorted(e.episodic_ids),
                    "created_at": e.created_at,
                    "updated_at": e.updated_at,
                    "revision": e.revision,
                }
            )
        for a in sorted(self.anchors.values(), key=lambda a: a.id):
            out.append(
                {
                    "kind": "anchor",
                    "id": a.id,
                    "label": a.label,
                    "entry_ids": sorted(a.entry_ids),
                    "edges": sorted(a.edges),
                }
            )
        return out

    def dump(self) -> dict[str, Any]:
        """Plain-data view of the full state, for structural comparison."""
        return {
            "counters": dict(self._counters),
            "records": self._records(),
            "abstraction_index": {
                k: self.abstraction_index.get(k).tolist() for k in self.abstraction_index.keys()
            },
            "cue_index": {k: self.cue_index.get(k).tolist() for k in self.cue_index.keys()},
            "abstraction_members": {k: sorted(v) for k, v in sorted(self.abstraction_members.items())},
            "label_index": dict(sorted(self.label_index.items())),
        }

    def save_snapshot(self, path: str | Path) -> None:
        manifest = {
            "kind": "manifest",
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "counters": self._counters,
            "embedder": {"type": type(self.embedder).__name__, "dims": self.embedder.dims},
            "counts": {
                "sources": len(self.sources),
                "segments": len(self.segments),
                "episodes": len(self.episodes),
                "entries": len(self.entries),
                "anchors": len(self.anchors),
            },
        }
        lines = [SNAPSHOT_MAGIC, _dumps(manifest)]
        with self.lock:
            lines.extend(_dumps(r) for r in self._records())
        body = ("\n".join(lines) + "\n").encode("utf-8")
        checksum = _dumps({"kind": "checksum", "sha256": hashlib.sha256(body).hexdigest()})
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(body + checksum.encode("utf-8") + b"\n")
        tmp.replace(path)

    @classmethod
    def load_snapshot(
        cls,
        path: str | Path,
        embedder: Embedder | None = None,
        clock: Callable[[], float] = time.time,
    ) -> MemoryStore:
        raw = Path(path).read_bytes()
        first, _, _ = raw.partition(b"\n")
        if first.decode("utf-8", errors="replace").strip() != SNAPSHOT_MAGIC:
            raise SnapshotError(f"{path}: not a {SNAPSHOT_MAGIC!r} file (header {first[:40]!r})")
        body, sep, tail = raw.rstrip(b"\n").rpartition(b"\n")
        if not sep:
            raise SnapshotError(f"{path}: truncated snapshot")
        body += b"\n"
        try:
            check = json.loads(tail)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"{path}: bad checksum record") from exc
        if check.get("kind") != "checksum" or check.get("sha256") != hashlib.sha256(body).hexdigest():
            raise SnapshotError(f"{path}: checksum mismatch")
        lines = body.decode("utf-8").split("\n")[1:-1]
        if not lines:
            raise SnapshotError(f"{path}: missing manifest")
        manifest = json.loads(lines[0])
        if manifest.get("kind") != "manifest" or manifest.get("format_version") != SNAPSHOT_FORMAT_VERSION:
            raise SnapshotError(f"{path}: unsupported format version {manifest.get('format_version')!r}")
        dims = manifest["embedder"]["dims"]
        if embedder is None:
            embedder = HashEmbedder(dims)
        elif embedder.dims != dims:
            raise SnapshotError(f"{path}: snapshot built with {dims} dims, embedder has {embedder.dims}")
        store = cls(embedder=embedder, clock=clock)
        for line in lines[1:]:
            store._restore(json.loads(line))
        store._counters.update(manifest["counters"])
        for e in store.entries.values():
            store._index_abstraction(e.id, e.abstraction)
        for a in store.anchors.values():
            store.cue_index.add(a.id, store.embedder.embed(a.label))
        problems = store.check_invariants()
        if problems:
            raise SnapshotError(f"{path}: inconsistent snapshot: {problems[:3]}")
        return store

    def _restore(self, rec: dict[str, Any]) -> None:
        kind = rec.get("kind")
        if kind == "source":
            units = [Unit(**u) for u in rec["units"]]
            self.sources[rec["id"]] = DocumentSource(id=rec["id"], kind=rec["source_kind"], units=units)
        elif kind == "segment":
            fields = {k: v for k, v in rec.items() if k != "kind"}
            self.segments[rec["id"]] = Segment(**fields)
        elif kind == "episode":
            fields = {k: v for k, v in rec.items() if k != "kind"}
            self.episodes[rec["id"]] = EpisodicMemory(**fields)
        elif kind == "entry":
            self.entries[rec["id"]] = MemoryEntry(
                id=rec["id"],
                abstraction=rec["abstraction"],
                value=rec["value"],
                cue_ids=set(rec["cue_ids"]),
                episodic_ids=set(rec["episodic_ids"]),
                created_at=rec["created_at"],
                updated_at=rec["updated_at"],
                revision=rec["revision"],
            )
        elif kind == "anchor":
            self.anchors[rec["id"]] = CueAnchor(
                id=rec["id"], label=rec["label"], entry_ids=set(rec["entry_ids"]), edges=set(rec["edges"])
            )
            self.label_index[rec["label"]] = rec["id"]
        else:
            raise SnapshotError(f"unknown record kind {kind!r}")


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
