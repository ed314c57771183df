"""Split a document source into segments that partition its units."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..errors import ValidationError
from ..provider import ChatProvider, ProviderError
from ..store import DocumentSource, Segment, SourceKind, Unit

_TOPIC_WORDS = 6


@dataclass
class SegmentPlan:
    topic: str
    ordinals: list[int]


def segment_source(
    source: DocumentSource,
    *,
    mode: str = "fixed-window",
    window: int = 4,
    provider: ChatProvider | None = None,
    flags: list[str] | None = None,
) -> list[Segment]:
    """Return unsaved segments (empty ids) covering every unit exactly once, in order."""
    if not source.units:
        raise ValidationError(f"source {source.id!r} has no units")
    source.validate()
    flags = flags if flags is not None else []
    if mode == "fixed-window":
        plans = _fixed_window(source.units, window)
    elif mode == "structural":
        plans = _structural(source.units)
    elif mode == "provider":
        if provider is None:
            flags.append("segmentation: no provider configured, used fixed-window")
            plans = _fixed_window(source.units, window)
        else:
            try:
                reply = provider.render_and_complete("segmentation", messages=render_messages(source.units))
            except ProviderError as exc:
                flags.append(f"segmentation: provider failed ({exc}), used fixed-window")
                plans = _fixed_window(source.units, window)
            else:
                plans = parse_episode_plan(reply, len(source.units), flags)
                if plans is None:
                    flags.append("segmentation: unparseable provider output, used fixed-window")
                    plans = _fixed_window(source.units, window)
    else:
        raise ValidationError(f"unknown segmenter {mode!r}")
    return [_materialize(source, plan) for plan in plans]


def render_messages(units: list[Unit]) -> str:
    lines = []
    for u in units:
        who = f"{u.label}: " if u.label and u.label != "heading" else ""
        when = f"({u.timestamp}) " if u.timestamp else ""
        lines.append(f"[{u.ordinal}] {when}{who}{u.text}")
    return "\n".join(lines)


def _fixed_window(units: list[Unit], window: int) -> list[SegmentPlan]:
    if window < 1:
        raise ValidationError("window must be >= 1")
    plans = []
    for start in range(0, len(units), window):
        chunk = units[start : start + window]
        plans.append(SegmentPlan(topic=_topic_of(chunk), ordinals=[u.ordinal for u in chunk]))
    return plans


def _structural(units: list[Unit]) -> list[SegmentPlan]:
    plans: list[SegmentPlan] = []
    current: list[Unit] = []
    for u in units:
        if u.is_heading and current:
            plans.append(SegmentPlan(topic=_topic_of(current), ordinals=[x.ordinal for x in current]))
            current = []
        current.append(u)
    if current:
        plans.append(SegmentPlan(topic=_topic_of(current), ordinals=[x.ordinal for x in current]))
    return plans


def _topic_of(units: list[Unit]) -> str:
    first = units[0]
    if first.is_heading:
        return first.text.strip().lstrip("#").strip()
    return " ".join(first.text.split()[:_TOPIC_WORDS])


def parse_episode_plan(reply: str, n_units: int, flags: list[str]) -> list[SegmentPlan] | None:
    """Parse the ``{"episodes": [...]}`` reply and repair it into a partition of 1..n.

    Invalid, duplicate, or out-of-range indices are dropped (first claim wins);
    unclaimed units join the preceding segment, or the following one at the
    start. An episode whose indices are not consecutive is split into runs.
    Any repair appends a flag.
    """
    payload = _extract_json_object(reply)
    if payload is None or not isinstance(payload.get("episodes"), list):
        return None
    owner: dict[int, int] = {}
    topics: list[str] = []
    repaired = False
    for ep in payload["episodes"]:
        if not isinstance(ep, dict):
            repaired = True
            continue
        topic = str(ep.get("topic") or "").strip()
        ep_idx = len(topics)
        topics.append(topic)
        indices = ep.get("indices")
        if not isinstance(indices, list):
            repaired = True
            continue
        for raw in indices:
            if isinstance(raw, bool) or not isinstance(raw, int) or not 1 <= raw <= n_units or raw in owner:
                repaired = True
                continue
            owner[raw] = ep_idx
    if not owner:
        return None

    labels: list[int] = []
    for ordinal in range(1, n_units + 1):
        if ordinal in owner:
            labels.append(owner[ordinal])
        else:
            repaired = True
            labels.append(labels[-1] if labels else -1)
    if labels[0] == -1:
        first_owned = next(lbl for lbl in labels if lbl != -1)
        labels = [first_owned if lbl == -1 else lbl for lbl in labels]

    plans: list[SegmentPlan] = []
    seen_labels: set[int] = set()
    for ordinal, label in enumerate(labels, start=1):
        if plans and labels[ordinal - 2] == label:
            plans[-1].ordinals.append(ordinal)
            continue
        if label in seen_labels:
            repaired = True
        seen_labels.add(label)
        plans.append(SegmentPlan(topic=topics[label], ordinals=[ordinal]))
    if repaired:
        flags.append("segmentation: provider output violated the partition rule; repaired by gap-fill")
    return plans


def _extract_json_object(text: str) -> dict | None:
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end <= start:
        return None
    try:
        obj = json.loads(text[start : end + 1])
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None


def _materialize(source: DocumentSource, plan: SegmentPlan) -> Segment:
    units = [source.units[o - 1] for o in plan.ordinals]
    stamps = [u.timestamp for u in units if u.timestamp]
    topic = plan.topic or _topic_of(units)
    return Segment(
        id="",
        source_id=source.id,
        topic=topic,
        unit_ordinals=list(plan.ordinals),
        text="\n".join(u.text for u in units),
        timestamp=min(stamps) if stamps else None,
    )


_HEADING = re.compile(r"^\s{0,3}#{1,6}\s")


def source_from_markdown(source_id: str, text: str) -> DocumentSource:
    """Paragraphs become units; markdown headings become heading units."""
    units: list[Unit] = []
    para: list[str] = []

    def flush() -> None:
        if para:
            units.append(Unit(ordinal=len(units) + 1, text=" ".join(para)))
            para.clear()

    for line in text.splitlines():
        if _HEADING.match(line):
            flush()
            units.append(Unit(ordinal=len(units) + 1, text=line.strip(), label="heading"))
        elif not line.strip():
            flush()
        else:
            para.append(line.strip())
    flush()
    return DocumentSource(id=source_id, kind=SourceKind.FORMATTED_DOC, units=units)
