from __future__ import annotations

import pytest
from conftest import FakeClock
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonic_memory.errors import DuplicateIdError, NotFoundError, SnapshotError, ValidationError
from harmonic_memory.store import (
    DocumentSource,
    EpisodeMode,
    EpisodicMemory,
    MemoryEntry,
    MemoryStore,
    Segment,
    Unit,
)


def test_put_then_get_round_trips(store):
    eid = store.put_entry(MemoryEntry(abstraction="A", value="v"))
    got = store.get_entry(eid)
    assert (got.abstraction, got.value, got.revision) == ("A", "v", 0)


def test_two_puts_give_two_entries(store):
    store.put_entry(MemoryEntry(abstraction="A", value="v"))
    store.put_entry(MemoryEntry(abstraction="B", value="w"))
    assert len(store.entries) == 2


@pytest.mark.parametrize("abstraction, value", [("", "v"), ("  ", "v"), ("A", "")])
def test_put_rejects_empty_fields(store, abstraction, value):
    with pytest.raises(ValidationError):
        store.put_entry(MemoryEntry(abstraction=abstraction, value=value))


def test_put_rejects_duplicate_id(store):
    store.put_entry(MemoryEntry(abstraction="A", value="v", id="x1"))
    with pytest.raises(DuplicateIdError):
        store.put_entry(MemoryEntry(abstraction="B", value="w", id="x1"))


def test_link_dedupes_by_canonical_label(store):
    e1 = store.create_entry("A", "v").id
    e2 = store.create_entry("B", "w").id
    a1 = store.link_cue(e1, "Emma swimming")
    a2 = store.link_cue(e2, "Emma swimming")
    assert a1 == a2
    assert store.anchors[a1].entry_ids == {e1, e2}
    assert store.link_cue(e1, "  EMMA   Swimming ") == a1


def test_link_is_idempotent(store):
    e1 = store.create_entry("A", "v").id
    store.link_cue(e1, "x y")
    before = (set(store.entries[e1].cue_ids), {k: set(a.entry_ids) for k, a in store.anchors.items()})
    store.link_cue(e1, "x y")
    assert (store.entries[e1].cue_ids, {k: a.entry_ids for k, a in store.anchors.items()}) == before


def test_link_unknown_entry(store):
    with pytest.raises(NotFoundError):
        store.link_cue("m999999", "x")


def test_remove_prunes_orphan_anchor(store):
    e1 = store.create_entry("A", "v").id
    a = store.link_cue(e1, "solo cue")
    assert store.remove_entry(e1) == [a]
    assert a not in store.anchors and store.anchor_for_label("solo cue") is None
    assert store.check_invariants() == []


def test_remove_keeps_shared_anchor(store):
    e1 = store.create_entry("A", "v").id
    e2 = store.create_entry("B", "w").id
    a = store.link_cue(e1, "shared")
    store.link_cue(e2, "shared")
    assert store.remove_entry(e1) == []
    assert store.anchors[a].entry_ids == {e2}


def test_remove_unknown_entry(store):
    with pytest.raises(NotFoundError):
        store.remove_entry("nope")


def test_remove_keeps_episodes(store):
    store.add_source(DocumentSource.from_texts("s", ["hello"]))
    seg = store.add_segment(Segment(id="", source_id="s", topic="t", unit_ordinals=[1], text="hello"))
    ep = store.add_episode(EpisodicMemory(id="", segment_id=seg.id, index_phrase="p", value_text="hello", mode="raw"))
    e = store.create_entry("A", "v", [ep.id])
    store.remove_entry(e.id)
    assert ep.id in store.episodes


def test_update_counts_revisions_and_reindexes(store):
    e = store.create_entry("Old key", "v")
    store.update_entry(e.id, "v2", abstraction="New key")
    store.update_entry(e.id, "v3")
    assert e.revision == 2 and e.value == "v3"
    assert set(store.abstraction_index.keys()) == {"new key"}
    assert store.check_invariants() == []


def test_stats_empty_store():
    assert MemoryStore().stats() == {
        "entry_count": 0,
        "anchor_count": 0,
        "episode_count": 0,
        "mean_cues_per_entry": 0.0,
        "approx_token_total": 0,
    }


def test_stats_mean_cues_and_tokens(store):
    e1 = store.create_entry("A", "a b").id
    e2 = store.create_entry("B", "c").id
    store.link_cue(e1, "one")
    store.link_cue(e1, "two")
    store.link_cue(e2, "three")
    s = store.stats()
    assert s["mean_cues_per_entry"] == 1.5
    # independent tokenizer: str.split
    expected = sum(len(e.value.split()) for e in store.entries.values())
    assert s["approx_token_total"] == expected >= 3


def _populated(clock=None) -> MemoryStore:
    store = MemoryStore(clock=clock or FakeClock())
    src = DocumentSource("doc", "conversation", [Unit(1, "Emma swam", "Emma", "2023-01-01"), Unit(2, "Jane hiked")])
    store.add_source(src)
    seg = store.add_segment(
        Segment(id="", source_id="doc", topic="t", unit_ordinals=[1, 2], text="Emma swam\nJane hiked")
    )
    ep = store.add_episode(
        EpisodicMemory(
            id="", segment_id=seg.id, index_phrase="two friends doing sports", value_text=seg.text, mode=EpisodeMode.RAW
        )
    )
    ids = [store.create_entry(f"Topic {i}", f"value {i}", [ep.id]).id for i in range(3)]
    for label, targets in {
        "emma swimming": ids[:2],
        "jane hiking": ids[1:],
        "sports": [ids[0]],
        "park": [ids[2]],
    }.items():
        for t in targets:
            store.link_cue(t, label)
    store.add_anchor_edge(store.anchor_for_label("sports").id, store.anchor_for_label("park").id)
    store.update_entry(ids[0], "value 0 | more")
    return store


def test_snapshot_round_trip_is_structurally_identical(tmp_path):
    store = _populated()
    assert (len(store.entries), len(store.anchors)) == (3, 4)
    store.save_snapshot(tmp_path / "s.snap")
    loaded = MemoryStore.load_snapshot(tmp_path / "s.snap")
    assert loaded.dump() == store.dump()


def test_snapshot_empty_round_trip(tmp_path):
    MemoryStore().save_snapshot(tmp_path / "e.snap")
    loaded = MemoryStore.load_snapshot(tmp_path / "e.snap")
    assert loaded.dump() == MemoryStore().dump()
    assert loaded.stats()["entry_count"] == 0


def test_snapshot_file_layout(tmp_path):
    path = tmp_path / "s.snap"
    _populated().save_snapshot(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "MEMORA-SNAPSHOT v1"
    assert '"kind":"checksum"' in lines[-1]


def test_snapshot_ids_continue_after_load(tmp_path):
    store = _populated()
    store.save_snapshot(tmp_path / "s.snap")
    loaded = MemoryStore.load_snapshot(tmp_path / "s.snap")
    assert loaded.create_entry("X", "y").id == store.create_entry("X", "y").id


def test_snapshot_wrong_header(tmp_path):
    path = tmp_path / "bad.snap"
    path.write_text("SOMETHING-ELSE v9\n{}\n", encoding="utf-8")
    with pytest.raises(SnapshotError):
        MemoryStore.load_snapshot(path)


def test_snapshot_tampered_body(tmp_path):
    path = tmp_path / "s.snap"
    _populated().save_snapshot(path)
    path.write_text(path.read_text(encoding="utf-8").replace("value 1", "value X"), encoding="utf-8")
    with pytest.raises(SnapshotError, match="checksum"):
        MemoryStore.load_snapshot(path)


def test_snapshot_missing_file(tmp_path):
    with pytest.raises(OSError):
        MemoryStore.load_snapshot(tmp_path / "absent.snap")


def test_source_ordinals_must_be_contiguous():
    with pytest.raises(ValidationError):
        DocumentSource("s", "log", [Unit(1, "a"), Unit(3, "b")]).validate()
    with pytest.raises(ValidationError):
        DocumentSource("s", "log", [Unit(1, " ")]).validate()


def test_one_episode_per_segment(store):
    store.add_source(DocumentSource.from_texts("s", ["a"]))
    seg = store.add_segment(Segment(id="", source_id="s", topic="t", unit_ordinals=[1], text="a"))
    store.add_episode(EpisodicMemory(id="", segment_id=seg.id, index_phrase="p", value_text="a", mode="raw"))
    with pytest.raises(DuplicateIdError):
        store.add_episode(EpisodicMemory(id="", segment_id=seg.id, index_phrase="q", value_text="a", mode="raw"))


_ops = st.lists(
    st.one_of(
        st.tuples(st.just("put"), st.sampled_from(["A", "B", "C", "d e"])),
        st.tuples(st.just("link"), st.integers(0, 9), st.sampled_from(["x", "X ", "y z", "w", "Y  z"])),
        st.tuples(st.just("remove"), st.integers(0, 9)),
        st.tuples(st.just("update"), st.integers(0, 9), st.sampled_from(["A", "E", None])),
    ),
    max_size=40,
)


@settings(max_examples=80, deadline=None)
@given(_ops)
def test_random_operation_sequences_keep_invariants(ops):
    store = MemoryStore(clock=FakeClock())
    live: list[str] = []
    updates: dict[str, int] = {}
    for op in ops:
        if op[0] == "put":
            live.append(store.create_entry(op[1], "value").id)
            updates[live[-1]] = 0
        elif not live:
            continue
        elif op[0] == "link":
            store.link_cue(live[op[1] % len(live)], op[2])
        elif op[0] == "remove":
            store.remove_entry(live.pop(op[1] % len(live)))
        else:
            eid = live[op[1] % len(live)]
            store.update_entry(eid, "new value", abstraction=op[2])
            updates[eid] += 1
    assert store.check_invariants() == []
    assert all(a.entry_ids for a in store.anchors.values())
    for eid in live:
        assert store.entries[eid].revision == updates[eid]
        assert isinstance(store.entries[eid].abstraction, str)
    labels = [a.label for a in store.anchors.values()]
    assert len(labels) == len(set(labels))


@settings(max_examples=30, deadline=None)
@given(_ops)
def test_snapshot_round_trip_property(tmp_path_factory, ops):
    store = MemoryStore(clock=FakeClock())
    live: list[str] = []
    for op in ops:
        if op[0] == "put":
            live.append(store.create_entry(op[1], "value").id)
        elif live and op[0] == "link":
            store.link_cue(live[op[1] % len(live)], op[2])
        elif live and op[0] == "remove":
            store.remove_entry(live.pop(op[1] % len(live)))
    path = tmp_path_factory.mktemp("snap") / "s.snap"
    store.save_snapshot(path)
    assert MemoryStore.load_snapshot(path).dump() == store.dump()
