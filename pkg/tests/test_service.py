from __future__ import annotations

import threading

import pytest
from fastapi.testclient import TestClient

from harmonic_memory.config import EngineConfig
from harmonic_memory.engine import Engine
from harmonic_memory.service import create_app

SOURCE = {
    "id": "chat",
    "kind": "conversation",
    "units": ["Jane hobby: Jane paints on weekends", {"text": "Tom job: Tom cooks", "label": "Tom"}],
}


@pytest.fixture
def engine(tmp_path):
    return Engine(EngineConfig(store_path=tmp_path / "svc.snap", lock_timeout=0.2))


@pytest.fixture
def client(engine):
    return TestClient(create_app(engine))


def test_stats_on_fresh_store(client):
    r = client.get("/stats")
    assert r.status_code == 200
    assert r.json() == {
        "entry_count": 0,
        "anchor_count": 0,
        "episode_count": 0,
        "mean_cues_per_entry": 0.0,
        "approx_token_total": 0,
    }


def test_unknown_mode(client):
    r = client.post("/query", json={"q": "x", "mode": "telepathy"})
    assert r.status_code == 400 and r.json()["error"] == "bad_mode"


@pytest.mark.parametrize("body", [b"{not json", b"[1, 2]"])
def test_malformed_body(client, body):
    r = client.post("/query", content=body, headers={"content-type": "application/json"})
    assert r.status_code == 400 and r.json()["error"] == "bad_request"


def test_bad_source_is_client_error(client):
    r = client.post("/ingest", json={"source": {"units": "nope"}})
    assert r.status_code == 400 and r.json()["error"] == "invalid"


def test_unknown_entry(client):
    r = client.get("/entries/m999999")
    assert r.status_code == 404 and r.json()["error"] == "not_found"


def test_ingest_query_round_trip(client):
    r = client.post("/ingest", json={"source": SOURCE})
    assert r.status_code == 200 and r.json()["entries_created"] == 2
    r = client.post("/query", json={"q": "Jane hobby", "mode": "semantic"})
    body = r.json()
    assert r.status_code == 200
    top = body["entries"][0]
    assert (top["abstraction"], top["value"]) == ("Jane hobby", "Jane paints on weekends")
    detail = client.get(f"/entries/{top['id']}").json()
    assert detail["cues"] and detail["episodes"][0]["mode"] == "raw"
    assert client.get("/stats").json()["entry_count"] == 2


def test_policy_query_and_overrides(client):
    client.post("/ingest", json={"source": SOURCE})
    r = client.post("/query", json={"q": "Tom job", "mode": "policy", "overrides": {"budget": 1}})
    body = r.json()
    assert r.status_code == 200 and body["budget_spent"] <= 1 and body["trace"]
    r = client.post("/query", json={"q": "Tom job", "overrides": {"budget": -1}})
    assert r.status_code == 400 and r.json()["error"] == "invalid"


def test_store_busy(client, engine):
    held = threading.Event()
    release = threading.Event()

    def hold():
        with engine.store.lock:
            held.set()
            release.wait(5)

    t = threading.Thread(target=hold)
    t.start()
    held.wait(5)
    try:
        r = client.get("/stats")
        assert r.status_code == 503 and r.json()["error"] == "store_busy"
    finally:
        release.set()
        t.join()
