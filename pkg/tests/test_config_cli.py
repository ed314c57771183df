from __future__ import annotations

import json
import socket

import pytest

from harmonic_memory.cli import (
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_IO,
    EXIT_OK,
    EXIT_PROVIDER,
    EXIT_USAGE,
    main,
)
from harmonic_memory.config import EngineConfig
from harmonic_memory.errors import ConfigError

FACTS = "Jane hobby: Jane paints on weekends\nTom job: Tom cooks at Bistro Nine\nEmma trip: Emma visited Lake Tahoe\n"


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted in stub mode")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


@pytest.fixture
def facts(tmp_path):
    path = tmp_path / "facts.txt"
    path.write_text(FACTS, encoding="utf-8")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_config_defaults_are_stub_mode():
    cfg = EngineConfig.from_dict({"config_version": 1})
    assert cfg.stub_mode and cfg.provider.seed == 42


def test_config_yaml_round(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(
        "config_version: 1\nstore_path: data/mem.snap\n"
        "retrieval: {k_abstraction: 3, mode: gated, edge_kinds: [shared-cue]}\n"
        "ingest: {gamma: 0.5}\n",
        encoding="utf-8",
    )
    cfg = EngineConfig.load(path)
    assert cfg.retrieval.k_abstraction == 3 and cfg.retrieval.mode == "gated"
    assert cfg.retrieval.edge_kinds == frozenset({"shared-cue"})
    assert cfg.ingest.gamma == 0.5
    assert cfg.store_path == tmp_path / "data" / "mem.snap"


@pytest.mark.parametrize(
    "tree",
    [
        {},
        {"config_version": 2},
        {"config_version": 1, "bogus": 1},
        {"config_version": 1, "retrieval": {"budget": 0}},
        {"config_version": 1, "retrieval": {"nope": 1}},
        {"config_version": 1, "provider": {"type": "external"}},
        {"config_version": 1, "embedder": {"type": "magic"}},
        {"config_version": 1, "provider": {"prompts_dir": "/definitely/missing"}},
    ],
)
def test_config_rejects(tree):
    with pytest.raises(ConfigError):
        EngineConfig.from_dict(tree)


def test_query_empty_store_exits_zero(tmp_path, capsys, no_network):
    code, out, _ = run(capsys, "query", "x", "--mode", "semantic", "--store", tmp_path / "m.snap")
    assert code == EXIT_OK and "no memories" in out


def test_ingest_twice_creates_nothing_second_time(tmp_path, facts, capsys, no_network):
    store = tmp_path / "m.snap"
    code, out, _ = run(capsys, "ingest", "--source", facts, "--store", store)
    first = json.loads(out)
    assert code == EXIT_OK and first["entries_created"] == 3
    code, out, _ = run(capsys, "ingest", "--source", facts, "--store", store)
    second = json.loads(out)
    assert second["entries_created"] == 0
    assert second["entries_updated"] == second["candidates_extracted"] == 3


def test_query_stats_export(tmp_path, facts, capsys, no_network):
    store = tmp_path / "m.snap"
    run(capsys, "ingest", "--source", facts, "--store", store)
    code, out, _ = run(capsys, "query", "Tom job", "--json", "--store", store)
    body = json.loads(out)
    assert code == EXIT_OK
    assert body["entries"][0]["abstraction"] == "Tom job"
    code, out, _ = run(capsys, "query", "Tom job", "--mode", "policy", "--store", store)
    assert code == EXIT_OK and "steps=" in out and "t=0" in out
    code, out, _ = run(capsys, "stats", "--store", store)
    assert json.loads(out)["entry_count"] == 3
    code, _, _ = run(capsys, "export", "--out", tmp_path / "copy.snap", "--store", store)
    assert code == EXIT_OK and (tmp_path / "copy.snap").read_text(encoding="utf-8").startswith("MEMORA-SNAPSHOT v1")


def test_query_overrides(tmp_path, facts, capsys):
    store = tmp_path / "m.snap"
    run(capsys, "ingest", "--source", facts, "--store", store)
    code, out, _ = run(
        capsys, "query", "Tom job", "--json", "--set", "k_abstraction=1", "--set", "k_cue=0", "--store", store
    )
    assert code == EXIT_OK and len(json.loads(out)["entries"]) == 1
    code, _, err = run(capsys, "query", "Tom", "--set", "nonsense=1", "--store", store)
    assert code == EXIT_INPUT and "nonsense" in err


def test_theory_strictness_output(capsys):
    code, out, _ = run(capsys, "theory", "--suite", "strictness")
    lines = [ln for ln in out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert code == EXIT_OK and lines and all(ln.startswith("PASS") for ln in lines)
    assert all("|gated|=" in ln and " k=" in ln for ln in lines)


def test_theory_json(capsys):
    code, out, _ = run(capsys, "theory", "--suite", "efficiency", "--json")
    assert code == EXIT_OK and all(c["passed"] for c in json.loads(out))


def test_exit_codes_are_distinct(tmp_path, facts, capsys):
    code_cfg, _, err = run(capsys, "stats", "--config", tmp_path / "missing.yaml")
    assert code_cfg == EXIT_CONFIG and "config" in err

    bad = tmp_path / "bad.snap"
    bad.write_text("garbage\n", encoding="utf-8")
    code_io, _, err = run(capsys, "stats", "--store", bad)
    assert code_io == EXIT_IO

    code_missing, _, _ = run(capsys, "ingest", "--source", tmp_path / "absent.txt", "--store", tmp_path / "m.snap")
    assert code_missing == EXIT_IO

    # nothing listens on the discard port, so the embedding call is refused
    cfg = tmp_path / "ext.yaml"
    cfg.write_text(
        "config_version: 1\nembedder: {type: external, endpoint: 'http://127.0.0.1:9/embed', model: m, dims: 8}\n",
        encoding="utf-8",
    )
    code_provider, _, err = run(capsys, "ingest", "--source", facts, "--config", cfg, "--store", tmp_path / "p.snap")
    assert code_provider == EXIT_PROVIDER and "provider" in err
    assert len({EXIT_OK, code_cfg, code_io, code_provider}) == 4


def test_usage_error_exit():
    with pytest.raises(SystemExit) as exc:
        main(["query"])
    assert exc.value.code == EXIT_USAGE
