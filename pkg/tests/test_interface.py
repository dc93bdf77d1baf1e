import dataclasses
import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from hykge.cli import main
from hykge.pipeline import PipelineTrace, load_deps, run
from hykge.providers import ProviderError
from hykge.service import ServiceState, TraceStore, create_app

from conftest import FIXTURES, GOLDEN, QUERY


@pytest.fixture
def client(fixture_config, fixture_deps):
    return TestClient(create_app(ServiceState(fixture_config, fixture_deps)))


def test_healthz_before_and_after_load(fixture_config):
    gate = threading.Event()

    def loader():
        gate.wait(5)
        return fixture_config, load_deps(fixture_config)

    app = create_app(loader=loader)
    with TestClient(app) as c:
        assert c.get("/healthz").status_code == 503
        assert c.post("/v1/answer", json={"question": "x"}).status_code == 503
        gate.set()
        for _ in range(100):
            if c.get("/healthz").status_code == 200:
                break
            time.sleep(0.02)
        assert c.get("/healthz").json() == {"status": "ok"}


def test_failed_load_stays_unready():
    def loader():
        raise FileNotFoundError("graph.hykg")

    with TestClient(create_app(loader=loader)) as c:
        time.sleep(0.05)
        resp = c.get("/healthz")
        assert resp.status_code == 503


def test_answer_matches_cli(client, fixture_config, fixture_deps, workspace, capsys):
    resp = client.post("/v1/answer", json={"question": QUERY})
    assert resp.status_code == 200
    body = resp.json()
    assert main(["query", QUERY, "--config", str(workspace / "config.json")]) == 0
    assert capsys.readouterr().out.rstrip("\n") == body["answer"]
    stored = client.get(f"/v1/trace/{body['trace_id']}").json()
    direct = run(QUERY, fixture_config, fixture_deps).to_dict(include_durations=False)
    stored.pop("durations")
    assert stored == direct


def test_retrieve(client, fixture_config):
    resp = client.post("/v1/retrieve", json={"question": QUERY})
    assert resp.status_code == 200
    body = resp.json()
    assert 0 < len(body["chains"]) <= fixture_config.top_k
    assert set(body["chains"][0]) == {"text", "score", "kind", "hops"}
    assert {a["name"] for a in body["anchors"]} >= {"heartburn"}


@pytest.mark.parametrize("payload", [{}, {"question": ""}, {"question": 3}, {"q": "x"}])
def test_malformed_bodies(client, payload):
    assert client.post("/v1/answer", json=payload).status_code == 422


def test_whitespace_question_rejected(client):
    assert client.post("/v1/retrieve", json={"question": "   "}).status_code == 422


def test_non_json_body(client):
    resp = client.post("/v1/answer", content=b"not json", headers={"content-type": "application/json"})
    assert resp.status_code == 422


def test_unknown_trace(client):
    assert client.get("/v1/trace/nope").status_code == 404


def test_provider_failure_is_502(fixture_config, fixture_deps):
    class Down:
        def generate(self, prompt, params=None):
            raise ProviderError("generator unreachable")

    deps = dataclasses.replace(
        fixture_deps,
        providers=dataclasses.replace(fixture_deps.providers, generator=Down()),
        ho_cache=type(fixture_deps.ho_cache)(),
    )
    c = TestClient(create_app(ServiceState(fixture_config, deps)))
    resp = c.post("/v1/answer", json={"question": QUERY})
    assert resp.status_code == 502
    assert resp.json()["stage"] == "hypothesis"


def test_utf8_round_trip(client):
    resp = client.post("/v1/retrieve", json={"question": "胃痛 heartburn 🙂"})
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("application/json")


def test_trace_store_ring_and_spill(tmp_path):
    store = TraceStore(capacity=3, spill_path=tmp_path / "spill.jsonl")
    ids = [store.put(PipelineTrace(query=f"q{i}", flags={})) for i in range(5)]
    assert len(store) == 3
    assert store.get(ids[0]) is None and store.get(ids[4])["query"] == "q4"
    lines = (tmp_path / "spill.jsonl").read_text().splitlines()
    assert [json.loads(line)["trace_id"] for line in lines] == ids


# --- CLI ---------------------------------------------------------------------


def test_cli_ingest(tmp_path, capsys):
    out = tmp_path / "g.hykg"
    assert main(["ingest", str(FIXTURES / "entities.jsonl"), str(FIXTURES / "triples.tsv"), str(out)]) == 0
    lines = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
    assert (lines["entities"], lines["relations"], lines["triplets"]) == ("10", "7", "11")
    assert out.read_bytes()[:4] == b"HYKG"


def test_cli_ingest_missing_file(tmp_path):
    assert main(["ingest", str(tmp_path / "nope.jsonl"), str(FIXTURES / "triples.tsv"), str(tmp_path / "g")]) == 2


def test_cli_ingest_bad_line(tmp_path, capsys):
    bad = tmp_path / "t.tsv"
    bad.write_text("heartburn\tx\tantacid\nbroken line\n", encoding="utf-8")
    assert main(["ingest", str(FIXTURES / "entities.jsonl"), str(bad), str(tmp_path / "g")]) == 1
    assert ":2:" in capsys.readouterr().err


def test_cli_index(workspace, capsys):
    assert main(["index", "--config", str(workspace / "config.json")]) == 0
    assert "rows\t10" in capsys.readouterr().out
    assert (workspace / "entities.idx").exists()


def test_cli_query_golden_answer(workspace, capsys):
    assert main(["query", QUERY, "--config", str(workspace / "config.json")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "fixture_answer.txt").read_text(encoding="utf-8")


def test_cli_query_trace(workspace, capsys):
    assert main(["query", QUERY, "--config", str(workspace / "config.json"), "--trace"]) == 0
    data = json.loads(capsys.readouterr().out)
    for key in ("query", "hypothesis_output", "mentions", "anchors", "chain_counts", "pruned",
                "reader_prompt", "answer", "durations"):
        assert key in data


def test_cli_query_ablation_and_overrides(workspace, capsys):
    cfg = str(workspace / "config.json")
    assert main(["query", QUERY, "--config", cfg, "--trace", "--ablation", "w/o-HO"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["hypothesis_output"] == ""
    assert main(["query", QUERY, "--config", cfg, "--trace", "--top-k", "3", "--k", "1"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["chain_counts"]["pruned"] <= 3
    assert all(c["hops"] == 1 for c in data["pruned"])


def test_cli_query_provider_unreachable(workspace, capsys, monkeypatch):
    for var in ("HYKGE_GENERATOR_URL", "HYKGE_EMBEDDER_URL", "HYKGE_SCORER_URL", "HYKGE_NER_URL"):
        monkeypatch.setenv(var, "http://127.0.0.1:9")
    cfg = json.loads((workspace / "config.json").read_text())
    cfg.update(providers="http", entity_index_path=None)
    (workspace / "http.json").write_text(json.dumps(cfg))
    # building the entity index is the first network call
    code = main(["query", QUERY, "--config", str(workspace / "http.json")])
    assert code == 3
    assert "stage index" in capsys.readouterr().err


def test_cli_query_generator_down(workspace, capsys, monkeypatch, fixture_deps):
    import hykge.cli

    class Down:
        def generate(self, prompt, params=None):
            raise ProviderError("connection refused")

    broken = dataclasses.replace(
        fixture_deps, providers=dataclasses.replace(fixture_deps.providers, generator=Down())
    )
    monkeypatch.setattr(hykge.cli, "load_deps", lambda cfg: broken)
    assert main(["query", QUERY, "--config", str(workspace / "config.json")]) == 3
    assert "stage hypothesis" in capsys.readouterr().err


def test_cli_eval_writes_reports(workspace, tmp_path, capsys):
    out = tmp_path / "report"
    code = main([
        "eval", str(FIXTURES / "mcq.jsonl"), "--config", str(workspace / "config.json"),
        "--out", str(out), "--runs", "2", "--ablations", "full,w/o-HO",
    ])
    assert code == 0
    table = capsys.readouterr().out
    assert "full" in table and "w/o-HO" in table
    for name in ("report.json", "per_item.tsv", "metrics.png", "durations.png"):
        assert (out / name).stat().st_size > 0
    report = json.loads((out / "report.json").read_text())
    assert [r["label"] for r in report["reports"]] == ["full", "w/o-HO"]
    rows = (out / "per_item.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["config", "run", "item", "em", "pcr", "rouge_r"]
    assert len(rows) == 1 + 2 * 2 * 3
    assert (out / "metrics.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
