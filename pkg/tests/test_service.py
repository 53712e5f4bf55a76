"""HTTP service over a frozen model, and the CLI thin-client mode.

Endpoint responses are checked against the local query engine on the same
model: the service is a transport wrapper and must not change any result.
"""

from __future__ import annotations

import json
import socket
import threading
import time

import pytest
from fastapi.testclient import TestClient

from condembed import cli
from condembed.evaluation import EvalRecord, EvalSet, evaluate
from condembed.query import QueryEngine
from condembed.service.app import create_app


@pytest.fixture(scope="module")
def client(drift_setup):
    return TestClient(create_app(model=drift_setup.model))


@pytest.fixture(scope="module")
def engine(drift_setup):
    return QueryEngine(drift_setup.model)


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def server_url(drift_setup):
    import uvicorn

    app = create_app(model=drift_setup.model)
    port = free_port()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("service did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestInfoEndpoints:
    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_model_info(self, client, drift_setup):
        body = client.get("/model").json()
        assert body == {
            "n_words": len(drift_setup.vocab),
            "n_conditions": 3,
            "dim": drift_setup.config.dim,
            "conditions": ["c1", "c2", "c3"],
            "topology": "chain",
        }


class TestNeighbors:
    def test_matches_local_engine(self, client, engine):
        body = client.post("/neighbors", json={
            "word": "apple", "src_condition": "c1", "tgt_condition": "c3",
            "k": 5}).json()
        local = engine.nearest_neighbors("apple", "c1", "c3", k=5)
        assert body["word"] == "apple"
        assert body["include_self"] is True
        assert [n["word"] for n in body["neighbors"]] == local.words()
        for got, (_, want) in zip(body["neighbors"], local.neighbors):
            assert got["score"] == pytest.approx(want, abs=1e-12)

    def test_exclude_self(self, client):
        body = client.post("/neighbors", json={
            "word": "apple", "src_condition": "c1", "tgt_condition": "c1",
            "k": 3, "include_self": False}).json()
        assert "apple" not in [n["word"] for n in body["neighbors"]]

    def test_oov_is_404_with_suggestions(self, client):
        response = client.post("/neighbors", json={
            "word": "chery", "src_condition": "c1", "tgt_condition": "c1"})
        assert response.status_code == 404
        detail = response.json()["detail"]
        assert "chery" in detail["message"]
        assert "cherry" in detail["suggestions"]

    def test_unknown_condition_is_400(self, client):
        response = client.post("/neighbors", json={
            "word": "apple", "src_condition": "c1", "tgt_condition": "nope"})
        assert response.status_code == 400
        assert "c1, c2, c3" in response.json()["detail"]

    def test_nonpositive_k_is_422(self, client):
        response = client.post("/neighbors", json={
            "word": "apple", "src_condition": "c1", "tgt_condition": "c1",
            "k": 0})
        assert response.status_code == 422

    def test_context_side(self, client, drift_setup):
        body = client.post("/neighbors", json={
            "word": "apple", "src_condition": "c1", "tgt_condition": "c1",
            "k": 4, "side": "context"}).json()
        local = QueryEngine(drift_setup.model, side="context")
        assert [n["word"] for n in body["neighbors"]] == \
            local.nearest_neighbors("apple", "c1", "c1", k=4).words()


class TestStability:
    def test_matches_local_engine(self, client, engine):
        body = client.post("/stability", json={}).json()
        local = engine.stability_ranking()
        assert [r["word"] for r in body["ranked"]] == local.words()
        assert body["skipped"] == local.skipped
        assert body["n_pairs"] == 3

    def test_top_n(self, client):
        body = client.post("/stability", json={"top_n": 3}).json()
        assert len(body["ranked"]) == 3

    def test_nonpositive_top_n_is_422(self, client):
        assert client.post("/stability",
                           json={"top_n": 0}).status_code == 422


class TestTrajectory:
    def test_matches_local_engine(self, client, engine):
        body = client.post("/trajectory", json={
            "word": "apple", "neighbors_per_condition": 2}).json()
        assert body == engine.trajectory("apple", neighbors_per_condition=2)

    def test_condition_subset_order(self, client):
        body = client.post("/trajectory", json={
            "word": "apple", "conditions": ["c3", "c1"],
            "neighbors_per_condition": 0}).json()
        assert [b["condition"] for b in body["conditions"]] == ["c3", "c1"]

    def test_negative_neighbors_is_422(self, client):
        response = client.post("/trajectory", json={
            "word": "apple", "neighbors_per_condition": -1})
        assert response.status_code == 422


class TestEvaluate:
    def test_matches_local_evaluate(self, client, drift_setup):
        pairs = drift_setup.corpus.gold.stable_pairs
        body = client.post("/evaluate", json={
            "name": "gold",
            "records": [dict(zip(("query_word", "query_condition",
                                  "target_condition", "gold_word"), p))
                        for p in pairs]}).json()
        local = evaluate(drift_setup.model,
                         EvalSet([EvalRecord(*p) for p in pairs], "gold"))
        assert body["name"] == "gold"
        assert body["n_scored"] == local.n_scored
        assert body["mrr"] == pytest.approx(local.mrr, abs=1e-12)
        assert set(body["mp_at"]) == {"1", "3", "5", "10"}
        for k, v in local.mp_at.items():
            assert body["mp_at"][str(k)] == pytest.approx(v, abs=1e-12)

    def test_empty_records_is_422(self, client):
        assert client.post("/evaluate",
                           json={"records": []}).status_code == 422

    def test_bad_policy_is_422(self, client):
        assert client.post("/evaluate", json={
            "records": [{"query_word": "apple", "query_condition": "c1",
                         "target_condition": "c2", "gold_word": "apple"}],
            "oov_policy": "drop"}).status_code == 422

    def test_nothing_scorable_is_400(self, client):
        response = client.post("/evaluate", json={
            "records": [{"query_word": "zzz", "query_condition": "c1",
                         "target_condition": "c2", "gold_word": "zzz"}]})
        assert response.status_code == 400
        assert "no scorable records" in response.json()["detail"]


class TestAppConstruction:
    def test_needs_model_or_path(self):
        with pytest.raises(ValueError, match="model or model_path"):
            create_app()

    def test_loads_model_from_file(self, drift_setup, tmp_path):
        path = tmp_path / "model.bin"
        drift_setup.model.save(path)
        client = TestClient(create_app(model_path=path))
        assert client.get("/model").json()["n_words"] == \
            len(drift_setup.vocab)


class TestCliThinClient:
    def test_nn_matches_local_output(self, server_url, drift_setup, tmp_path,
                                     capsys):
        model_path = tmp_path / "model.bin"
        drift_setup.model.save(model_path)
        assert cli.main(["query", "nn", "--model", str(model_path),
                         "--word", "apple", "--src", "c1", "--tgt", "c1",
                         "--k", "4"]) == 0
        local_out = capsys.readouterr().out
        assert cli.main(["query", "nn", "--server", server_url,
                         "--word", "apple", "--src", "c1", "--tgt", "c1",
                         "--k", "4"]) == 0
        assert capsys.readouterr().out == local_out

    def test_stable_via_server(self, server_url, capsys):
        assert cli.main(["query", "stable", "--server", server_url,
                         "--top", "3"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_traj_via_server(self, server_url, engine, capsys):
        assert cli.main(["query", "traj", "--server", server_url,
                         "--word", "apple", "--neighbors", "1"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload == engine.trajectory("apple",
                                            neighbors_per_condition=1)

    def test_server_error_is_surfaced(self, server_url, capsys):
        assert cli.main(["query", "nn", "--server", server_url,
                         "--word", "zzz", "--src", "c1", "--tgt", "c1"]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error: server returned 404")

    def test_unreachable_server(self, capsys):
        url = f"http://127.0.0.1:{free_port()}"
        assert cli.main(["query", "nn", "--server", url, "--word", "apple",
                         "--src", "c1", "--tgt", "c1"]) == 1
        assert "request to" in capsys.readouterr().err
