import base64
import json
import time

import pytest
from fastapi.testclient import TestClient

from pointsal.config import desk_profile
from pointsal.data import generate_dataset
from pointsal.engine import Experiment
from pointsal.oracle import gt_answer
from pointsal.service import create_app


def service_cfg():
    cfg = desk_profile()
    cfg.data.size = 16
    cfg.data.train_count = 2
    cfg.data.test_count = 2
    cfg.ccls.iterations = 10
    cfg.ccls.cycles = 5
    cfg.superpixel.count = 8
    cfg.al.target_budget = 4
    return cfg.validate()


@pytest.fixture
def experiment_dir(tmp_path):
    cfg = service_cfg()
    data = tmp_path / "data"
    generate_dataset(data, 5, cfg.data.train_count, cfg.data.test_count,
                     cfg.data.size)
    exp = Experiment.create(tmp_path / "exp", data, cfg, "adversarial", seed=0,
                            oracle="external")
    exp.close()
    return tmp_path / "exp"


def wait_phase(client, sid, phases, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}/status").json()
        if status["phase"] in phases:
            return status
        time.sleep(0.05)
    raise TimeoutError(f"service never reached {phases}")


class TestSessionLifecycle:
    def test_create_serves_pending_seed_queries(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            created = client.post("/sessions").json()
            assert created["phase"] == "awaiting_labels"
            assert created["pending"] == 4  # 2 images x 2 seed points
            assert created["round"] == 0

    def test_double_create_conflicts(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            client.post("/sessions")
            assert client.post("/sessions").status_code == 409

    def test_unknown_session_rejected(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            client.post("/sessions")
            assert client.get("/sessions/nope/status").status_code == 404
            assert client.get("/sessions/nope/queries").status_code == 404
            assert client.post("/sessions/nope/labels",
                               json={"query_id": "x", "label": "salient"}
                               ).status_code == 404


class TestQueryBatch:
    def test_limit_and_idempotent_refetch(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            sid = client.post("/sessions").json()["session_id"]
            one = client.get(f"/sessions/{sid}/queries", params={"limit": 1})
            assert one.headers["content-type"].startswith("application/x-ndjson")
            lines = [l for l in one.text.splitlines() if l]
            assert len(lines) == 1
            again = client.get(f"/sessions/{sid}/queries", params={"limit": 1})
            assert again.text == one.text  # idempotent until answered

            all_q = client.get(f"/sessions/{sid}/queries", params={"limit": 99})
            assert len(all_q.text.splitlines()) == 4

    def test_query_payload_fields(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            sid = client.post("/sessions").json()["session_id"]
            line = client.get(f"/sessions/{sid}/queries",
                              params={"limit": 1}).text.splitlines()[0]
            record = json.loads(line)
            for key in ("query_id", "image_id", "row", "col", "round",
                        "superpixel_id", "marker", "outline", "png_base64"):
                assert key in record
            png = base64.b64decode(record["png_base64"])
            assert png[:8] == b"\x89PNG\r\n\x1a\n"
            assert record["marker"] == {"row": record["row"], "col": record["col"]}
            assert record["outline"]


class TestLabelSubmission:
    def test_duplicate_and_unknown_rejected(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            sid = client.post("/sessions").json()["session_id"]
            record = json.loads(client.get(f"/sessions/{sid}/queries",
                                           params={"limit": 1}).text)
            ok = client.post(f"/sessions/{sid}/labels",
                             json={"query_id": record["query_id"],
                                   "label": "salient"})
            assert ok.status_code == 200
            assert ok.json()["remaining"] == 3
            dup = client.post(f"/sessions/{sid}/labels",
                              json={"query_id": record["query_id"],
                                    "label": "background"})
            assert dup.status_code == 409
            missing = client.post(f"/sessions/{sid}/labels",
                                  json={"query_id": "bogus", "label": "salient"})
            assert missing.status_code == 404
            bad = client.post(f"/sessions/{sid}/labels",
                              json={"query_id": "x", "label": "maybe"})
            assert bad.status_code == 422

    def test_answering_batch_resumes_round(self, experiment_dir):
        with TestClient(create_app(experiment_dir)) as client:
            sid = client.post("/sessions").json()["session_id"]
            status = client.get(f"/sessions/{sid}/status").json()
            answered_rounds = 0
            while status["phase"] != "complete":
                if status["phase"] == "awaiting_labels":
                    lines = client.get(f"/sessions/{sid}/queries",
                                       params={"limit": 99}).text.splitlines()
                    for line in [l for l in lines if l]:
                        r = json.loads(line)
                        resp = client.post(f"/sessions/{sid}/labels",
                                           json={"query_id": r["query_id"],
                                                 "label": "salient"})
                        assert resp.status_code == 200
                    answered_rounds += 1
                    status = wait_phase(client, sid,
                                        ("awaiting_labels", "complete"))
                else:
                    status = wait_phase(client, sid,
                                        ("awaiting_labels", "complete"))
            assert answered_rounds >= 2
            assert status["budget_spent"] == 4
            assert len(status["metric_history"]) == 2


def test_crash_recovery_preserves_answers(experiment_dir):
    # answer one query, drop the session, reopen: the answer must survive
    with TestClient(create_app(experiment_dir)) as client:
        sid = client.post("/sessions").json()["session_id"]
        record = json.loads(client.get(f"/sessions/{sid}/queries",
                                       params={"limit": 1}).text)
        client.post(f"/sessions/{sid}/labels",
                    json={"query_id": record["query_id"], "label": "background"})

    with TestClient(create_app(experiment_dir)) as client:
        status = client.post("/sessions").json()
        assert status["pending"] == 3
        assert status["answered"] == 1
