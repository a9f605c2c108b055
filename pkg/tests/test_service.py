import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from pairbelief.service import create_app

SPEC_2D = {
    "lower": [-6.0, -6.0],
    "upper": [6.0, 6.0],
    "labels": ["learning rate", "weight decay"],
    "seed": 42,
}


@pytest.fixture
def client(tmp_path):
    app = create_app(data_dir=tmp_path / "data")
    with TestClient(app) as c:
        yield c


def create(client, spec=None):
    resp = client.post("/sessions", json=spec or SPEC_2D)
    assert resp.status_code == 200
    return resp.json()["id"]


def answer_n(client, sid, n, prefer=None):
    """Answer n pairs; `prefer(first, second)` returns 'first' or 'second'."""
    for _ in range(n):
        pair = client.get(f"/sessions/{sid}/pair").json()
        winner = "first" if prefer is None else prefer(pair["first"], pair["second"])
        r = client.post(f"/sessions/{sid}/answer",
                        json={"pair_id": pair["pair_id"], "winner": winner})
        assert r.status_code == 200


class TestSessionLifecycle:
    def test_create_and_status(self, client):
        sid = create(client)
        status = client.get(f"/sessions/{sid}/status").json()
        assert status["answers"] == 0
        assert status["fit_status"] == "empty"
        assert status["labels"] == ["learning rate", "weight decay"]

    def test_invalid_spec_rejected(self, client):
        r = client.post("/sessions", json={"lower": [], "upper": []})
        assert r.status_code == 422
        r = client.post("/sessions", json={"lower": [0.0, 0.0], "upper": [1.0]})
        assert r.status_code == 422

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/pair").status_code == 404

    def test_pair_idempotent_until_answered(self, client):
        sid = create(client)
        a = client.get(f"/sessions/{sid}/pair").json()
        b = client.get(f"/sessions/{sid}/pair").json()
        assert a == b
        client.post(f"/sessions/{sid}/answer",
                    json={"pair_id": a["pair_id"], "winner": "first"})
        c = client.get(f"/sessions/{sid}/pair").json()
        assert c["pair_id"] == a["pair_id"] + 1

    def test_same_seed_same_queue(self, client):
        s1, s2 = create(client), create(client)
        p1 = client.get(f"/sessions/{s1}/pair").json()
        p2 = client.get(f"/sessions/{s2}/pair").json()
        assert p1["first"] == p2["first"] and p1["second"] == p2["second"]

    def test_stale_answer_conflict(self, client):
        sid = create(client)
        pair = client.get(f"/sessions/{sid}/pair").json()
        ok = client.post(f"/sessions/{sid}/answer",
                         json={"pair_id": pair["pair_id"], "winner": "second"})
        assert ok.status_code == 200
        dup = client.post(f"/sessions/{sid}/answer",
                          json={"pair_id": pair["pair_id"], "winner": "first"})
        assert dup.status_code == 409
        assert client.get(f"/sessions/{sid}/status").json()["answers"] == 1

    def test_bad_winner_422(self, client):
        sid = create(client)
        pair = client.get(f"/sessions/{sid}/pair").json()
        r = client.post(f"/sessions/{sid}/answer",
                        json={"pair_id": pair["pair_id"], "winner": "third"})
        assert r.status_code == 422

    def test_queue_extends_past_initial_chunk(self, client):
        sid = create(client)
        answer_n(client, sid, 300)
        assert client.get(f"/sessions/{sid}/status").json()["answers"] == 300


class TestFitGates:
    def test_fit_requires_min_answers(self, client):
        sid = create(client)
        answer_n(client, sid, 10)
        r = client.post(f"/sessions/{sid}/fit", json={})
        assert r.status_code == 422

    def test_getters_before_ready(self, client):
        sid = create(client)
        assert client.get(f"/sessions/{sid}/samples").status_code == 409
        assert client.get(f"/sessions/{sid}/grids").status_code == 409


class TestReplay:
    def test_restart_reconstructs_state(self, tmp_path):
        data = tmp_path / "data"
        app = create_app(data_dir=data)
        with TestClient(app) as client:
            sid = create(client)
            answer_n(client, sid, 25)
        app2 = create_app(data_dir=data)
        with TestClient(app2) as client2:
            status = client2.get(f"/sessions/{sid}/status").json()
            assert status["answers"] == 25
            # next pair continues the same seeded stream
            pair = client2.get(f"/sessions/{sid}/pair").json()
            assert pair["pair_id"] == 25

    def test_replay_reconstructs_identical_dataset(self, tmp_path):
        from pairbelief.service import _replay_session

        data = tmp_path / "data"
        app = create_app(data_dir=data)
        rng = np.random.default_rng(0)
        with TestClient(app) as client:
            sid = create(client)
            answer_n(client, sid, 200,
                     prefer=lambda a, b: "first" if rng.random() < 0.5 else "second")
            original = app.state.sessions[sid].dataset()
        replayed = _replay_session(data / f"{sid}.ndjson", data).dataset()
        assert np.array_equal(original.winners, replayed.winners)
        assert np.array_equal(original.losers, replayed.losers)

    def test_event_log_is_ndjson(self, tmp_path):
        data = tmp_path / "data"
        app = create_app(data_dir=data)
        with TestClient(app) as client:
            sid = create(client)
            answer_n(client, sid, 3)
        lines = (data / f"{sid}.ndjson").read_text().splitlines()
        events = [json.loads(l) for l in lines]
        assert events[0]["type"] == "created"
        assert [e["type"] for e in events[1:]] == ["answer"] * 3


class TestFitAndArtifacts:
    def _wait_ready(self, client, sid, timeout=300):
        deadline = time.time() + timeout
        while time.time() < deadline:
            status = client.get(f"/sessions/{sid}/status").json()
            if status["fit_status"] in ("ready", "failed"):
                return status
            time.sleep(0.5)
        raise TimeoutError("fit did not finish")

    def test_fit_samples_and_grids(self, client):
        sid = create(client)
        rng = np.random.default_rng(1)

        def prefer(a, b):
            # Bradley-Terry bot on a simple peaked utility
            ua = -0.5 * (a[0] ** 2 + a[1] ** 2) / 2.0
            ub = -0.5 * (b[0] ** 2 + b[1] ** 2) / 2.0
            p = 1.0 / (1.0 + np.exp(-(ua - ub)))
            return "first" if rng.random() < p else "second"

        answer_n(client, sid, 80, prefer=prefer)
        r = client.post(f"/sessions/{sid}/fit",
                        json={"iterations": 250, "preset": "fast-2d", "n_samples": 60})
        assert r.status_code == 200
        status = self._wait_ready(client, sid)
        assert status["fit_status"] == "ready", status["fit_error"]

        empty = client.get(f"/sessions/{sid}/samples", params={"n": 0}).json()
        assert empty["points"] == []
        pts = np.asarray(client.get(f"/sessions/{sid}/samples",
                                    params={"n": 60}).json()["points"])
        assert pts.shape == (60, 2)
        assert np.all((pts >= -6) & (pts <= 6))

        grids = client.get(f"/sessions/{sid}/grids", params={"ax1": 0, "ax2": 1}).json()
        assert len(grids["xs"]) == 64 and len(grids["ys"]) == 64
        dens = np.asarray(grids["log_density"])
        tau = np.asarray(grids["tau"])
        assert dens.shape == (64, 64) and tau.shape == (64, 64)
        assert np.all(np.isfinite(dens)) and np.all(tau >= 1.0)

        busy_then_again = client.post(f"/sessions/{sid}/fit", json={"iterations": 10})
        # a completed fit may be re-run; only concurrent fits are rejected
        assert busy_then_again.status_code in (200, 409)

    def test_invalid_axis_pair(self, client):
        sid = create(client)
        answer_n(client, sid, 60)
        r = client.post(f"/sessions/{sid}/fit",
                        json={"iterations": 60, "preset": "fast-2d", "n_samples": 10})
        assert r.status_code == 200
        self._wait_ready(client, sid)
        assert client.get(f"/sessions/{sid}/grids",
                          params={"ax1": 0, "ax2": 5}).status_code == 422
