"""HTTP + WebSocket API surface over the server core."""

import threading
import time

import pytest
from fastapi.testclient import TestClient

from icare.protocol import BulkFrame, VitalChannel, VitalRecord
from icare.server import HealthServer, create_app

HR = VitalChannel.ECG_HR


@pytest.fixture()
def core():
    server = HealthServer(clock=lambda: 1234)
    server.add_account("E01", "elderly")
    server.add_account("D01", "doctor")
    server.add_account("F1", "family_friend")
    server.add_account("SP1", "specialist")
    server.assign_doctor("D01", "E01")
    return server


@pytest.fixture()
def client(core):
    return TestClient(create_app(core))


def auth(user):
    return {"Authorization": f"Bearer tok-{user}"}


def seed_records(core, n=3):
    core.ingest_bulk(BulkFrame(records=tuple(
        VitalRecord("E01", "S1", HR, i, 10 * i, 70.0 + i) for i in range(n)
    )))


class TestAuth:
    def test_missing_token_is_403(self, client):
        assert client.get("/me").status_code == 403

    def test_bad_token_is_403(self, client):
        response = client.get("/me", headers={"Authorization": "Bearer nope"})
        assert response.status_code == 403

    def test_me_resolves_role_and_subjects(self, client, core):
        body = client.get("/me", headers=auth("D01")).json()
        assert body["role"] == "doctor"
        assert body["subjects"] == ["E01"]
        body = client.get("/me", headers=auth("F1")).json()
        assert body["subjects"] == []


class TestVitals:
    def test_records_and_thresholds(self, client, core):
        seed_records(core)
        core.set_threshold("D01", "E01", HR, 50, 100)
        body = client.get("/subjects/E01/vitals", headers=auth("E01")).json()
        assert len(body["records"]) == 3
        assert body["thresholds"]["ECG_HR"]["low"] == 50

    def test_since_filter(self, client, core):
        seed_records(core, 5)
        body = client.get("/subjects/E01/vitals", params={"since": 30},
                          headers=auth("E01")).json()
        assert [r["ts"] for r in body["records"]] == [30, 40]

    def test_unauthorized_viewer_403(self, client, core):
        seed_records(core)
        response = client.get("/subjects/E01/vitals", headers=auth("F1"))
        assert response.status_code == 403

    def test_unknown_subject_404(self, client):
        assert client.get("/subjects/E99/vitals", headers=auth("D01")).status_code == 404


class TestThresholdEndpoint:
    def test_put_threshold_queues_sms(self, client, core):
        response = client.put("/subjects/E01/thresholds/ECG_HR",
                              json={"low": 50, "high": 100}, headers=auth("D01"))
        assert response.status_code == 200
        assert response.json()["low"] == 50
        assert len(core.sms_outbox) == 1
        assert core.sms_outbox[0][0] == "E01"

    def test_family_cannot_put(self, client, core):
        core.grant("E01", "F1", by="E01")
        response = client.put("/subjects/E01/thresholds/ECG_HR",
                              json={"low": 50, "high": 100}, headers=auth("F1"))
        assert response.status_code == 403

    def test_invalid_band_422(self, client):
        response = client.put("/subjects/E01/thresholds/ECG_HR",
                              json={"low": 100, "high": 50}, headers=auth("D01"))
        assert response.status_code == 422

    def test_unknown_channel_404(self, client):
        response = client.put("/subjects/E01/thresholds/SPO2",
                              json={"low": 1, "high": 2}, headers=auth("D01"))
        assert response.status_code == 404


class TestAdviceAndAlarms:
    def test_advice_appears_in_history(self, client, core):
        response = client.post("/subjects/E01/advice", json={"text": "walk daily"},
                               headers=auth("D01"))
        assert response.status_code == 200
        events = core.view_events("E01", "E01", kind_prefix="advice")
        assert len(events) == 1

    def test_alarm_history_endpoint(self, client, core):
        from icare.protocol import EventRecord

        core.ingest_bulk(BulkFrame(events=(
            EventRecord("alarm_dispatched", 100, "elder=E01 sensor=S1 channel=ECG_HR"),
            EventRecord("alarm_cancelled", 200, "elder=E01 channel=ECG_HR"),
        )))
        body = client.get("/subjects/E01/alarms", headers=auth("D01")).json()
        assert [a["ts"] for a in body["alarms"]] == [200, 100]


class TestKnowledgeEndpoints:
    def test_add_query_order_preserved(self, client, core):
        first = client.post("/knowledge", headers=auth("SP1"), json={
            "keywords": ["stroke"], "area": "neurology", "body": "entry one",
        }).json()
        second = client.post("/knowledge", headers=auth("SP1"), json={
            "keywords": ["stroke"], "area": "neurology", "body": "entry two",
        }).json()
        client.post(f"/knowledge/{second['entry_id']}/evaluate", headers=auth("SP1"),
                    json={"rating": 1})
        body = client.get("/knowledge", params={"keyword": "stroke"},
                          headers=auth("E01")).json()
        assert [e["entry_id"] for e in body["entries"]] == [
            second["entry_id"], first["entry_id"],
        ]
        assert body["entries"][0]["level"] == "credit"

    def test_feedback_endpoint(self, client, core):
        entry = client.post("/knowledge", headers=auth("SP1"), json={
            "keywords": ["fall"], "area": "geriatrics", "body": "entry",
        }).json()
        body = client.post(f"/knowledge/{entry['entry_id']}/feedback",
                           headers=auth("E01"), json={"verdict": "helpful"}).json()
        assert body["score"] == 0.55

    def test_doctor_cannot_author(self, client):
        response = client.post("/knowledge", headers=auth("D01"), json={
            "keywords": ["x"], "area": "a", "body": "b",
        })
        assert response.status_code == 403

    def test_min_level_validation(self, client):
        response = client.get("/knowledge", params={"keyword": "x", "min_level": "weak"},
                              headers=auth("E01"))
        assert response.status_code == 422


class TestThreadEndpoints:
    def test_open_post_read(self, client):
        thread = client.post("/threads", headers=auth("E01"),
                             json={"participants": ["E01", "D01"]}).json()
        client.post(f"/threads/{thread['thread_id']}/messages", headers=auth("E01"),
                    json={"text": "question"})
        client.post(f"/threads/{thread['thread_id']}/messages", headers=auth("D01"),
                    json={"text": "reply"})
        body = client.get(f"/threads/{thread['thread_id']}", headers=auth("D01")).json()
        assert [m["text"] for m in body["messages"]] == ["question", "reply"]

    def test_non_participant_read_403(self, client):
        thread = client.post("/threads", headers=auth("E01"),
                             json={"participants": ["E01", "D01"]}).json()
        response = client.get(f"/threads/{thread['thread_id']}", headers=auth("F1"))
        assert response.status_code == 403


class TestLivePush:
    def test_ws_pushes_new_vitals(self, client, core):
        with client.websocket_connect("/subjects/E01/live?token=tok-D01") as ws:
            def ingest():
                time.sleep(0.2)
                core.ingest_bulk(BulkFrame(records=(
                    VitalRecord("E01", "S1", HR, 0, 100, 72.0),
                )))

            thread = threading.Thread(target=ingest)
            thread.start()
            message = ws.receive_json()
            thread.join()
            assert message["type"] == "vital"
            assert message["record"]["value"] == 72.0

    def test_ws_rejects_bad_token(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/subjects/E01/live?token=bad") as ws:
                ws.receive_json()
