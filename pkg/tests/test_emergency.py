"""Emergency centre: intake, dedup, ordering, audit, HTTP listing."""

import pytest
from fastapi.testclient import TestClient

from icare.emergency import EmergencyCentre, create_emergency_app


ALARM = "ALARM|1700000000|E01|S-ECG-1|38.88000,121.52000\n"


class TestIntake:
    def test_valid_alarm_creates_dispatch(self):
        centre = EmergencyCentre()
        record = centre.receive_alarm(ALARM, now=1700000002)
        assert record is not None
        assert record.elder_id == "E01"
        assert record.sensor_id == "S-ECG-1"
        assert record.alarm_ts == 1700000000
        assert record.received_at == 1700000002
        assert record.status == "dispatched"

    def test_location_preserved_byte_for_byte(self):
        centre = EmergencyCentre()
        record = centre.receive_alarm(ALARM, now=0)
        assert record.location_text == "38.88000,121.52000"

    def test_duplicate_line_skipped(self):
        centre = EmergencyCentre()
        assert centre.receive_alarm(ALARM, now=1) is not None
        assert centre.receive_alarm(ALARM, now=2) is None
        assert len(centre.list_dispatches()) == 1
        assert centre.audit[-1]["kind"] == "duplicate"

    def test_distinct_episodes_dispatch_separately(self):
        centre = EmergencyCentre()
        centre.receive_alarm("ALARM|100|E01|S1|0.00000,0.00000\n", now=101)
        centre.receive_alarm("ALARM|200|E01|S1|0.00000,0.00000\n", now=201)
        assert len(centre.list_dispatches()) == 2

    def test_non_alarm_rejected(self):
        centre = EmergencyCentre()
        assert centre.receive_alarm("THRESH|0|E01|ECG_HR|50|100|D01\n", now=1) is None
        assert centre.list_dispatches() == []
        assert centre.audit[-1]["kind"] == "rejected"

    def test_malformed_rejected(self):
        centre = EmergencyCentre()
        assert centre.receive_alarm("garbage\n", now=1) is None
        assert centre.audit[-1]["kind"] == "rejected"

    def test_dedup_invariant_over_shuffled_duplicates(self):
        lines = [f"ALARM|{ts}|E0{e}|S{s}|1.00000,2.00000\n"
                 for ts in (10, 20) for e in (1, 2) for s in (1, 2)]
        deliveries = lines * 3
        deliveries.sort(key=lambda line: hash(line) % 7)
        centre = EmergencyCentre()
        for i, line in enumerate(deliveries):
            centre.receive_alarm(line, now=i)
        assert len(centre.list_dispatches()) == len(set(lines))


class TestListing:
    def _seed(self):
        centre = EmergencyCentre()
        centre.receive_alarm("ALARM|100|E01|S1|0.00000,0.00000\n", now=101)
        centre.receive_alarm("ALARM|200|E02|S1|0.00000,0.00000\n", now=201)
        centre.receive_alarm("ALARM|300|E01|S2|0.00000,0.00000\n", now=301)
        return centre

    def test_filter_by_elder(self):
        centre = self._seed()
        records = centre.list_dispatches(elder_id="E01")
        assert [r.alarm_ts for r in records] == [300, 100]

    def test_unfiltered_newest_first(self):
        centre = self._seed()
        assert [r.alarm_ts for r in centre.list_dispatches()] == [300, 200, 100]

    def test_empty(self):
        assert EmergencyCentre().list_dispatches() == []

    def test_audit_file(self, tmp_path):
        path = tmp_path / "audit.jsonl"
        centre = EmergencyCentre(audit_path=path)
        centre.receive_alarm(ALARM, now=5)
        centre.receive_alarm(ALARM, now=6)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2

    def test_http_endpoint(self):
        centre = self._seed()
        client = TestClient(create_emergency_app(centre))
        body = client.get("/dispatches").json()
        assert [d["alarm_ts"] for d in body["dispatches"]] == [300, 200, 100]
        body = client.get("/dispatches", params={"elder_id": "E02"}).json()
        assert [d["elder_id"] for d in body["dispatches"]] == ["E02"]

    def test_sms_line_transport(self):
        import socket
        import time

        from icare.emergency import SmsIntakeListener

        centre = EmergencyCentre()
        listener = SmsIntakeListener(centre, clock=lambda: 42)
        listener.start_background()
        try:
            with socket.create_connection(("127.0.0.1", listener.port)) as sock:
                sock.sendall(ALARM.encode("ascii"))
                sock.sendall(ALARM.encode("ascii"))  # duplicate
                sock.sendall(b"ALARM|9|E02|S1|1.00000,2.00000\n")
            deadline = time.time() + 5
            while time.time() < deadline and len(centre.audit) < 3:
                time.sleep(0.02)
            assert len(centre.list_dispatches()) == 2
            assert centre.list_dispatches()[0].received_at == 42
        finally:
            listener.shutdown()
