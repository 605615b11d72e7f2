"""Emergency-centre service: consumes ALARM SMS lines, deduplicates, and
records an ambulance dispatch to the reported location.

Dispatch is a recorded intent, not an external call; the ambulance is
outside the system boundary.  One dispatch is created per distinct
(elder_id, sensor_id, alarm ts) triple, so retransmissions of one alarm
episode collapse while separate episodes from the same sensor dispatch
separately.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .protocol import AlarmSms, DecodeError, decode_sms


@dataclass(frozen=True)
class DispatchRecord:
    dispatch_id: str
    alarm_ts: int
    elder_id: str
    sensor_id: str
    location_text: str  # lat,lon exactly as received on the wire
    received_at: int
    status: str = "dispatched"

    def to_json(self) -> dict:
        return {
            "dispatch_id": self.dispatch_id,
            "alarm_ts": self.alarm_ts,
            "elder_id": self.elder_id,
            "sensor_id": self.sensor_id,
            "location": self.location_text,
            "received_at": self.received_at,
            "status": self.status,
        }


class EmergencyCentre:
    """SMS intake with atomic check-and-insert dedup and an audit log."""

    def __init__(self, audit_path: "str | Path | None" = None):
        self._lock = threading.Lock()
        self.dispatches: list[DispatchRecord] = []
        self._seen: set[tuple[str, str, int]] = set()
        self.audit: list[dict] = []
        self._audit_path = Path(audit_path) if audit_path else None
        self._next_id = 1

    def _log(self, now: int, kind: str, detail: dict) -> None:
        entry = {"ts": now, "kind": kind, **detail}
        self.audit.append(entry)
        if self._audit_path is not None:
            with self._audit_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")

    def receive_alarm(self, line: str, now: int) -> Optional[DispatchRecord]:
        """Process one SMS line; returns the new dispatch, or None on a
        duplicate or a rejected line (both audited)."""
        with self._lock:
            try:
                msg = decode_sms(line)
            except DecodeError as exc:
                self._log(now, "rejected", {"reason": str(exc), "line": line.rstrip("\n")})
                return None
            if not isinstance(msg, AlarmSms):
                self._log(now, "rejected", {"reason": f"not an ALARM ({msg.kind})",
                                            "line": line.rstrip("\n")})
                return None
            triple = (msg.elder_id, msg.sensor_id, msg.ts)
            if triple in self._seen:
                self._log(now, "duplicate", {"elder_id": msg.elder_id,
                                             "sensor_id": msg.sensor_id,
                                             "alarm_ts": msg.ts})
                return None
            self._seen.add(triple)
            # keep the location text byte-for-byte as it appeared on the wire
            location_text = line.rstrip("\n").rsplit("|", 1)[1]
            record = DispatchRecord(
                dispatch_id=f"A{self._next_id:04d}",
                alarm_ts=msg.ts,
                elder_id=msg.elder_id,
                sensor_id=msg.sensor_id,
                location_text=location_text,
                received_at=now,
            )
            self._next_id += 1
            self.dispatches.append(record)
            self._log(now, "dispatched", record.to_json())
            return record

    def list_dispatches(self, elder_id: Optional[str] = None) -> list[DispatchRecord]:
        """Dispatch records, newest first, optionally for one elder."""
        with self._lock:
            records = [d for d in self.dispatches
                       if elder_id is None or d.elder_id == elder_id]
            return list(reversed(records))


def create_emergency_app(centre: EmergencyCentre):
    """HTTP front: GET /dispatches?elder_id=."""
    from fastapi import FastAPI, Query

    app = FastAPI(title="icare emergency centre")

    @app.get("/dispatches")
    def dispatches(elder_id: Optional[str] = Query(default=None)):
        return {"dispatches": [d.to_json() for d in centre.list_dispatches(elder_id)]}

    return app


class SmsIntakeListener:
    """Line transport for ALARM intake: one SMS per LF-terminated line."""

    def __init__(self, centre: EmergencyCentre, host: str = "127.0.0.1", port: int = 0,
                 clock=None):
        import socketserver
        import time as _time

        listener_clock = clock or (lambda: int(_time.time()))

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                for raw in self.rfile:
                    try:
                        line = raw.decode("ascii")
                    except UnicodeDecodeError:
                        continue
                    centre.receive_alarm(line, listener_clock())

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start_background(self):
        import threading

        thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        thread.start()
        return thread

    def shutdown(self) -> None:
        self._server.shutdown()
