"""Live mode: the same components on a wall clock and real transports.

The clock is real unix seconds (optionally accelerated), bulk frames get
shipped over a TCP socket to the server's bulk listener, and the HTTP/WS
API plus the emergency centre's dispatch listing are served by uvicorn
on one port.  Component code is unchanged from sim mode; only the clock
and the transports differ.
"""

from __future__ import annotations

import threading
import time
from typing import Optional

from .emergency import EmergencyCentre
from .gateway import Gateway, GatewayConfig, SystemMode
from .harness import scripted_weather
from .protocol import Location, decode_sms, frame_bulk
from .sensors import Scenario, SensorStream
from .server import HealthServer
from .server.transport import BulkListener, send_bulk_frame


class LiveRunner:
    """Drives a scenario in real time against live transports."""

    def __init__(self, scenario: Scenario, speed: int = 1):
        if speed < 1:
            raise ValueError("speed must be >= 1")
        self.scenario = scenario
        self.speed = speed
        self.start_ts = int(time.time())
        self._elapsed = -1
        self._stop = threading.Event()
        self.log_lines: list[str] = []
        self._log_lock = threading.Lock()

        settings = scenario.gateway
        config = GatewayConfig(
            elder_id=scenario.elder_id,
            enabled_channels=settings.channels,
            alarm_wait_s=settings.alarm_wait_s,
            bulk_interval_s=settings.bulk_interval_s,
            alarm_targets=settings.alarm_targets,
            system_mode=SystemMode(settings.mode),
            medicine_period_h=settings.medicine_period_h,
            medicine_anchor=settings.medicine_anchor,
            climate_period_d=settings.climate_period_d,
            climate_anchor=settings.climate_anchor,
        )
        home = Location(*settings.location)
        weather = scripted_weather(scenario.weather)
        self.gateway = Gateway(
            config,
            position_source=lambda ts: home,
            weather_provider=lambda ts: weather(max(0, ts - self.start_ts)),
        )
        self.server = HealthServer(clock=lambda: self.now())
        self.emergency = EmergencyCentre()
        self._seed_server()
        self.bulk_listener = BulkListener(self.server)
        self.bulk_listener.start_background()
        self._streams = [SensorStream(spec, scenario.elder_id) for spec in scenario.sensors]
        self._events = sorted(scenario.events, key=lambda e: e.ts)
        self._next_event = 0
        self._thread: Optional[threading.Thread] = None

    def now(self) -> int:
        return self.start_ts + max(0, int((time.time() - self.start_ts) * self.speed))

    def _seed_server(self) -> None:
        scenario = self.scenario
        self.server.add_account(scenario.elder_id, "elderly")
        for user_id, role in scenario.users.items():
            self.server.add_account(user_id, role)
            if role == "doctor":
                self.server.assign_doctor(user_id, scenario.elder_id)
        for event in scenario.events:
            if event.kind in ("thresh", "advice"):
                doctor = event.args[3] if event.kind == "thresh" else event.args[0]
                if doctor not in self.server.accounts:
                    self.server.add_account(doctor, "doctor")
                    self.server.assign_doctor(doctor, scenario.elder_id)
        for grantee in scenario.grants:
            self.server.grant(scenario.elder_id, grantee)

    def _log(self, line: str) -> None:
        with self._log_lock:
            self.log_lines.append(line)

    def _handle_effects(self, effects) -> None:
        for effect in effects:
            self._log(effect.line())
            if effect.kind == "sms_out":
                target = effect.data["target"]
                route = self.scenario.routes.get(
                    target, "emergency" if target == "EC" else "family")
                if route == "emergency":
                    record = self.emergency.receive_alarm(
                        effect.data["line"] + "\n", self.now())
                    if record is not None:
                        self._log(f"{self.now()}|ec_dispatch|{record.dispatch_id}")
            elif effect.kind == "bulk_out":
                try:
                    count = send_bulk_frame(
                        "127.0.0.1", self.bulk_listener.port, frame_bulk(effect.payload))
                except OSError:
                    self._handle_effects(self.gateway.on_bulk_failure(self.now()))
                else:
                    self._handle_effects(self.gateway.on_bulk_ack(count, self.now()))

    def _pump_server_sms(self) -> None:
        from .protocol import encode_sms

        for _, sms in self.server.drain_sms_outbox():
            line = encode_sms(sms)
            self._handle_effects(self.gateway.handle_inbound(decode_sms(line), self.now()))

    def _advance_to(self, elapsed: int) -> None:
        scenario = self.scenario
        for t in range(self._elapsed + 1, elapsed + 1):
            now = self.start_ts + t
            for stream in self._streams:
                spec = stream.spec
                if spec.until_s is not None and t > spec.until_s:
                    continue
                rec = stream.sample(t)
                if rec is not None:
                    shifted = type(rec)(rec.elder_id, rec.sensor_id, rec.channel,
                                        rec.seq, now, rec.value)
                    self._handle_effects(self.gateway.ingest_sample(shifted, now))
            while self._next_event < len(self._events) and self._events[self._next_event].ts <= t:
                event = self._events[self._next_event]
                self._next_event += 1
                self._run_event(event, now)
            self._handle_effects(self.gateway.tick(now))
            self._pump_server_sms()
        self._elapsed = elapsed

    def _run_event(self, event, now: int) -> None:
        from .protocol import VitalChannel

        if event.kind == "thresh":
            self.server.set_threshold(event.args[3], self.scenario.elder_id,
                                      VitalChannel[event.args[0]],
                                      float(event.args[1]), float(event.args[2]))
        elif event.kind == "advice":
            self.server.send_advice(event.args[0], self.scenario.elder_id, event.args[1])
        elif event.kind in ("cancel", "confirm"):
            self._handle_effects(self.gateway.respond_to_alarm_prompt(
                VitalChannel[event.args[0]], event.kind, now))
        elif event.kind == "quick_alarm":
            self._handle_effects(self.gateway.quick_alarm(now))
        elif event.kind == "pause":
            self._handle_effects(self.gateway.set_mode(SystemMode.PAUSED, now))
        elif event.kind == "resume":
            self._handle_effects(self.gateway.set_mode(SystemMode.MONITORING, now))

    def _loop(self) -> None:
        while not self._stop.is_set():
            elapsed = min(self.now() - self.start_ts, self.scenario.horizon_s)
            if elapsed > self._elapsed:
                self._advance_to(elapsed)
            if elapsed >= self.scenario.horizon_s:
                break
            self._stop.wait(0.05 if self.speed > 1 else 0.2)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.bulk_listener.shutdown()

    def create_app(self):
        """Combined HTTP app: server API + /dispatches + /healthz."""
        from fastapi import Query

        from .server import create_app as create_server_app

        app = create_server_app(self.server)

        @app.get("/dispatches")
        def dispatches(elder_id: Optional[str] = Query(default=None)):
            return {"dispatches": [d.to_json()
                                   for d in self.emergency.list_dispatches(elder_id)]}

        @app.get("/healthz")
        def healthz():
            return {"status": "ok", "elapsed": max(0, self._elapsed),
                    "horizon": self.scenario.horizon_s}

        return app


def serve_live(scenario: Scenario, port: int = 8700, speed: int = 1,
               console_dir: Optional[str] = None) -> None:
    """Run a scenario live and serve the combined API on one port."""
    import uvicorn

    runner = LiveRunner(scenario, speed=speed)
    app = runner.create_app()
    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")
    runner.start()
    try:
        uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    finally:
        runner.stop()
