"""Deterministic scenario runner.

A virtual clock drives sensors, gateway, server and emergency centre in
one process.  Links between components are simulated transports with
configurable integer-second latency and scripted drop schedules, so a
scenario replays bit-identically: same inputs, same effect log, same
report digest.

Wiring:

    sensors --(local)--> gateway --sms:<target>--> emergency centre / family
                           |  ^
                      bulk |  | ack + doctor_sms
                           v  |
                          server
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .emergency import EmergencyCentre
from .gateway import Effect, Gateway, GatewayConfig, SystemMode, WeatherReading
from .protocol import (
    BulkFrame,
    Location,
    VitalChannel,
    decode_sms,
    frame_ack,
    frame_bulk,
    unframe_ack,
    unframe_bulk,
)
from .sensors import LinkConfig, Scenario, ScenarioEvent, SensorStream
from .server import HealthServer


class VirtualClock:
    """Integer-second event queue; ties break by insertion order."""

    def __init__(self, start: int = 0):
        self.now = start
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._counter = 0

    def schedule(self, ts: int, action: Callable[[], None]) -> None:
        if ts < self.now:
            raise ValueError(f"cannot schedule at {ts}, now is {self.now}")
        heapq.heappush(self._heap, (ts, self._counter, action))
        self._counter += 1

    def step(self, until: int) -> int:
        """Run every action with ts <= until, in deterministic order."""
        if until < self.now:
            raise ValueError(f"cannot step backwards to {until}, now is {self.now}")
        processed = 0
        while self._heap and self._heap[0][0] <= until:
            ts, _, action = heapq.heappop(self._heap)
            self.now = max(self.now, ts)
            action()
            processed += 1
        self.now = max(self.now, until)
        return processed

    @property
    def pending(self) -> int:
        return len(self._heap)


class SimLink:
    """One-directional message pipe with fixed latency and scripted loss."""

    def __init__(self, name: str, clock: VirtualClock,
                 deliver: Callable[[object], None],
                 latency_s: int = 0, drop: frozenset[int] = frozenset(),
                 on_drop: Optional[Callable[[str, int], None]] = None):
        self.name = name
        self.clock = clock
        self.deliver = deliver
        self.latency_s = latency_s
        self.drop = drop
        self.on_drop = on_drop
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def send(self, message: object) -> None:
        index = self.sent
        self.sent += 1
        if index in self.drop:
            self.dropped += 1
            if self.on_drop is not None:
                self.on_drop(self.name, index)
            return

        def _deliver() -> None:
            self.delivered += 1
            self.deliver(message)

        self.clock.schedule(self.clock.now + self.latency_s, _deliver)

    def counts(self) -> dict:
        return {"sent": self.sent, "delivered": self.delivered, "dropped": self.dropped}


@dataclass
class EpisodeReport:
    origin_ts: int  # second-exceedance sample ts (or quick-alarm ts)
    dispatched_ts: int  # when the gateway sent the ALARM
    received_ts: Optional[int]  # when the emergency centre created the dispatch
    sensor_id: str
    channel: Optional[str]

    @property
    def latency(self) -> Optional[int]:
        if self.received_ts is None:
            return None
        return self.received_ts - self.origin_ts


@dataclass
class RunReport:
    scenario: str
    horizon_s: int
    episodes: list[EpisodeReport] = field(default_factory=list)
    cancelled_episodes: int = 0
    link_counts: dict = field(default_factory=dict)
    records_synced: int = 0
    records_generated: int = 0
    reminders_fired: dict = field(default_factory=dict)
    dispatch_count: int = 0
    log_lines: list[str] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.log_lines).encode("utf-8")).hexdigest()

    def summary(self) -> str:
        lines = [
            f"scenario: {self.scenario}",
            f"horizon_s: {self.horizon_s}",
            f"records_generated: {self.records_generated}",
            f"records_synced: {self.records_synced}",
            f"dispatches: {self.dispatch_count}",
            f"cancelled_episodes: {self.cancelled_episodes}",
        ]
        for episode in self.episodes:
            lines.append(
                "episode: origin={} dispatched={} received={} latency={} sensor={}".format(
                    episode.origin_ts, episode.dispatched_ts,
                    episode.received_ts, episode.latency, episode.sensor_id,
                )
            )
        for name in sorted(self.link_counts):
            counts = self.link_counts[name]
            lines.append(
                f"link {name}: sent={counts['sent']} delivered={counts['delivered']}"
                f" dropped={counts['dropped']}"
            )
        for kind in sorted(self.reminders_fired):
            lines.append(f"reminders {kind}: {self.reminders_fired[kind]}")
        lines.append(f"effect_log_lines: {len(self.log_lines)}")
        lines.append(f"digest: {self.digest}")
        return "\n".join(lines)

    def full_text(self) -> str:
        return self.summary() + "\n--- effect log ---\n" + "\n".join(self.log_lines) + "\n"


def scripted_weather(table: tuple[tuple[int, float, bool], ...]):
    """Step-hold weather provider over (ts, temp, raining) rows."""
    if not table:
        return lambda ts: None

    def provider(ts: int) -> Optional[WeatherReading]:
        current: Optional[WeatherReading] = None
        for row_ts, temp, raining in table:
            if row_ts <= ts:
                current = WeatherReading(temp_c=temp, raining=raining)
            else:
                break
        return current

    return provider


class ScenarioRunner:
    """Builds all components for a scenario and executes it to the horizon."""

    def __init__(self, scenario: Scenario,
                 links: Optional[dict[str, LinkConfig]] = None):
        self.scenario = scenario
        self.clock = VirtualClock()
        self.log_lines: list[str] = []
        self._scheduled_ticks: set[int] = set()
        link_cfg = dict(scenario.links)
        if links:
            link_cfg.update(links)

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
        self.gateway = Gateway(
            config,
            position_source=lambda ts: home,
            weather_provider=scripted_weather(scenario.weather),
        )
        self.server = HealthServer(clock=lambda: self.clock.now)
        self.emergency = EmergencyCentre()
        self._seed_server()

        def cfg(name: str) -> LinkConfig:
            return link_cfg.get(name, LinkConfig())

        self.links: dict[str, SimLink] = {}
        self.links["bulk"] = SimLink(
            "bulk", self.clock, self._deliver_bulk,
            cfg("bulk").latency_s, cfg("bulk").drop, self._log_drop)
        self.links["ack"] = SimLink(
            "ack", self.clock, self._deliver_ack,
            cfg("ack").latency_s, cfg("ack").drop, self._log_drop)
        self.links["doctor_sms"] = SimLink(
            "doctor_sms", self.clock, self._deliver_doctor_sms,
            cfg("doctor_sms").latency_s, cfg("doctor_sms").drop, self._log_drop)
        sms_cfg = cfg("sms")
        for target in config.alarm_targets:
            self.links[f"sms:{target}"] = SimLink(
                f"sms:{target}", self.clock,
                self._alarm_consumer(target),
                sms_cfg.latency_s, sms_cfg.drop, self._log_drop)

        self.records_generated = 0
        self._streams = [SensorStream(spec, scenario.elder_id) for spec in scenario.sensors]
        self._schedule_initial()

    # -- setup -----------------------------------------------------------

    def _seed_server(self) -> None:
        scenario = self.scenario
        self.server.add_account(scenario.elder_id, "elderly")
        for user_id, role in scenario.users.items():
            self.server.add_account(user_id, role)
        for event in scenario.events:
            if event.kind in ("thresh", "advice"):
                doctor = event.args[3] if event.kind == "thresh" else event.args[0]
                if doctor not in self.server.accounts:
                    self.server.add_account(doctor, "doctor")
                if self.server.accounts[doctor].role == "doctor":
                    self.server.assign_doctor(doctor, scenario.elder_id)
        for user_id, role in scenario.users.items():
            if role == "doctor":
                self.server.assign_doctor(user_id, scenario.elder_id)
        for grantee in scenario.grants:
            self.server.grant(scenario.elder_id, grantee)

    def _schedule_initial(self) -> None:
        horizon = self.scenario.horizon_s
        for stream in self._streams:
            spec = stream.spec
            stop = horizon if spec.until_s is None else min(spec.until_s, horizon)
            for t in range(0, stop + 1, spec.period_s):
                self.clock.schedule(t, self._emit_sample(stream, t))
        for event in self.scenario.events:
            self.clock.schedule(event.ts, self._run_event(event))
        self._reschedule_wakeup()
        # final tick drains time-driven behaviour exactly at the horizon
        self.clock.schedule(horizon, self._tick_action(horizon))

    # -- logging ---------------------------------------------------------

    def _log(self, ts: int, kind: str, data: dict) -> None:
        self.log_lines.append(
            f"{ts}|{kind}|" + json.dumps(data, sort_keys=True, separators=(",", ":"))
        )

    def _log_drop(self, link_name: str, index: int) -> None:
        self._log(self.clock.now, "link_dropped", {"link": link_name, "index": index})

    # -- gateway effect routing -------------------------------------------

    def _handle_effects(self, effects: list[Effect]) -> None:
        for effect in effects:
            self.log_lines.append(effect.line())
            if effect.kind == "sms_out":
                link = self.links.get(f"sms:{effect.data['target']}")
                if link is not None:
                    link.send(effect.data["line"] + "\n")
            elif effect.kind == "bulk_out":
                assert isinstance(effect.payload, BulkFrame)
                self.links["bulk"].send(frame_bulk(effect.payload))
        self._reschedule_wakeup()

    def _reschedule_wakeup(self) -> None:
        wakeup = self.gateway.next_wakeup(self.clock.now)
        if wakeup is None or wakeup > self.scenario.horizon_s:
            return
        if wakeup not in self._scheduled_ticks:
            self._scheduled_ticks.add(wakeup)
            self.clock.schedule(wakeup, self._tick_action(wakeup))

    def _tick_action(self, ts: int):
        def action() -> None:
            self._scheduled_ticks.discard(ts)
            self._handle_effects(self.gateway.tick(self.clock.now))

        return action

    def _emit_sample(self, stream: SensorStream, t: int):
        def action() -> None:
            rec = stream.sample(t)
            if rec is not None:
                self.records_generated += 1
                self._handle_effects(self.gateway.ingest_sample(rec, self.clock.now))

        return action

    def _run_event(self, event: ScenarioEvent):
        def action() -> None:
            now = self.clock.now
            self._log(now, "scenario_event", {"kind": event.kind, "args": list(event.args)})
            if event.kind == "thresh":
                channel = VitalChannel[event.args[0]]
                self.server.set_threshold(event.args[3], self.scenario.elder_id, channel,
                                          float(event.args[1]), float(event.args[2]))
                self._pump_server_sms()
            elif event.kind == "advice":
                self.server.send_advice(event.args[0], self.scenario.elder_id, event.args[1])
                self._pump_server_sms()
            elif event.kind in ("cancel", "confirm"):
                channel = VitalChannel[event.args[0]]
                self._handle_effects(
                    self.gateway.respond_to_alarm_prompt(channel, event.kind, now))
            elif event.kind == "quick_alarm":
                self._handle_effects(self.gateway.quick_alarm(now))
            elif event.kind == "pause":
                self._handle_effects(self.gateway.set_mode(SystemMode.PAUSED, now))
            elif event.kind == "resume":
                self._handle_effects(self.gateway.set_mode(SystemMode.MONITORING, now))

        return action

    def _pump_server_sms(self) -> None:
        from .protocol import encode_sms

        for _, sms in self.server.drain_sms_outbox():
            self.links["doctor_sms"].send(encode_sms(sms))

    # -- link consumers ----------------------------------------------------

    def _deliver_bulk(self, data: object) -> None:
        assert isinstance(data, bytes)
        frame = unframe_bulk(data)
        count = self.server.ingest_bulk(frame)
        self._log(self.clock.now, "server_ingest",
                  {"entries": count, "records": len(frame.records),
                   "events": len(frame.events)})
        self.links["ack"].send(frame_ack(count))

    def _deliver_ack(self, data: object) -> None:
        assert isinstance(data, bytes)
        count = unframe_ack(data)
        self._handle_effects(self.gateway.on_bulk_ack(count, self.clock.now))

    def _deliver_doctor_sms(self, line: object) -> None:
        assert isinstance(line, str)
        self._handle_effects(self.gateway.handle_inbound(decode_sms(line), self.clock.now))

    def _alarm_consumer(self, target: str):
        route = self.scenario.routes.get(target, "emergency" if target == "EC" else "family")

        def consume(line: object) -> None:
            assert isinstance(line, str)
            if route == "emergency":
                record = self.emergency.receive_alarm(line, self.clock.now)
                if record is not None:
                    self._log(self.clock.now, "ec_dispatch", record.to_json())
                else:
                    self._log(self.clock.now, "ec_skip", {"line": line.rstrip("\n")})
            else:
                self._log(self.clock.now, "family_sms", {"target": target,
                                                         "line": line.rstrip("\n")})

        return consume

    # -- execution ---------------------------------------------------------

    def step(self, until: int) -> int:
        """Process all events with ts <= until; returns how many ran."""
        return self.clock.step(until)

    def run(self) -> RunReport:
        self.step(self.scenario.horizon_s)
        return self.report()

    # -- reporting -----------------------------------------------------------

    def report(self) -> RunReport:
        report = RunReport(scenario=self.scenario.name or "unnamed",
                           horizon_s=self.scenario.horizon_s)
        report.log_lines = list(self.log_lines)
        report.link_counts = {name: link.counts() for name, link in self.links.items()}
        report.records_generated = self.records_generated
        subject = self.server.subjects.get(self.scenario.elder_id)
        report.records_synced = len(subject.records) if subject else 0
        report.dispatch_count = len(self.emergency.dispatches)

        prompts: dict[str, int] = {}
        dispatch_origins: list[tuple[int, str, Optional[str], int]] = []
        reminders: dict[str, int] = {}
        cancelled = 0
        for line in self.log_lines:
            ts_text, kind, payload = line.split("|", 2)
            ts = int(ts_text)
            if kind == "alarm_prompt":
                data = json.loads(payload)
                prompts[data["channel"]] = ts
            elif kind == "alarm_cancelled":
                cancelled += 1
            elif kind == "alarm_dispatched":
                data = json.loads(payload)
                channel = data.get("channel")
                origin = ts if channel is None else prompts.get(channel, ts)
                dispatch_origins.append((origin, data["sensor_id"], channel, ts))
            elif kind in ("reminder_medicine", "reminder_climate"):
                reminders[kind] = reminders.get(kind, 0) + 1
        report.cancelled_episodes = cancelled
        report.reminders_fired = reminders

        ec_by_key = {(d.elder_id, d.sensor_id, d.alarm_ts): d
                     for d in self.emergency.dispatches}
        for origin, sensor_id, channel, dispatched_ts in dispatch_origins:
            match = ec_by_key.get((self.scenario.elder_id, sensor_id, dispatched_ts))
            report.episodes.append(EpisodeReport(
                origin_ts=origin,
                dispatched_ts=dispatched_ts,
                received_ts=match.received_at if match else None,
                sensor_id=sensor_id,
                channel=channel,
            ))
        return report


def run_scenario(scenario: Scenario,
                 links: Optional[dict[str, LinkConfig]] = None) -> RunReport:
    """Execute a scenario to its horizon and summarize the run."""
    return ScenarioRunner(scenario, links=links).run()


def demo_dir():
    from importlib.resources import files

    return files("icare") / "scenarios"


def list_demos() -> list[str]:
    return sorted(p.name[: -len(".icare")] for p in demo_dir().iterdir()
                  if p.name.endswith(".icare"))


def load_demo(name: str) -> Scenario:
    from .sensors import load_scenario

    path = demo_dir() / f"{name}.icare"
    if not path.is_file():
        raise FileNotFoundError(
            f"no demo scenario {name!r}; available: {', '.join(list_demos())}")
    return load_scenario(str(path))
