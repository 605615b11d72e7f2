"""The smart-phone role: local threshold monitoring with alarm escalation,
bulk sync to the server, and the living-assistant functions.

The gateway is a single logical event loop.  Every input (sensor sample,
SMS line, tick, user response) mutates state and returns a list of
:class:`Effect` values; transports are handled outside by the runtime
shell.  Behaviour is a pure function of (config, event sequence), so the
same inputs always produce the same effect log, byte for byte.

Alarm rule per channel: a sample outside the inclusive [low, high] band
marks the flag; a second consecutive exceedance arms the alarm and opens
a cancel window of ``alarm_wait_s`` seconds; with no cancel, the next
tick at or past the deadline dispatches one ALARM SMS per configured
target.  A single in-range sample clears the flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .protocol import (
    QUICK_SENSOR_ID,
    AdviceSms,
    AlarmSms,
    BulkFrame,
    CHANNEL_ORDER,
    EventRecord,
    InboundCategory,
    Location,
    SmsMessage,
    ThreshSms,
    Threshold,
    VitalChannel,
    VitalRecord,
    classify_inbound,
    encode_sms,
)

DEFAULT_ALARM_WAIT_S = 30
DEFAULT_BULK_INTERVAL_S = 300

MEDICINE_PERIODS_H = (6, 8, 12)
CLIMATE_PERIODS_D = (1, 2, 3)


@dataclass(frozen=True, slots=True)
class WeatherReading:
    temp_c: float
    raining: bool = False


# Climate advice table, first match wins; the final row is a catch-all so
# exactly one rule fires.
CLIMATE_ADVICE_RULES: tuple[tuple[str, Callable[[WeatherReading], bool], str], ...] = (
    ("severe cold", lambda w: w.temp_c <= 0, "Severe cold outside; stay indoors and keep warm."),
    ("cold", lambda w: 0 < w.temp_c <= 10, "Cold out there; dress warmly before going out."),
    ("heat", lambda w: w.temp_c >= 30, "High heat today; drink water often and avoid the midday sun."),
    ("rain", lambda w: w.raining, "Rain expected; take an umbrella and mind slippery ground."),
    ("mild", lambda w: True, "Pleasant weather; a short walk would do you good."),
)


def climate_advice(reading: WeatherReading) -> tuple[str, str]:
    """Return (tier, advice text) for a weather reading; first match wins."""
    for tier, predicate, text in CLIMATE_ADVICE_RULES:
        if predicate(reading):
            return tier, text
    raise AssertionError("catch-all rule must match")


class SystemMode(Enum):
    MONITORING = "monitoring"
    PAUSED = "paused"


class MonitorState(Enum):
    NORMAL = "normal"
    FLAGGED = "flagged"
    ALARM_PENDING = "alarm_pending"
    DISPATCHED = "dispatched"


@dataclass
class GatewayConfig:
    elder_id: str
    enabled_channels: tuple[VitalChannel, ...]
    alarm_wait_s: int = DEFAULT_ALARM_WAIT_S
    bulk_interval_s: int = DEFAULT_BULK_INTERVAL_S
    alarm_targets: tuple[str, ...] = ()
    system_mode: SystemMode = SystemMode.MONITORING
    medicine_period_h: Optional[int] = None
    medicine_anchor: int = 0
    climate_period_d: Optional[int] = None
    climate_anchor: int = 0

    def __post_init__(self) -> None:
        self.enabled_channels = tuple(self.enabled_channels)
        self.alarm_targets = tuple(self.alarm_targets)
        if self.alarm_wait_s < 1:
            raise ValueError(f"alarm_wait_s must be >= 1, got {self.alarm_wait_s}")
        if self.bulk_interval_s < 1:
            raise ValueError(f"bulk_interval_s must be >= 1, got {self.bulk_interval_s}")
        if self.system_mode is SystemMode.MONITORING and not self.alarm_targets:
            raise ValueError("alarm_targets must not be empty in monitoring mode")
        if self.medicine_period_h is not None and self.medicine_period_h not in MEDICINE_PERIODS_H:
            raise ValueError(f"medicine_period_h must be one of {MEDICINE_PERIODS_H}")
        if self.climate_period_d is not None and self.climate_period_d not in CLIMATE_PERIODS_D:
            raise ValueError(f"climate_period_d must be one of {CLIMATE_PERIODS_D}")


@dataclass
class ChannelMonitor:
    """Per-channel alarm state machine."""

    channel: VitalChannel
    threshold: Optional[Threshold] = None
    state: MonitorState = MonitorState.NORMAL
    deadline_ts: Optional[int] = None
    alarm_sensor_id: Optional[str] = None
    last_value: Optional[float] = None
    last_ts: Optional[int] = None


@dataclass(frozen=True, slots=True)
class Effect:
    """One observable output of the gateway, loggable as a single line."""

    ts: int
    kind: str
    data: dict
    payload: object = field(default=None, compare=False)

    def line(self) -> str:
        return f"{self.ts}|{self.kind}|" + json.dumps(
            self.data, sort_keys=True, separators=(",", ":")
        )


class LocalStore:
    """On-device record store: latest per channel, pending upload log,
    alarm history, advice inbox, and per-stream ack watermarks."""

    def __init__(self) -> None:
        self.latest: dict[VitalChannel, VitalRecord] = {}
        self.pending_records: list[VitalRecord] = []
        self.pending_events: list[EventRecord] = []
        self.alarm_history: list[dict] = []
        self.advice_inbox: list[dict] = []
        self.acked_watermark: dict[str, int] = {}
        self.all_record_keys: set[tuple[str, str, int]] = set()

    def store_record(self, rec: VitalRecord) -> None:
        self.pending_records.append(rec)
        self.all_record_keys.add(rec.key)
        current = self.latest.get(rec.channel)
        if current is None or rec.ts >= current.ts:
            self.latest[rec.channel] = rec

    def queue_event(self, event: EventRecord) -> None:
        self.pending_events.append(event)

    def drain(self, n_records: int, n_events: int) -> tuple[int, int]:
        drained_records = self.pending_records[:n_records]
        del self.pending_records[:n_records]
        for rec in drained_records:
            mark = self.acked_watermark.get(rec.sensor_id, -1)
            if rec.seq > mark:
                self.acked_watermark[rec.sensor_id] = rec.seq
        n_e = min(n_events, len(self.pending_events))
        del self.pending_events[:n_e]
        return len(drained_records), n_e


class Gateway:
    """Event-driven gateway for one monitored elder."""

    def __init__(
        self,
        config: GatewayConfig,
        position_source: Optional[Callable[[int], Location]] = None,
        weather_provider: Optional[Callable[[int], Optional[WeatherReading]]] = None,
    ):
        self.config = config
        self.position_source = position_source or (lambda ts: Location(38.88, 121.52))
        self.weather_provider = weather_provider or (lambda ts: None)
        self.store = LocalStore()
        self.monitors: dict[VitalChannel, ChannelMonitor] = {
            ch: ChannelMonitor(ch) for ch in CHANNEL_ORDER if ch in config.enabled_channels
        }
        self.inert_thresholds: dict[VitalChannel, Threshold] = {}
        self._last_seq: dict[str, int] = {}
        self._last_flush: int = 0
        # Composition (records, events) of the oldest unacked flush; the
        # matching ack drains exactly that prefix of the pending log.
        self._outstanding: Optional[tuple[int, int]] = None
        self._medicine_fired = 0
        self._climate_fired = 0

    # -- helpers ---------------------------------------------------------

    @property
    def mode(self) -> SystemMode:
        return self.config.system_mode

    def _location(self, now: int) -> Location:
        return self.position_source(now)

    def _dispatch(self, sensor_id: str, channel: Optional[VitalChannel], now: int) -> list[Effect]:
        """Send one ALARM SMS per target, in target order."""
        effects: list[Effect] = []
        location = self._location(now)
        sms = AlarmSms(ts=now, elder_id=self.config.elder_id, sensor_id=sensor_id,
                       location=location)
        line = encode_sms(sms)
        for target in self.config.alarm_targets:
            effects.append(Effect(now, "sms_out", {"target": target, "line": line.rstrip("\n")},
                                  payload=sms))
        channel_name = channel.name if channel is not None else None
        effects.append(Effect(now, "alarm_dispatched",
                              {"channel": channel_name, "sensor_id": sensor_id,
                               "targets": len(self.config.alarm_targets)}))
        self.store.alarm_history.append(
            {"ts": now, "channel": channel_name, "sensor_id": sensor_id, "outcome": "dispatched"}
        )
        # "elder=<id>" prefix lets the server attribute the event
        detail = f"elder={self.config.elder_id} sensor={sensor_id}"
        if channel_name:
            detail += f" channel={channel_name}"
        self.store.queue_event(EventRecord("alarm_dispatched", now, detail))
        return effects

    # -- operations ------------------------------------------------------

    def ingest_sample(self, rec: VitalRecord, now: int) -> list[Effect]:
        """Store a sensor sample and run the monitor state machine on it."""
        if rec.elder_id != self.config.elder_id:
            return [Effect(now, "sample_rejected",
                           {"sensor_id": rec.sensor_id, "seq": rec.seq,
                            "reason": f"foreign elder_id {rec.elder_id}"})]
        last = self._last_seq.get(rec.sensor_id)
        if last is not None and rec.seq <= last:
            return [Effect(now, "sample_rejected",
                           {"sensor_id": rec.sensor_id, "seq": rec.seq,
                            "reason": f"duplicate or out-of-order seq (last {last})"})]
        self._last_seq[rec.sensor_id] = rec.seq

        self.store.store_record(rec)
        effects = [Effect(now, "sample_stored",
                          {"sensor_id": rec.sensor_id, "channel": rec.channel.name,
                           "seq": rec.seq, "value": rec.value})]

        if self.mode is not SystemMode.MONITORING:
            return effects
        monitor = self.monitors.get(rec.channel)
        if monitor is None:
            return effects  # disabled channel: stored, not monitored
        monitor.last_value = rec.value
        monitor.last_ts = rec.ts
        threshold = monitor.threshold
        if threshold is None:
            return effects  # no threshold set yet: nothing to compare against

        exceeds = not threshold.contains(rec.value)
        state = monitor.state
        if state is MonitorState.NORMAL:
            if exceeds:
                monitor.state = MonitorState.FLAGGED
                effects.append(Effect(now, "flag_marked",
                                      {"channel": rec.channel.name, "value": rec.value}))
        elif state is MonitorState.FLAGGED:
            if exceeds:
                monitor.state = MonitorState.ALARM_PENDING
                monitor.deadline_ts = now + self.config.alarm_wait_s
                monitor.alarm_sensor_id = rec.sensor_id
                effects.append(Effect(now, "alarm_prompt",
                                      {"channel": rec.channel.name, "value": rec.value,
                                       "deadline": monitor.deadline_ts}))
            else:
                monitor.state = MonitorState.NORMAL
                effects.append(Effect(now, "flag_cleared",
                                      {"channel": rec.channel.name, "value": rec.value}))
        elif state is MonitorState.ALARM_PENDING:
            pass  # stored, no state change while the cancel window is open
        elif state is MonitorState.DISPATCHED:
            if not exceeds:
                monitor.state = MonitorState.NORMAL
                effects.append(Effect(now, "monitor_recovered",
                                      {"channel": rec.channel.name, "value": rec.value}))
        return effects

    def tick(self, now: int) -> list[Effect]:
        """Advance time-driven behaviour; idempotent for the same ``now``."""
        effects: list[Effect] = []
        if self.mode is SystemMode.MONITORING:
            for channel in CHANNEL_ORDER:
                monitor = self.monitors.get(channel)
                if (monitor is not None and monitor.state is MonitorState.ALARM_PENDING
                        and monitor.deadline_ts is not None and monitor.deadline_ts <= now):
                    monitor.state = MonitorState.DISPATCHED
                    effects.extend(self._dispatch(monitor.alarm_sensor_id or "", channel, now))
                    monitor.deadline_ts = None
            effects.extend(self.due_reminders(now))
        if (self.store.pending_records or self.store.pending_events) and (
                now >= self._last_flush + self.config.bulk_interval_s):
            effects.extend(self.flush_bulk(now))
        return effects

    def respond_to_alarm_prompt(self, channel: VitalChannel, response: str, now: int) -> list[Effect]:
        """Handle the elder's cancel/confirm answer to an open alarm prompt."""
        if response not in ("cancel", "confirm"):
            raise ValueError(f"response must be cancel|confirm, got {response!r}")
        monitor = self.monitors.get(channel)
        if monitor is None or monitor.state is not MonitorState.ALARM_PENDING:
            return [Effect(now, "response_ignored",
                           {"channel": channel.name, "response": response,
                            "reason": "no alarm pending"})]
        if monitor.deadline_ts is not None and now >= monitor.deadline_ts:
            return [Effect(now, "response_ignored",
                           {"channel": channel.name, "response": response,
                            "reason": "past deadline"})]
        if response == "cancel":
            monitor.state = MonitorState.NORMAL
            monitor.deadline_ts = None
            monitor.alarm_sensor_id = None
            self.store.alarm_history.append(
                {"ts": now, "channel": channel.name, "sensor_id": None, "outcome": "cancelled"}
            )
            self.store.queue_event(EventRecord(
                "alarm_cancelled", now,
                f"elder={self.config.elder_id} channel={channel.name}"))
            return [Effect(now, "alarm_cancelled", {"channel": channel.name})]
        monitor.state = MonitorState.DISPATCHED
        sensor_id = monitor.alarm_sensor_id or ""
        monitor.deadline_ts = None
        effects = [Effect(now, "alarm_confirmed", {"channel": channel.name})]
        effects.extend(self._dispatch(sensor_id, channel, now))
        return effects

    def quick_alarm(self, now: int) -> list[Effect]:
        """Immediate dispatch on the quick button; bypasses the two-flag rule."""
        if self.mode is not SystemMode.MONITORING:
            return [Effect(now, "quick_alarm_suppressed", {"reason": "system paused"})]
        effects = [Effect(now, "quick_alarm", {})]
        effects.extend(self._dispatch(QUICK_SENSOR_ID, None, now))
        return effects

    def handle_inbound(self, msg: SmsMessage, now: int) -> list[Effect]:
        """Apply a doctor's THRESH or ADVICE message."""
        category = classify_inbound(msg)
        if category is InboundCategory.THRESHOLD:
            assert isinstance(msg, ThreshSms)
            threshold = msg.to_threshold()
            monitor = self.monitors.get(msg.channel)
            if monitor is None:
                self.inert_thresholds[msg.channel] = threshold
                return [Effect(now, "threshold_inert",
                               {"channel": msg.channel.name,
                                "reason": "channel disabled", "low": msg.low, "high": msg.high})]
            monitor.threshold = threshold
            monitor.state = MonitorState.NORMAL
            monitor.deadline_ts = None
            monitor.alarm_sensor_id = None
            return [Effect(now, "threshold_updated",
                           {"channel": msg.channel.name, "low": msg.low, "high": msg.high,
                            "doctor": msg.doctor_id})]
        if category is InboundCategory.ADVICE:
            assert isinstance(msg, AdviceSms)
            self.store.advice_inbox.append(
                {"ts": now, "doctor": msg.doctor_id, "text": msg.text}
            )
            self.store.queue_event(EventRecord(
                "advice_received", now,
                f"elder={self.config.elder_id} {msg.doctor_id}: {msg.text}"))
            return [Effect(now, "advice_received",
                           {"doctor": msg.doctor_id, "text": msg.text})]
        raise ValueError(f"gateway cannot handle inbound category {category}")

    def flush_bulk(self, now: int) -> list[Effect]:
        """Snapshot the pending log into one bulk frame for upload.

        The pending log drains only when the matching ack arrives; until
        then every flush re-sends everything still pending (at-least-once
        delivery, the server deduplicates).
        """
        records = tuple(sorted(self.store.pending_records, key=lambda r: (r.sensor_id, r.seq)))
        events = tuple(self.store.pending_events)
        frame = BulkFrame(records=records, events=events)
        if self._outstanding is None:
            self._outstanding = (len(records), len(events))
        self._last_flush = now
        return [Effect(now, "bulk_out",
                       {"records": len(records), "events": len(events)}, payload=frame)]

    def on_bulk_ack(self, count: int, now: int) -> list[Effect]:
        """Drain the pending log prefix covered by the acked flush."""
        if self._outstanding is None:
            return [Effect(now, "bulk_ack_ignored", {"count": count})]
        n_records, n_events = self._outstanding
        self._outstanding = None
        drained_r, drained_e = self.store.drain(n_records, n_events)
        return [Effect(now, "bulk_acked", {"records": drained_r, "events": drained_e})]

    def on_bulk_failure(self, now: int, reason: str = "transport error") -> list[Effect]:
        """A send failed synchronously; keep everything pending."""
        self._outstanding = None
        return [Effect(now, "bulk_failed", {"reason": reason})]

    def due_reminders(self, now: int) -> list[Effect]:
        """Emit every reminder firing scheduled at or before ``now``.

        Firings happen at anchor + k*period for k >= 1; missed firings are
        caught up one effect each, so each scheduled firing occurs exactly
        once.
        """
        if self.mode is not SystemMode.MONITORING:
            return []
        effects: list[Effect] = []
        if self.config.medicine_period_h is not None:
            period = self.config.medicine_period_h * 3600
            anchor = self.config.medicine_anchor
            k = self._medicine_fired + 1
            while anchor + k * period <= now:
                effects.append(Effect(now, "reminder_medicine",
                                      {"scheduled_ts": anchor + k * period}))
                self._medicine_fired = k
                k += 1
        if self.config.climate_period_d is not None:
            period = self.config.climate_period_d * 86400
            anchor = self.config.climate_anchor
            k = self._climate_fired + 1
            while anchor + k * period <= now:
                scheduled = anchor + k * period
                reading = self.weather_provider(scheduled)
                if reading is None:
                    data = {"scheduled_ts": scheduled, "weather": "unavailable"}
                else:
                    tier, advice = climate_advice(reading)
                    data = {"scheduled_ts": scheduled, "temp_c": reading.temp_c,
                            "raining": reading.raining, "tier": tier, "advice": advice}
                effects.append(Effect(now, "reminder_climate", data))
                self._climate_fired = k
                k += 1
        return effects

    def query_local(self, kind: str) -> list:
        """Read-only inquiry into alarms, advice, or latest vitals."""
        if kind == "alarms":
            return list(reversed(self.store.alarm_history))
        if kind == "advice":
            return list(reversed(self.store.advice_inbox))
        if kind == "latest_vitals":
            return [self.store.latest[ch] for ch in CHANNEL_ORDER if ch in self.store.latest]
        raise ValueError(f"unknown query kind {kind!r}")

    def set_mode(self, mode: SystemMode, now: int) -> list[Effect]:
        """Switch between monitoring and paused.

        Pausing withdraws open alarm prompts (they are logged as
        cancelled); monitor flags otherwise freeze until resume.
        """
        if mode is self.config.system_mode:
            return []
        effects: list[Effect] = []
        if mode is SystemMode.PAUSED:
            for channel in CHANNEL_ORDER:
                monitor = self.monitors.get(channel)
                if monitor is not None and monitor.state is MonitorState.ALARM_PENDING:
                    monitor.state = MonitorState.NORMAL
                    monitor.deadline_ts = None
                    monitor.alarm_sensor_id = None
                    self.store.alarm_history.append(
                        {"ts": now, "channel": channel.name, "sensor_id": None,
                         "outcome": "cancelled"}
                    )
                    self.store.queue_event(EventRecord(
                        "alarm_cancelled", now,
                        f"elder={self.config.elder_id} channel={channel.name} (paused)"))
                    effects.append(Effect(now, "alarm_cancelled",
                                          {"channel": channel.name, "reason": "paused"}))
        self.config.system_mode = mode
        effects.append(Effect(now, "mode_changed", {"mode": mode.value}))
        return effects

    def next_wakeup(self, now: int) -> Optional[int]:
        """Earliest future time at which tick() would do something."""
        candidates: list[int] = []
        if self.mode is SystemMode.MONITORING:
            for channel in CHANNEL_ORDER:
                monitor = self.monitors.get(channel)
                if (monitor is not None and monitor.state is MonitorState.ALARM_PENDING
                        and monitor.deadline_ts is not None):
                    candidates.append(monitor.deadline_ts)
            if self.config.medicine_period_h is not None:
                period = self.config.medicine_period_h * 3600
                candidates.append(self.config.medicine_anchor + (self._medicine_fired + 1) * period)
            if self.config.climate_period_d is not None:
                period = self.config.climate_period_d * 86400
                candidates.append(self.config.climate_anchor + (self._climate_fired + 1) * period)
        if self.store.pending_records or self.store.pending_events:
            candidates.append(max(self._last_flush + self.config.bulk_interval_s, now))
        if not candidates:
            return None
        return max(min(candidates), now)
