"""Simulated sensor fleet: deterministic, scriptable vital-sign streams.

A :class:`SensorSpec` names a waveform generator; :func:`generate_sample`
is a pure function of ``(spec, t)``, so replaying a scenario twice yields
identical record streams.  Scenario files are a line-oriented key/value +
table format described in the README; :func:`load_scenario` validates and
reports errors with line numbers.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .protocol import VitalChannel, VitalRecord


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SensorSpec:
    """One simulated sensor: emits on its channel every ``period_s`` seconds.

    Generators:
      constant(value)         -- fixed value
      ramp(start, slope)      -- start + slope * t
      script([(ts, value)..]) -- step-hold through the listed points
    """

    sensor_id: str
    channel: VitalChannel
    period_s: int
    generator: str  # "constant" | "ramp" | "script"
    value: float = 0.0
    start: float = 0.0
    slope: float = 0.0
    points: tuple[tuple[int, float], ...] = ()
    until_s: Optional[int] = None  # stop emitting after this time

    def __post_init__(self) -> None:
        if self.period_s < 1:
            raise ValueError(f"period_s must be >= 1, got {self.period_s}")
        if self.generator not in ("constant", "ramp", "script"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "script":
            if not self.points:
                raise ValueError("script generator needs at least one point")
            times = [ts for ts, _ in self.points]
            if times != sorted(times) or len(set(times)) != len(times):
                raise ValueError("script timestamps must be strictly increasing")

    def value_at(self, t: int) -> float:
        if self.generator == "constant":
            return self.value
        if self.generator == "ramp":
            return self.start + self.slope * t
        # script: hold the value of the last point at or before t; before
        # the first point, hold the first value.
        current = self.points[0][1]
        for ts, v in self.points:
            if ts <= t:
                current = v
            else:
                break
        return current


def generate_sample(spec: SensorSpec, t: int, seq: int) -> VitalRecord | None:
    """Emit the record for time ``t``, or None off the sampling grid.

    Deterministic in ``(spec, t)``; ``seq`` and ``elder_id`` are supplied
    by the stream owner.  The elder id is filled in by the caller via
    :meth:`SensorStream.sample` in normal use; here it is left blank so
    the function stays a pure generator primitive.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t % spec.period_s != 0:
        return None
    if spec.until_s is not None and t > spec.until_s:
        return None
    return VitalRecord(
        elder_id="",
        sensor_id=spec.sensor_id,
        channel=spec.channel,
        seq=seq,
        ts=t,
        value=spec.value_at(t),
    )


class SensorStream:
    """Stateful wrapper assigning gapless seq numbers for one sensor."""

    def __init__(self, spec: SensorSpec, elder_id: str):
        self.spec = spec
        self.elder_id = elder_id
        self._seq = 0

    def sample(self, t: int) -> VitalRecord | None:
        rec = generate_sample(self.spec, t, self._seq)
        if rec is None:
            return None
        self._seq += 1
        return VitalRecord(
            elder_id=self.elder_id,
            sensor_id=rec.sensor_id,
            channel=rec.channel,
            seq=rec.seq,
            ts=rec.ts,
            value=rec.value,
        )


@dataclass(frozen=True)
class ScenarioEvent:
    """One injected event: a doctor action, a user response, or a mode
    switch, at a fixed virtual time."""

    ts: int
    kind: str  # thresh | advice | cancel | confirm | quick_alarm | pause | resume
    args: tuple[str, ...] = ()
    line_no: int | None = None


@dataclass(frozen=True)
class LinkConfig:
    latency_s: int = 0
    drop: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.latency_s < 0:
            raise ValueError("latency_s must be >= 0")


@dataclass
class GatewaySettings:
    """Scenario-level gateway configuration (mirrors the gateway config)."""

    channels: tuple[VitalChannel, ...] = ()
    alarm_wait_s: int = 30
    bulk_interval_s: int = 300
    alarm_targets: tuple[str, ...] = ("EC",)
    mode: str = "monitoring"
    medicine_period_h: Optional[int] = None
    medicine_anchor: int = 0
    climate_period_d: Optional[int] = None
    climate_anchor: int = 0
    location: tuple[float, float] = (38.88, 121.52)


@dataclass
class Scenario:
    """A fully validated scenario: sensors, injected events, wiring."""

    elder_id: str
    horizon_s: int
    sensors: list[SensorSpec] = field(default_factory=list)
    events: list[ScenarioEvent] = field(default_factory=list)
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    links: dict[str, LinkConfig] = field(default_factory=dict)
    routes: dict[str, str] = field(default_factory=dict)  # target id -> emergency|family
    users: dict[str, str] = field(default_factory=dict)  # user id -> role
    grants: tuple[str, ...] = ()
    weather: tuple[tuple[int, float, bool], ...] = ()  # (ts, temp_c, raining)
    name: str = ""


_EVENT_KINDS = {"thresh", "advice", "cancel", "confirm", "quick_alarm", "pause", "resume"}
_ROLES = {"elderly", "doctor", "family_friend", "specialist"}


def _parse_channel(text: str, line_no: int) -> VitalChannel:
    try:
        return VitalChannel[text]
    except KeyError:
        raise ScenarioError(f"unknown channel {text!r}", line_no) from None


def _parse_int(text: str, line_no: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"{what} must be an integer, got {text!r}", line_no) from None


def _parse_float(text: str, line_no: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"{what} must be a number, got {text!r}", line_no) from None


def _split_csv(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


class _Section:
    def __init__(self, name: str, arg: str, line_no: int):
        self.name = name
        self.arg = arg
        self.line_no = line_no
        self.pairs: list[tuple[str, str, int]] = []  # key, value, line
        self.rows: list[tuple[str, int]] = []  # raw row, line


def _read_sections(path: Path) -> tuple[dict[str, tuple[str, int]], list[_Section]]:
    """Split the file into top-level pairs and [section] blocks."""
    top: dict[str, tuple[str, int]] = {}
    sections: list[_Section] = []
    current: _Section | None = None
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}")
    for idx, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            inner = line[1:-1].strip()
            name, _, arg = inner.partition(" ")
            current = _Section(name.strip(), arg.strip(), idx)
            sections.append(current)
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if current is None:
                top[key] = (value, idx)
            else:
                current.pairs.append((key, value, idx))
            continue
        if current is not None:
            current.rows.append((line, idx))
            continue
        raise ScenarioError(f"expected 'key = value' before any section, got {line!r}", idx)
    return top, sections


def _section_pairs(section: _Section) -> dict[str, tuple[str, int]]:
    out: dict[str, tuple[str, int]] = {}
    for key, value, line_no in section.pairs:
        if key in out:
            raise ScenarioError(f"duplicate key {key!r} in [{section.name}]", line_no)
        out[key] = (value, line_no)
    return out


def _parse_sensor(section: _Section) -> SensorSpec:
    if not section.arg:
        raise ScenarioError("sensor section needs an id: [sensor <id>]", section.line_no)
    pairs = _section_pairs(section)

    def need(key: str) -> tuple[str, int]:
        if key not in pairs:
            raise ScenarioError(f"sensor {section.arg!r} missing {key!r}", section.line_no)
        return pairs[key]

    channel_text, ch_line = need("channel")
    generator, gen_line = need("generator")
    period_text, period_line = pairs.get("period_s", ("1", section.line_no))
    kwargs: dict = {
        "sensor_id": section.arg,
        "channel": _parse_channel(channel_text, ch_line),
        "period_s": _parse_int(period_text, period_line, "period_s"),
        "generator": generator,
    }
    if "until" in pairs:
        text, line_no = pairs["until"]
        kwargs["until_s"] = _parse_int(text, line_no, "until")
    if generator == "constant":
        text, line_no = need("value")
        kwargs["value"] = _parse_float(text, line_no, "value")
    elif generator == "ramp":
        start_text, start_line = need("start")
        slope_text, slope_line = need("slope")
        kwargs["start"] = _parse_float(start_text, start_line, "start")
        kwargs["slope"] = _parse_float(slope_text, slope_line, "slope")
    elif generator == "script":
        text, line_no = need("points")
        points = []
        for chunk in _split_csv(text):
            ts_text, sep, value_text = chunk.partition(":")
            if not sep:
                raise ScenarioError(f"script point must be 'ts:value', got {chunk!r}", line_no)
            points.append(
                (_parse_int(ts_text, line_no, "point ts"),
                 _parse_float(value_text, line_no, "point value"))
            )
        kwargs["points"] = tuple(points)
    else:
        raise ScenarioError(f"unknown generator {generator!r}", gen_line)
    try:
        return SensorSpec(**kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), section.line_no) from None


def _parse_event(row: str, line_no: int) -> ScenarioEvent:
    try:
        parts = shlex.split(row)
    except ValueError as exc:
        raise ScenarioError(f"bad event row: {exc}", line_no) from None
    if len(parts) < 2:
        raise ScenarioError("event row needs '<ts> <kind> [args...]'", line_no)
    ts = _parse_int(parts[0], line_no, "event ts")
    kind = parts[1]
    if kind not in _EVENT_KINDS:
        raise ScenarioError(f"unknown event kind {kind!r}", line_no)
    args = tuple(parts[2:])
    if kind == "thresh":
        if len(args) != 4:
            raise ScenarioError("thresh event needs '<channel> <low> <high> <doctor>'", line_no)
        _parse_channel(args[0], line_no)
        low = _parse_float(args[1], line_no, "low")
        high = _parse_float(args[2], line_no, "high")
        if low > high:
            raise ScenarioError(f"low > high ({args[1]} > {args[2]})", line_no)
    elif kind == "advice":
        if len(args) < 2:
            raise ScenarioError("advice event needs '<doctor> <text...>'", line_no)
        args = (args[0], " ".join(parts[3:]))
    elif kind in ("cancel", "confirm"):
        if len(args) != 1:
            raise ScenarioError(f"{kind} event needs '<channel>'", line_no)
        _parse_channel(args[0], line_no)
    elif len(args) != 0:
        raise ScenarioError(f"{kind} event takes no arguments", line_no)
    return ScenarioEvent(ts=ts, kind=kind, args=args, line_no=line_no)


def _parse_gateway(section: _Section, settings: GatewaySettings) -> None:
    for key, value, line_no in section.pairs:
        if key == "channels":
            settings.channels = tuple(_parse_channel(c, line_no) for c in _split_csv(value))
        elif key == "alarm_wait_s":
            settings.alarm_wait_s = _parse_int(value, line_no, key)
        elif key == "bulk_interval_s":
            settings.bulk_interval_s = _parse_int(value, line_no, key)
        elif key == "alarm_targets":
            settings.alarm_targets = tuple(_split_csv(value))
        elif key == "mode":
            if value not in ("monitoring", "paused"):
                raise ScenarioError(f"mode must be monitoring|paused, got {value!r}", line_no)
            settings.mode = value
        elif key == "medicine_period_h":
            settings.medicine_period_h = _parse_int(value, line_no, key)
        elif key == "medicine_anchor":
            settings.medicine_anchor = _parse_int(value, line_no, key)
        elif key == "climate_period_d":
            settings.climate_period_d = _parse_int(value, line_no, key)
        elif key == "climate_anchor":
            settings.climate_anchor = _parse_int(value, line_no, key)
        elif key == "location":
            parts = _split_csv(value)
            if len(parts) != 2:
                raise ScenarioError("location must be '<lat>, <lon>'", line_no)
            settings.location = (
                _parse_float(parts[0], line_no, "lat"),
                _parse_float(parts[1], line_no, "lon"),
            )
        else:
            raise ScenarioError(f"unknown gateway key {key!r}", line_no)


def _parse_link(section: _Section) -> LinkConfig:
    pairs = _section_pairs(section)
    latency = 0
    drop: frozenset[int] = frozenset()
    for key, (value, line_no) in pairs.items():
        if key == "latency_s":
            latency = _parse_int(value, line_no, "latency_s")
            if latency < 0:
                raise ScenarioError("latency_s must be >= 0", line_no)
        elif key == "drop":
            drop = frozenset(_parse_int(v, line_no, "drop index") for v in _split_csv(value))
        else:
            raise ScenarioError(f"unknown link key {key!r}", line_no)
    return LinkConfig(latency_s=latency, drop=drop)


def _parse_weather(section: _Section) -> tuple[tuple[int, float, bool], ...]:
    rows: list[tuple[int, float, bool]] = []
    for key, value, line_no in section.pairs:
        ts = _parse_int(key, line_no, "weather ts")
        parts = value.split()
        temp = _parse_float(parts[0], line_no, "temperature")
        raining = False
        if len(parts) == 2:
            if parts[1] != "rain":
                raise ScenarioError(f"weather flag must be 'rain', got {parts[1]!r}", line_no)
            raining = True
        elif len(parts) > 2:
            raise ScenarioError("weather row is '<ts> = <temp> [rain]'", line_no)
        rows.append((ts, temp, raining))
    rows.sort(key=lambda r: r[0])
    return tuple(rows)


def load_scenario(path: "str | Path") -> Scenario:
    """Parse and validate a scenario file.

    Raises :class:`ScenarioError` with a line number on parse errors,
    non-monotone scripts, events beyond the horizon, and similar
    invariant violations.
    """
    path = Path(path)
    top, sections = _read_sections(path)

    for key in ("horizon", "elder_id"):
        if key not in top:
            raise ScenarioError(f"missing required top-level key {key!r}")
    horizon = _parse_int(top["horizon"][0], top["horizon"][1], "horizon")
    if horizon < 0:
        raise ScenarioError("horizon must be >= 0", top["horizon"][1])
    scenario = Scenario(
        elder_id=top["elder_id"][0],
        horizon_s=horizon,
        name=path.stem,
    )

    seen_sensor_ids: set[str] = set()
    for section in sections:
        if section.name == "gateway":
            _parse_gateway(section, scenario.gateway)
        elif section.name == "sensor":
            spec = _parse_sensor(section)
            if spec.sensor_id in seen_sensor_ids:
                raise ScenarioError(f"duplicate sensor id {spec.sensor_id!r}", section.line_no)
            seen_sensor_ids.add(spec.sensor_id)
            scenario.sensors.append(spec)
        elif section.name == "events":
            for row, line_no in section.rows:
                event = _parse_event(row, line_no)
                if event.ts > horizon:
                    raise ScenarioError(
                        f"event at t={event.ts} is beyond horizon {horizon}", line_no
                    )
                scenario.events.append(event)
        elif section.name == "link":
            if section.arg not in ("bulk", "ack", "sms", "doctor_sms"):
                raise ScenarioError(
                    f"unknown link {section.arg!r} (expected bulk|ack|sms|doctor_sms)",
                    section.line_no,
                )
            scenario.links[section.arg] = _parse_link(section)
        elif section.name == "routes":
            for key, value, line_no in section.pairs:
                if value not in ("emergency", "family"):
                    raise ScenarioError(
                        f"route must be emergency|family, got {value!r}", line_no
                    )
                scenario.routes[key] = value
        elif section.name == "users":
            for key, value, line_no in section.pairs:
                if value not in _ROLES:
                    raise ScenarioError(f"unknown role {value!r}", line_no)
                scenario.users[key] = value
        elif section.name == "grants":
            grantees = list(scenario.grants)
            for row, line_no in section.rows:
                grantees.append(row.strip())
            for key, value, line_no in section.pairs:
                raise ScenarioError("grants section lists one grantee id per line", line_no)
            scenario.grants = tuple(grantees)
        elif section.name == "weather":
            scenario.weather = _parse_weather(section)
        else:
            raise ScenarioError(f"unknown section [{section.name}]", section.line_no)

    if not scenario.gateway.channels:
        # Default to the channels the configured sensors actually use.
        scenario.gateway.channels = tuple(
            dict.fromkeys(spec.channel for spec in scenario.sensors)
        )
    events_sorted = sorted(
        scenario.events, key=lambda e: (e.ts, e.line_no if e.line_no is not None else 0)
    )
    scenario.events = events_sorted
    return scenario
