"""Messages and records exchanged between sensors, gateway, server and
emergency centre, with their exact text/binary encodings.

Two wire formats live here:

* SMS lines -- pipe-delimited, LF-terminated ASCII, one of three kinds::

      ALARM|<ts>|<elder_id>|<sensor_id>|<lat>,<lon>
      THRESH|<ts>|<elder_id>|<channel>|<low>|<high>|<doctor_id>
      ADVICE|<ts>|<elder_id>|<doctor_id>|<text...>

  The ADVICE text is the terminal field and consumes the rest of the
  line, so free text may contain pipes.

* Bulk frames -- a 4-byte big-endian length prefix followed by a UTF-8
  JSON payload listing vital records and gateway event records.  The
  acknowledgement is a frame carrying the count of accepted entries.

Everything in this module is a pure function over immutable values and
is safe to call from any thread.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Union


class EncodeError(ValueError):
    """Raised when a message cannot be put on the wire."""


class DecodeError(ValueError):
    """Raised when a wire line or frame cannot be parsed."""


class FrameError(DecodeError):
    """Raised when a bulk frame is truncated, oversized or malformed."""


class VitalChannel(Enum):
    """Monitored scalar signals."""

    ECG_HR = "ECG_HR"
    SYS_BP = "SYS_BP"
    DIA_BP = "DIA_BP"
    ACTIVITY = "ACTIVITY"

    @property
    def unit(self) -> str:
        return _CHANNEL_UNITS[self]

    @classmethod
    def parse(cls, name: str) -> "VitalChannel":
        try:
            return cls[name]
        except KeyError:
            raise DecodeError(f"unknown channel {name!r}") from None


_CHANNEL_UNITS = {
    VitalChannel.ECG_HR: "beats/min",
    VitalChannel.SYS_BP: "mmHg",
    VitalChannel.DIA_BP: "mmHg",
    VitalChannel.ACTIVITY: "counts/min",
}


# Fixed channel iteration order; used wherever per-channel output must be
# deterministic.
CHANNEL_ORDER = tuple(VitalChannel)

# Reserved sensor id for user-initiated quick alarms; no physical sensor
# ever carries it.
QUICK_SENSOR_ID = "QUICK"


def _format_number(value: float) -> str:
    """Shortest decimal text that parses back to exactly ``value``."""
    if value != value or value in (float("inf"), float("-inf")):
        raise EncodeError(f"value must be finite, got {value!r}")
    f = float(value)
    if f.is_integer():
        return str(int(f))
    return repr(f)


def _parse_number(text: str, position: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DecodeError(f"field {position}: unparsable number {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise DecodeError(f"field {position}: non-finite number {text!r}")
    return value


def _parse_int(text: str, position: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DecodeError(f"field {position}: unparsable integer {text!r}") from None


@dataclass(frozen=True)
class Location:
    """Position in decimal degrees, quantised to the 5-decimal wire grid."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon out of range: {self.lon}")
        # Quantise so that formatting to 5 decimals round-trips exactly.
        object.__setattr__(self, "lat", round(self.lat, 5))
        object.__setattr__(self, "lon", round(self.lon, 5))

    def wire(self) -> str:
        return f"{self.lat:.5f},{self.lon:.5f}"

    @classmethod
    def from_wire(cls, text: str, position: int) -> "Location":
        parts = text.split(",")
        if len(parts) != 2:
            raise DecodeError(f"field {position}: location must be '<lat>,<lon>', got {text!r}")
        lat = _parse_number(parts[0], position)
        lon = _parse_number(parts[1], position)
        try:
            return cls(lat, lon)
        except ValueError as exc:
            raise DecodeError(f"field {position}: {exc}") from None


@dataclass(frozen=True)
class VitalRecord:
    """One timestamped sensor reading; the unit of monitoring and sync.

    ``(elder_id, sensor_id, seq)`` is globally unique and ``seq`` is
    gapless per sensor stream.
    """

    elder_id: str
    sensor_id: str
    channel: VitalChannel
    seq: int
    ts: int
    value: float

    def __post_init__(self) -> None:
        if self.seq < 0:
            raise ValueError(f"seq must be non-negative, got {self.seq}")
        if self.value != self.value or self.value in (float("inf"), float("-inf")):
            raise ValueError(f"value must be finite, got {self.value!r}")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.elder_id, self.sensor_id, self.seq)

    def to_json(self) -> dict:
        return {
            "elder_id": self.elder_id,
            "sensor_id": self.sensor_id,
            "channel": self.channel.name,
            "seq": self.seq,
            "ts": self.ts,
            "value": self.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VitalRecord":
        try:
            return cls(
                elder_id=str(obj["elder_id"]),
                sensor_id=str(obj["sensor_id"]),
                channel=VitalChannel.parse(str(obj["channel"])),
                seq=int(obj["seq"]),
                ts=int(obj["ts"]),
                value=float(obj["value"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameError(f"malformed record entry: {exc}") from None


@dataclass(frozen=True)
class Threshold:
    """Inclusive [low, high] band for one channel, set remotely by a doctor."""

    channel: VitalChannel
    low: float
    high: float
    set_by: str
    ts: int

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ValueError(f"low > high ({self.low} > {self.high})")

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class AlarmSms:
    """Outbound alarm: time, elder identity, originating sensor, location."""

    ts: int
    elder_id: str
    sensor_id: str
    location: Location

    kind = "ALARM"


@dataclass(frozen=True)
class ThreshSms:
    """Doctor-pushed threshold update for one channel."""

    ts: int
    elder_id: str
    channel: VitalChannel
    low: float
    high: float
    doctor_id: str

    kind = "THRESH"

    def __post_init__(self) -> None:
        if self.low > self.high:
            raise ValueError(f"low > high ({self.low} > {self.high})")

    def to_threshold(self) -> Threshold:
        return Threshold(self.channel, self.low, self.high, self.doctor_id, self.ts)


@dataclass(frozen=True)
class AdviceSms:
    """Doctor-pushed free-text advice; text may contain pipes."""

    ts: int
    elder_id: str
    doctor_id: str
    text: str

    kind = "ADVICE"


SmsMessage = Union[AlarmSms, ThreshSms, AdviceSms]


class InboundCategory(Enum):
    """Three-way classification of traffic arriving at the gateway."""

    THRESHOLD = "threshold"
    ADVICE = "advice"
    PHYSIOLOGICAL = "physiological"


def _check_id(name: str, value: str) -> str:
    # Non-terminal fields must not contain the delimiter.
    if "|" in value:
        raise EncodeError(f"{name} must not contain '|': {value!r}")
    return value


def encode_sms(msg: SmsMessage) -> str:
    """Encode a message as one LF-terminated ASCII line."""
    if isinstance(msg, AlarmSms):
        line = (
            f"ALARM|{msg.ts}|{_check_id('elder_id', msg.elder_id)}"
            f"|{_check_id('sensor_id', msg.sensor_id)}|{msg.location.wire()}"
        )
    elif isinstance(msg, ThreshSms):
        line = (
            f"THRESH|{msg.ts}|{_check_id('elder_id', msg.elder_id)}|{msg.channel.name}"
            f"|{_format_number(msg.low)}|{_format_number(msg.high)}"
            f"|{_check_id('doctor_id', msg.doctor_id)}"
        )
    elif isinstance(msg, AdviceSms):
        line = (
            f"ADVICE|{msg.ts}|{_check_id('elder_id', msg.elder_id)}"
            f"|{_check_id('doctor_id', msg.doctor_id)}|{msg.text}"
        )
    else:
        raise EncodeError(f"not an SMS message: {msg!r}")
    if "\n" in line or "\r" in line:
        raise EncodeError("message fields must not contain line breaks")
    try:
        line.encode("ascii")
    except UnicodeEncodeError as exc:
        raise EncodeError(f"non-ASCII-encodable text: {exc}") from None
    return line + "\n"


def decode_sms(line: str) -> SmsMessage:
    """Parse one SMS line; exact inverse of :func:`encode_sms`.

    Raises :class:`DecodeError` naming the offending field position on
    unknown kind tags, wrong field counts, unparsable numbers and
    invariant violations.
    """
    text = line[:-1] if line.endswith("\n") else line
    if "\n" in text or "\r" in text:
        raise DecodeError("embedded line break")
    kind, _, rest = text.partition("|")
    if kind == "ALARM":
        fields = rest.split("|")
        if len(fields) != 4:
            raise DecodeError(f"ALARM needs 4 payload fields, got {len(fields)}")
        return AlarmSms(
            ts=_parse_int(fields[0], 1),
            elder_id=fields[1],
            sensor_id=fields[2],
            location=Location.from_wire(fields[3], 4),
        )
    if kind == "THRESH":
        fields = rest.split("|")
        if len(fields) != 6:
            raise DecodeError(f"THRESH needs 6 payload fields, got {len(fields)}")
        low = _parse_number(fields[3], 4)
        high = _parse_number(fields[4], 5)
        if low > high:
            raise DecodeError(f"low > high ({fields[3]} > {fields[4]})")
        return ThreshSms(
            ts=_parse_int(fields[0], 1),
            elder_id=fields[1],
            channel=VitalChannel.parse(fields[2]),
            low=low,
            high=high,
            doctor_id=fields[5],
        )
    if kind == "ADVICE":
        fields = rest.split("|", 3)
        if len(fields) != 4:
            raise DecodeError(f"ADVICE needs 4 payload fields, got {len(fields)}")
        return AdviceSms(
            ts=_parse_int(fields[0], 1),
            elder_id=fields[1],
            doctor_id=fields[2],
            text=fields[3],
        )
    raise DecodeError(f"unknown kind {kind!r}")


def classify_inbound(msg: "SmsMessage | VitalRecord") -> InboundCategory:
    """Sort gateway-inbound traffic into threshold / advice / physiological.

    ALARM is outbound-only; receiving one at the gateway is a protocol
    error.
    """
    if isinstance(msg, ThreshSms):
        return InboundCategory.THRESHOLD
    if isinstance(msg, AdviceSms):
        return InboundCategory.ADVICE
    if isinstance(msg, VitalRecord):
        return InboundCategory.PHYSIOLOGICAL
    if isinstance(msg, AlarmSms):
        raise DecodeError("ALARM is outbound-only; not valid gateway input")
    raise DecodeError(f"unclassifiable input: {msg!r}")


@dataclass(frozen=True)
class EventRecord:
    """Gateway event synced alongside vitals (alarms raised/cancelled,
    advice received)."""

    kind: str
    ts: int
    detail: str

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.kind, self.ts, self.detail)

    def to_json(self) -> dict:
        return {"kind": self.kind, "ts": self.ts, "detail": self.detail}

    @classmethod
    def from_json(cls, obj: dict) -> "EventRecord":
        try:
            return cls(kind=str(obj["kind"]), ts=int(obj["ts"]), detail=str(obj["detail"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FrameError(f"malformed event entry: {exc}") from None


@dataclass(frozen=True)
class BulkFrame:
    """One batched upload: vital records (sorted by sensor_id, seq) plus
    gateway event records."""

    records: tuple[VitalRecord, ...] = ()
    events: tuple[EventRecord, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "events", tuple(self.events))
        keys = [(r.sensor_id, r.seq) for r in self.records]
        if keys != sorted(keys):
            raise ValueError("records must be sorted by (sensor_id, seq)")

    def __len__(self) -> int:
        return len(self.records) + len(self.events)


_LEN = struct.Struct(">I")

# Guards against nonsense length prefixes on a live socket.
MAX_FRAME_BYTES = 16 * 1024 * 1024


def _frame(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _LEN.pack(len(body)) + body


def _unframe(data: bytes) -> dict:
    if len(data) < _LEN.size:
        raise FrameError(f"truncated frame: {len(data)} bytes, need at least {_LEN.size}")
    (declared,) = _LEN.unpack_from(data)
    if declared > MAX_FRAME_BYTES:
        raise FrameError(f"declared length {declared} exceeds limit")
    have = len(data) - _LEN.size
    if have < declared:
        raise FrameError(f"truncated frame: declared {declared} bytes, {have} present")
    if have > declared:
        raise FrameError(f"length mismatch: declared {declared} bytes, {have} present")
    try:
        payload = json.loads(data[_LEN.size :].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"malformed payload: {exc}") from None
    if not isinstance(payload, dict):
        raise FrameError("malformed payload: not an object")
    return payload


def frame_bulk(frame: BulkFrame) -> bytes:
    """Serialize a bulk frame: u32 big-endian length + JSON payload."""
    return _frame(
        {
            "records": [r.to_json() for r in frame.records],
            "events": [e.to_json() for e in frame.events],
        }
    )


def unframe_bulk(data: bytes) -> BulkFrame:
    """Exact inverse of :func:`frame_bulk`."""
    payload = _unframe(data)
    records = payload.get("records")
    events = payload.get("events", [])
    if not isinstance(records, list) or not isinstance(events, list):
        raise FrameError("malformed payload: records/events must be lists")
    try:
        return BulkFrame(
            records=tuple(VitalRecord.from_json(r) for r in records),
            events=tuple(EventRecord.from_json(e) for e in events),
        )
    except ValueError as exc:
        raise FrameError(str(exc)) from None


def frame_ack(count: int) -> bytes:
    """Acknowledgement frame carrying the count of accepted entries."""
    if count < 0:
        raise EncodeError(f"ack count must be non-negative, got {count}")
    return _frame({"ack": count})


def unframe_ack(data: bytes) -> int:
    payload = _unframe(data)
    count = payload.get("ack")
    if not isinstance(count, int) or count < 0:
        raise FrameError(f"malformed ack: {payload!r}")
    return count


def read_frame(read) -> bytes:
    """Read one complete frame from a stream.

    ``read(n)`` must behave like ``socket.recv``/``file.read``: return at
    most ``n`` bytes, empty at EOF.  Returns the full frame bytes
    (prefix included) so they can be handed to :func:`unframe_bulk` or
    :func:`unframe_ack`.
    """
    header = _read_exact(read, _LEN.size)
    (declared,) = _LEN.unpack(header)
    if declared > MAX_FRAME_BYTES:
        raise FrameError(f"declared length {declared} exceeds limit")
    return header + _read_exact(read, declared)


def _read_exact(read, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = read(remaining)
        if not chunk:
            raise FrameError(f"stream closed mid-frame ({remaining} bytes missing)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
