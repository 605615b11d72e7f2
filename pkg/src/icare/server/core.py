"""Personal health information system and medical guidance.

Holds per-subject record stores (bulk ingest with key-level dedup), the
role/grant access layer, doctor threshold pushes and advice over the SMS
outbox, message threads, and the confidence-ranked knowledge base.

All mutations are serialized under one lock, so concurrent clients see
linearizable updates and consistent reads.  Optionally every store
journals to an append-only JSONL file and is rebuilt by replay at
startup.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from ..protocol import (
    AdviceSms,
    BulkFrame,
    CHANNEL_ORDER,
    EventRecord,
    ThreshSms,
    Threshold,
    VitalChannel,
    VitalRecord,
)


class ServerError(Exception):
    """Base class for server-side request failures."""


class AuthorizationError(ServerError):
    """The requester is not allowed to do this."""


class ValidationError(ServerError, ValueError):
    """The request payload violates an invariant."""


class NotFoundError(ServerError):
    """The addressed entity does not exist."""


ROLES = ("elderly", "doctor", "family_friend", "specialist")

# Confidence bands over the knowledge score.
CREDIT_MIN = 0.7
GENERAL_MIN = 0.3
FEEDBACK_STEP = 0.05
VALID_RATINGS = (0.0, 0.5, 1.0)


def confidence_level(score: float) -> str:
    if score >= CREDIT_MIN:
        return "credit"
    if score >= GENERAL_MIN:
        return "general"
    return "weak"


@dataclass
class UserAccount:
    user_id: str
    role: str
    name: str = ""
    token: str = ""


@dataclass
class KnowledgeEntry:
    """Keyword/area-indexed medical record with a dynamic confidence score.

    score = clamp(mean(ratings) + 0.05 * (helpful - unhelpful), 0, 1),
    rounded to 4 decimals; with no ratings the mean term is 0.5.
    """

    entry_id: str
    keywords: tuple[str, ...]
    area: str
    body: str
    author: str
    created_ts: int
    evaluations: dict[str, float] = field(default_factory=dict)
    helpful: int = 0
    unhelpful: int = 0

    @property
    def feedback_delta(self) -> float:
        return round(FEEDBACK_STEP * (self.helpful - self.unhelpful), 4)

    @property
    def score(self) -> float:
        if self.evaluations:
            mean = sum(self.evaluations.values()) / len(self.evaluations)
        else:
            mean = 0.5
        raw = mean + self.feedback_delta
        return round(min(1.0, max(0.0, raw)), 4)

    @property
    def level(self) -> str:
        return confidence_level(self.score)

    def to_json(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "keywords": list(self.keywords),
            "area": self.area,
            "body": self.body,
            "author": self.author,
            "created_ts": self.created_ts,
            "score": self.score,
            "level": self.level,
            "evaluations": len(self.evaluations),
            "feedback_delta": self.feedback_delta,
        }


@dataclass
class Message:
    author: str
    ts: int
    text: str


@dataclass
class MessageThread:
    thread_id: str
    participants: tuple[str, ...]
    messages: list[Message] = field(default_factory=list)


class SubjectStore:
    """Records, thresholds and event history for one monitored elder."""

    def __init__(self, subject_id: str):
        self.subject_id = subject_id
        self.records: dict[tuple[str, int], VitalRecord] = {}
        self.events: list[EventRecord] = []
        self._event_keys: set[tuple[str, int, str]] = set()
        self.thresholds: dict[VitalChannel, Threshold] = {}

    def add_record(self, rec: VitalRecord) -> bool:
        key = (rec.sensor_id, rec.seq)
        if key in self.records:
            return False
        self.records[key] = rec
        return True

    def add_event(self, event: EventRecord) -> bool:
        if event.key in self._event_keys:
            return False
        self._event_keys.add(event.key)
        self.events.append(event)
        return True


class Journal:
    """Append-only JSONL journal, one file per store."""

    def __init__(self, directory: Optional[Path]):
        self.directory = Path(directory) if directory else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self.enabled = True

    def append(self, stream: str, entry: dict) -> None:
        if self.directory is None or not self.enabled:
            return
        path = self.directory / f"{stream}.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")

    def replay(self, stream: str) -> Iterable[dict]:
        if self.directory is None:
            return []
        path = self.directory / f"{stream}.jsonl"
        if not path.exists():
            return []
        entries = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    entries.append(json.loads(line))
        return entries


class HealthServer:
    """The server role: PHIS record store + medical guidance."""

    def __init__(self, journal_dir: "str | Path | None" = None,
                 clock: Optional[Callable[[], int]] = None):
        self.clock = clock or (lambda: int(time.time()))
        self._lock = threading.RLock()
        self.accounts: dict[str, UserAccount] = {}
        self._tokens: dict[str, str] = {}
        self._assignments: set[tuple[str, str]] = set()  # (doctor, subject)
        self._grants: set[tuple[str, str]] = set()  # (subject, grantee)
        self.subjects: dict[str, SubjectStore] = {}
        self.knowledge: dict[str, KnowledgeEntry] = {}
        self.threads: dict[str, MessageThread] = {}
        self._next_entry = 1
        self._next_thread = 1
        self.sms_outbox: list[tuple[str, "ThreshSms | AdviceSms"]] = []
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._journal = Journal(Path(journal_dir) if journal_dir else None)
        self._replay()

    # -- journaling -------------------------------------------------------

    def _replay(self) -> None:
        self._journal.enabled = False
        try:
            for entry in self._journal.replay("accounts"):
                op = entry["op"]
                if op == "account":
                    self.add_account(entry["user_id"], entry["role"],
                                     entry.get("name", ""), entry.get("token"))
                elif op == "assign":
                    self.assign_doctor(entry["doctor"], entry["subject"])
                elif op == "grant":
                    self.grant(entry["subject"], entry["grantee"], by=entry["subject"])
            for entry in self._journal.replay("records"):
                op = entry["op"]
                if op == "record":
                    self._ingest_record(VitalRecord.from_json(entry["record"]))
                elif op == "event":
                    self._ingest_event(entry["elder_id"], EventRecord.from_json(entry["event"]))
                elif op == "threshold":
                    self._store_threshold(
                        entry["subject"],
                        Threshold(VitalChannel[entry["channel"]], entry["low"],
                                  entry["high"], entry["set_by"], entry["ts"]),
                    )
            for entry in self._journal.replay("knowledge"):
                op = entry["op"]
                if op == "add":
                    self.add_knowledge(entry["author"], entry["keywords"], entry["area"],
                                       entry["body"], _id=entry["entry_id"],
                                       _ts=entry["created_ts"])
                elif op == "evaluate":
                    self.evaluate_knowledge(entry["specialist"], entry["entry_id"],
                                            entry["rating"])
                elif op == "feedback":
                    self.record_feedback(entry["user"], entry["entry_id"], entry["verdict"])
            for entry in self._journal.replay("threads"):
                op = entry["op"]
                if op == "open":
                    self.open_thread(entry["creator"], entry["participants"],
                                     _id=entry["thread_id"])
                elif op == "post":
                    self.post_message(entry["author"], entry["thread_id"], entry["text"],
                                      _ts=entry["ts"])
        finally:
            self._journal.enabled = True

    # -- accounts, roles, grants ------------------------------------------

    def add_account(self, user_id: str, role: str, name: str = "",
                    token: Optional[str] = None) -> UserAccount:
        if role not in ROLES:
            raise ValidationError(f"unknown role {role!r}")
        with self._lock:
            if user_id in self.accounts:
                return self.accounts[user_id]
            token = token or f"tok-{user_id}"
            account = UserAccount(user_id, role, name, token)
            self.accounts[user_id] = account
            self._tokens[token] = user_id
            if role == "elderly":
                self.subjects.setdefault(user_id, SubjectStore(user_id))
            self._journal.append("accounts", {"op": "account", "user_id": user_id,
                                              "role": role, "name": name, "token": token})
            return account

    def authenticate(self, token: str) -> str:
        user_id = self._tokens.get(token or "")
        if user_id is None:
            raise AuthorizationError("invalid token")
        return user_id

    def _account(self, user_id: str) -> UserAccount:
        account = self.accounts.get(user_id)
        if account is None:
            raise AuthorizationError(f"unknown user {user_id!r}")
        return account

    def assign_doctor(self, doctor_id: str, subject_id: str) -> None:
        with self._lock:
            if self._account(doctor_id).role != "doctor":
                raise ValidationError(f"{doctor_id} is not a doctor")
            self._subject_store(subject_id)
            self._assignments.add((doctor_id, subject_id))
            self._journal.append("accounts", {"op": "assign", "doctor": doctor_id,
                                              "subject": subject_id})

    def grant(self, subject_id: str, grantee_id: str, by: Optional[str] = None) -> None:
        """Subject-issued view grant; ``by=None`` is the admin bootstrap."""
        with self._lock:
            if by is not None and by != subject_id:
                raise AuthorizationError("only the subject may grant access")
            self._subject_store(subject_id)
            self._account(grantee_id)
            self._grants.add((subject_id, grantee_id))
            self._journal.append("accounts", {"op": "grant", "subject": subject_id,
                                              "grantee": grantee_id})

    def can_view(self, viewer_id: str, subject_id: str) -> bool:
        viewer = self.accounts.get(viewer_id)
        if viewer is None:
            return False
        if viewer_id == subject_id:
            return True
        if viewer.role == "doctor" and (viewer_id, subject_id) in self._assignments:
            return True
        return (subject_id, viewer_id) in self._grants

    def _require_view(self, viewer_id: str, subject_id: str) -> None:
        self._subject_store(subject_id)
        if not self.can_view(viewer_id, subject_id):
            raise AuthorizationError(f"{viewer_id} may not view {subject_id}")

    def _subject_store(self, subject_id: str) -> SubjectStore:
        store = self.subjects.get(subject_id)
        if store is None:
            raise NotFoundError(f"unknown subject {subject_id!r}")
        return store

    # -- bulk ingest -------------------------------------------------------

    def _ingest_record(self, rec: VitalRecord) -> bool:
        store = self.subjects.setdefault(rec.elder_id, SubjectStore(rec.elder_id))
        return store.add_record(rec)

    @staticmethod
    def _event_elder(event: EventRecord) -> Optional[str]:
        # Gateway event details start with "elder=<id> ".
        if event.detail.startswith("elder="):
            return event.detail.split(" ", 1)[0][len("elder="):]
        return None

    def _ingest_event(self, elder_id: Optional[str], event: EventRecord) -> bool:
        if elder_id is None:
            return False
        store = self.subjects.setdefault(elder_id, SubjectStore(elder_id))
        return store.add_event(event)

    def ingest_bulk(self, frame: BulkFrame) -> int:
        """Insert new-key records, skip duplicates; returns the count of
        entries processed (duplicates included) so the sender drains."""
        with self._lock:
            processed = 0
            for rec in frame.records:
                processed += 1
                if self._ingest_record(rec):
                    self._journal.append("records", {"op": "record", "record": rec.to_json()})
                    self._notify(rec.elder_id, {"type": "vital", "record": rec.to_json()})
            for event in frame.events:
                processed += 1
                elder_id = self._event_elder(event)
                if self._ingest_event(elder_id, event):
                    self._journal.append("records", {"op": "event", "elder_id": elder_id,
                                                     "event": event.to_json()})
                    self._notify(elder_id, {"type": "event", "event": event.to_json()})
            return processed

    # -- views -------------------------------------------------------------

    def view_records(self, viewer_id: str, subject_id: str,
                     since: Optional[int] = None) -> list[VitalRecord]:
        with self._lock:
            self._require_view(viewer_id, subject_id)
            store = self._subject_store(subject_id)
            records = [r for r in store.records.values()
                       if since is None or r.ts >= since]
            records.sort(key=lambda r: (r.ts, r.sensor_id, r.seq))
            return records

    def view_thresholds(self, viewer_id: str, subject_id: str) -> dict[VitalChannel, Threshold]:
        with self._lock:
            self._require_view(viewer_id, subject_id)
            store = self._subject_store(subject_id)
            return {ch: store.thresholds[ch] for ch in CHANNEL_ORDER if ch in store.thresholds}

    def view_events(self, viewer_id: str, subject_id: str,
                    kind_prefix: str = "") -> list[EventRecord]:
        with self._lock:
            self._require_view(viewer_id, subject_id)
            store = self._subject_store(subject_id)
            events = [e for e in store.events if e.kind.startswith(kind_prefix)]
            return sorted(events, key=lambda e: e.ts)

    # -- doctor operations ---------------------------------------------------

    def _require_assigned_doctor(self, doctor_id: str, subject_id: str) -> None:
        if self._account(doctor_id).role != "doctor":
            raise AuthorizationError(f"{doctor_id} is not a doctor")
        self._subject_store(subject_id)
        if (doctor_id, subject_id) not in self._assignments:
            raise AuthorizationError(f"{doctor_id} is not assigned to {subject_id}")

    def _store_threshold(self, subject_id: str, threshold: Threshold) -> None:
        store = self.subjects.setdefault(subject_id, SubjectStore(subject_id))
        store.thresholds[threshold.channel] = threshold

    def set_threshold(self, doctor_id: str, subject_id: str, channel: VitalChannel,
                      low: float, high: float) -> ThreshSms:
        """Record the new band and queue the THRESH SMS toward the gateway."""
        with self._lock:
            self._require_assigned_doctor(doctor_id, subject_id)
            if low > high:
                raise ValidationError(f"low > high ({low} > {high})")
            ts = self.clock()
            threshold = Threshold(channel, float(low), float(high), doctor_id, ts)
            self._store_threshold(subject_id, threshold)
            self._journal.append("records", {"op": "threshold", "subject": subject_id,
                                             "channel": channel.name, "low": float(low),
                                             "high": float(high), "set_by": doctor_id,
                                             "ts": ts})
            sms = ThreshSms(ts=ts, elder_id=subject_id, channel=channel,
                            low=float(low), high=float(high), doctor_id=doctor_id)
            self.sms_outbox.append((subject_id, sms))
            self._notify(subject_id, {"type": "threshold", "channel": channel.name,
                                      "low": float(low), "high": float(high),
                                      "set_by": doctor_id, "ts": ts})
            return sms

    def send_advice(self, doctor_id: str, subject_id: str, text: str) -> AdviceSms:
        with self._lock:
            self._require_assigned_doctor(doctor_id, subject_id)
            if not text:
                raise ValidationError("advice text must not be empty")
            ts = self.clock()
            store = self._subject_store(subject_id)
            event = EventRecord("advice_sent", ts, f"elder={subject_id} {doctor_id}: {text}")
            if store.add_event(event):
                self._journal.append("records", {"op": "event", "elder_id": subject_id,
                                                 "event": event.to_json()})
            sms = AdviceSms(ts=ts, elder_id=subject_id, doctor_id=doctor_id, text=text)
            self.sms_outbox.append((subject_id, sms))
            self._notify(subject_id, {"type": "event", "event": event.to_json()})
            return sms

    def drain_sms_outbox(self) -> list[tuple[str, "ThreshSms | AdviceSms"]]:
        with self._lock:
            out = self.sms_outbox
            self.sms_outbox = []
            return out

    # -- communication platform ----------------------------------------------

    def open_thread(self, creator: str, participants: Iterable[str],
                    _id: Optional[str] = None) -> MessageThread:
        with self._lock:
            participants = tuple(dict.fromkeys(participants))
            if creator not in participants:
                raise ValidationError("creator must be a participant")
            if len(participants) < 2:
                raise ValidationError("a thread needs at least two participants")
            for user_id in participants:
                self._account(user_id)
            thread_id = _id or f"T{self._next_thread:04d}"
            self._next_thread = max(self._next_thread + 1,
                                    int(thread_id[1:]) + 1 if thread_id[1:].isdigit() else 0)
            thread = MessageThread(thread_id, participants)
            self.threads[thread_id] = thread
            self._journal.append("threads", {"op": "open", "creator": creator,
                                             "participants": list(participants),
                                             "thread_id": thread_id})
            return thread

    def _thread(self, thread_id: str) -> MessageThread:
        thread = self.threads.get(thread_id)
        if thread is None:
            raise NotFoundError(f"unknown thread {thread_id!r}")
        return thread

    def post_message(self, author: str, thread_id: str, text: str,
                     _ts: Optional[int] = None) -> Message:
        with self._lock:
            thread = self._thread(thread_id)
            if author not in thread.participants:
                raise AuthorizationError(f"{author} is not a participant of {thread_id}")
            if not text:
                raise ValidationError("message text must not be empty")
            message = Message(author=author, ts=_ts if _ts is not None else self.clock(),
                              text=text)
            thread.messages.append(message)
            self._journal.append("threads", {"op": "post", "author": author,
                                             "thread_id": thread_id, "text": text,
                                             "ts": message.ts})
            return message

    def read_thread(self, user_id: str, thread_id: str) -> list[Message]:
        with self._lock:
            thread = self._thread(thread_id)
            if user_id not in thread.participants:
                raise AuthorizationError(f"{user_id} is not a participant of {thread_id}")
            return list(thread.messages)

    # -- knowledge base --------------------------------------------------------

    def add_knowledge(self, author: str, keywords: Iterable[str], area: str, body: str,
                      _id: Optional[str] = None, _ts: Optional[int] = None) -> KnowledgeEntry:
        with self._lock:
            if self._account(author).role != "specialist":
                raise AuthorizationError("only specialists may add knowledge")
            keywords = tuple(k.strip() for k in keywords if k.strip())
            if not keywords:
                raise ValidationError("keyword list must not be empty")
            if not body:
                raise ValidationError("body must not be empty")
            entry_id = _id or f"K{self._next_entry:04d}"
            self._next_entry = max(self._next_entry + 1,
                                   int(entry_id[1:]) + 1 if entry_id[1:].isdigit() else 0)
            entry = KnowledgeEntry(
                entry_id=entry_id,
                keywords=keywords,
                area=area,
                body=body,
                author=author,
                created_ts=_ts if _ts is not None else self.clock(),
            )
            self.knowledge[entry_id] = entry
            self._journal.append("knowledge", {"op": "add", "author": author,
                                               "keywords": list(keywords), "area": area,
                                               "body": body, "entry_id": entry_id,
                                               "created_ts": entry.created_ts})
            return entry

    def _entry(self, entry_id: str) -> KnowledgeEntry:
        entry = self.knowledge.get(entry_id)
        if entry is None:
            raise NotFoundError(f"unknown knowledge entry {entry_id!r}")
        return entry

    def evaluate_knowledge(self, specialist: str, entry_id: str, rating: float) -> KnowledgeEntry:
        """One evaluation per specialist per entry; re-rating replaces."""
        with self._lock:
            if self._account(specialist).role != "specialist":
                raise AuthorizationError("only specialists may evaluate knowledge")
            if rating not in VALID_RATINGS:
                raise ValidationError(f"rating must be one of {VALID_RATINGS}, got {rating}")
            entry = self._entry(entry_id)
            entry.evaluations[specialist] = float(rating)
            self._journal.append("knowledge", {"op": "evaluate", "specialist": specialist,
                                               "entry_id": entry_id, "rating": float(rating)})
            return entry

    def record_feedback(self, user_id: str, entry_id: str, verdict: str) -> KnowledgeEntry:
        with self._lock:
            self._account(user_id)
            entry = self._entry(entry_id)
            if verdict == "helpful":
                entry.helpful += 1
            elif verdict == "unhelpful":
                entry.unhelpful += 1
            else:
                raise ValidationError(f"verdict must be helpful|unhelpful, got {verdict!r}")
            self._journal.append("knowledge", {"op": "feedback", "user": user_id,
                                               "entry_id": entry_id, "verdict": verdict})
            return entry

    def query_knowledge(self, keyword: str, area: str = "",
                        min_level: str = "general") -> list[KnowledgeEntry]:
        """Ranked search: score-descending, ties newest first; entries below
        ``min_level`` are excluded and weak entries are never returned."""
        if not keyword:
            raise ValidationError("keyword must not be empty")
        if min_level not in ("credit", "general"):
            raise ValidationError(f"min_level must be credit|general, got {min_level!r}")
        needle = keyword.lower()
        floor = CREDIT_MIN if min_level == "credit" else GENERAL_MIN
        with self._lock:
            matches = [
                entry for entry in self.knowledge.values()
                if needle in (k.lower() for k in entry.keywords)
                and (not area or entry.area.lower() == area.lower())
                and entry.score >= floor
            ]
            matches.sort(key=lambda e: (-e.score, -e.created_ts, e.entry_id))
            return matches

    # -- live push ---------------------------------------------------------

    def subscribe(self, subject_id: str) -> queue.Queue:
        with self._lock:
            self._subject_store(subject_id)
            q: queue.Queue = queue.Queue()
            self._subscribers.setdefault(subject_id, []).append(q)
            return q

    def unsubscribe(self, subject_id: str, q: queue.Queue) -> None:
        with self._lock:
            subs = self._subscribers.get(subject_id, [])
            if q in subs:
                subs.remove(q)

    def _notify(self, subject_id: Optional[str], item: dict) -> None:
        if subject_id is None:
            return
        for q in self._subscribers.get(subject_id, []):
            q.put(item)
