"""Domain types, taxonomy, message-line parsing and query analysis."""

from __future__ import annotations

import calendar
import re
from dataclasses import dataclass, field, fields, replace
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import Any

UTC = timezone.utc

WIRE_TS = "%Y-%m-%dT%H:%M:%SZ"
LINE_TS = "%Y-%m-%d %H:%M:%S"


class MalformedLine(ValueError):
    """A conversation line does not follow ``[YYYY-MM-DD HH:MM:SS] Speaker: text``."""


class Category(str, Enum):
    PERSONAL_DETAILS = "personal_details"
    PROFESSIONAL = "professional"
    HEALTH = "health"
    EMOTIONAL = "emotional"
    PREFERENCES = "preferences"
    RELATIONSHIPS = "relationships"
    HOBBIES = "hobbies"
    EDUCATION = "education"
    FINANCE = "finance"
    TRAVEL = "travel"
    GOALS = "goals"
    HABITS = "habits"
    BELIEFS = "beliefs"
    EVENTS = "events"
    MISC = "misc"


class Scope(str, Enum):
    USER = "USER"  # persists across sessions
    CONTEXT = "CONTEXT"  # bound to one session


class Status(str, Enum):
    ACTIVE = "active"
    HISTORICAL = "historical"
    DELETED = "deleted"


def format_ts(ts: datetime | None) -> str | None:
    if ts is None:
        return None
    return ts.astimezone(UTC).strftime(WIRE_TS)


def parse_ts(text: str | None) -> datetime | None:
    """Parse a wire timestamp. Accepts a trailing ``Z``, an offset, or a bare date."""
    if text is None:
        return None
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=UTC)
    return parsed.astimezone(UTC)


@dataclass(frozen=True)
class MemoryRecord:
    id: str
    owner_id: str
    content: str
    category: Category
    scope: Scope = Scope.USER
    session_id: str | None = None
    version: int = 1
    replaces_id: str | None = None
    is_current: bool = True
    status: Status = Status.ACTIVE
    event_time: datetime | None = None
    created_at: datetime = field(default_factory=lambda: datetime(1970, 1, 1, tzinfo=UTC))
    source_message_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.version < 1:
            raise ValueError("version must be >= 1")
        if (self.version == 1) != (self.replaces_id is None):
            raise ValueError("version 1 records have no replaces_id and vice versa")
        if self.is_current and self.status is not Status.ACTIVE:
            raise ValueError("a current record must be active")
        if self.scope is Scope.CONTEXT and not self.session_id:
            raise ValueError("CONTEXT-scoped memories need a session_id")

    @property
    def effective_time(self) -> datetime:
        return self.event_time if self.event_time is not None else self.created_at

    def with_state(self, *, is_current: bool, status: Status) -> MemoryRecord:
        return replace(self, is_current=is_current, status=status)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "owner_id": self.owner_id,
            "content": self.content,
            "category": self.category.value,
            "scope": self.scope.value,
            "session_id": self.session_id,
            "version": self.version,
            "replaces_id": self.replaces_id,
            "is_current": self.is_current,
            "status": self.status.value,
            "event_time": format_ts(self.event_time),
            "created_at": format_ts(self.created_at),
            "source_message_ids": list(self.source_message_ids),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MemoryRecord:
        return cls(
            id=data["id"],
            owner_id=data["owner_id"],
            content=data["content"],
            category=Category(data["category"]),
            scope=Scope(data.get("scope", "USER")),
            session_id=data.get("session_id"),
            version=int(data.get("version", 1)),
            replaces_id=data.get("replaces_id"),
            is_current=bool(data.get("is_current", True)),
            status=Status(data.get("status", "active")),
            event_time=parse_ts(data.get("event_time")),
            created_at=parse_ts(data["created_at"]),
            source_message_ids=tuple(data.get("source_message_ids", ())),
        )


@dataclass(frozen=True)
class MessageRecord:
    id: str
    owner_id: str
    session_id: str
    speaker: str
    text: str
    timestamp: datetime
    processed: bool = False

    def to_line(self) -> str:
        return format_message_line(self.timestamp, self.speaker, self.text)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "owner_id": self.owner_id,
            "session_id": self.session_id,
            "speaker": self.speaker,
            "text": self.text,
            "timestamp": format_ts(self.timestamp),
            "processed": self.processed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MessageRecord:
        return cls(
            id=data["id"],
            owner_id=data["owner_id"],
            session_id=data["session_id"],
            speaker=data["speaker"],
            text=data["text"],
            timestamp=parse_ts(data["timestamp"]),
            processed=bool(data.get("processed", False)),
        )


@dataclass(frozen=True)
class FusionConfig:
    k_rrf: int = 10
    w_vector: float = 0.70
    w_bm25: float = 0.30
    shortlist_size: int = 200
    rerank_top_n: int = 50
    dedup_threshold: float = 0.99
    # per-modality candidate depth before fusion
    candidate_depth: int = 50

    def __post_init__(self) -> None:
        if abs(self.w_vector + self.w_bm25 - 1.0) > 1e-9:
            raise ValueError("w_vector + w_bm25 must equal 1")
        if self.k_rrf < 1:
            raise ValueError("k_rrf must be >= 1")
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValueError("dedup_threshold must lie in (0, 1]")
        if self.shortlist_size < 1 or self.rerank_top_n < 0 or self.candidate_depth < 1:
            raise ValueError("sizes must be positive")


DEFAULT_WINDOWS: dict[str, float] = {
    "explicit_date": 3.0,
    "day": 2.0,  # yesterday / today / tomorrow
    "weekday": 3.0,  # "last tuesday"
    "week": 10.0,
    "month": 35.0,
    "year": 370.0,
    "generic": 30.0,
}


@dataclass(frozen=True)
class TemporalConfig:
    w_fused: float = 0.60
    w_temporal: float = 0.40
    floor: float = 0.1
    window_table: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WINDOWS))

    def __post_init__(self) -> None:
        if abs(self.w_fused + self.w_temporal - 1.0) > 1e-9:
            raise ValueError("w_fused + w_temporal must equal 1")
        if self.floor <= 0:
            raise ValueError("floor must be positive")
        for name in DEFAULT_WINDOWS:
            if self.window_table.get(name, 0) <= 0:
                raise ValueError(f"window_table[{name!r}] must be a positive number")

    # frozen dataclass with a dict field: hash by value
    def __hash__(self) -> int:
        return hash((self.w_fused, self.w_temporal, self.floor, tuple(sorted(self.window_table.items()))))


@dataclass(frozen=True)
class QueryAnalysis:
    temporal_intent: bool = False
    reference_date: date | None = None
    window_days: float | None = None
    include_historical: bool = False
    temporal_class: str | None = None

    def __post_init__(self) -> None:
        if self.temporal_intent and (self.reference_date is None or self.window_days is None):
            raise ValueError("temporal intent requires reference_date and window_days")

    def to_dict(self) -> dict[str, Any]:
        return {
            "temporal_intent": self.temporal_intent,
            "reference_date": self.reference_date.isoformat() if self.reference_date else None,
            "window_days": self.window_days,
            "include_historical": self.include_historical,
            "temporal_class": self.temporal_class,
        }


@dataclass
class ScoredHit:
    """One candidate moving through the retrieval pipeline."""

    memory_id: str
    content: str = ""
    rank_vector: int | None = None
    rank_bm25: int | None = None
    score_fused: float = 0.0
    temporal_score: float | None = None
    score_final: float = 0.0
    rerank_score: float | None = None
    # annotations copied from the record once the hit is hydrated
    version: int | None = None
    replaces_id: str | None = None
    is_current: bool | None = None
    status: str | None = None
    category: str | None = None
    event_time: datetime | None = None
    created_at: datetime | None = None
    source_message_ids: tuple[str, ...] = ()
    via_chain: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, datetime):
                value = format_ts(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


# --- message lines ---------------------------------------------------------

_LINE_RE = re.compile(r"^\[(\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2})\] ([^:]+?): (.*)$", re.DOTALL)


def parse_message_line(line: str) -> tuple[datetime, str, str]:
    """Split ``[2024-05-08 10:30:00] James: text`` into (timestamp, speaker, text).

    The timestamp carries no zone on the wire and is taken as UTC.
    """
    if not line or not line.strip():
        raise MalformedLine("empty line")
    match = _LINE_RE.match(line.rstrip("\r\n"))
    if match is None:
        raise MalformedLine(f"not a message line: {line!r}")
    stamp, speaker, text = match.groups()
    try:
        ts = datetime.strptime(stamp, LINE_TS).replace(tzinfo=UTC)
    except ValueError as exc:
        raise MalformedLine(f"bad timestamp {stamp!r}") from exc
    speaker = speaker.strip()
    if not speaker:
        raise MalformedLine("empty speaker")
    return ts, speaker, text


def format_message_line(ts: datetime, speaker: str, text: str) -> str:
    return f"[{ts.astimezone(UTC).strftime(LINE_TS)}] {speaker}: {text}"


# --- query analysis --------------------------------------------------------

_MONTHS = {name.lower(): i for i, name in enumerate(calendar.month_name) if name}
_MONTHS.update({name.lower(): i for i, name in enumerate(calendar.month_abbr) if name})
_WEEKDAYS = {name.lower(): i for i, name in enumerate(calendar.day_name)}
_UNIT_DAYS = {"day": 1, "week": 7, "month": 30, "year": 365}
_UNIT_CLASS = {"day": "explicit_date", "week": "week", "month": "month", "year": "year"}
_NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

_MONTH_ALT = "|".join(sorted(_MONTHS, key=len, reverse=True))
_ISO_RE = re.compile(r"\b(\d{4})-(\d{2})-(\d{2})\b")
_MONTH_DAY_RE = re.compile(rf"\b(?:on\s+)?({_MONTH_ALT})\.?\s+(\d{{1,2}})(?:st|nd|rd|th)?\b")
_DAY_MONTH_RE = re.compile(rf"\b(?:on\s+)?(\d{{1,2}})(?:st|nd|rd|th)?\s+(?:of\s+)?({_MONTH_ALT})\b")
_AGO_RE = re.compile(r"\b(\d+|a|an|one|two|three|four|five|six|seven|eight|nine|ten)\s+(day|week|month|year)s?\s+ago\b")
_LAST_WEEKDAY_RE = re.compile(r"\blast\s+(" + "|".join(_WEEKDAYS) + r")\b")
_LAST_UNIT_RE = re.compile(r"\blast\s+(week|month|year)\b")
_DAY_WORD_RE = re.compile(r"\b(yesterday|today|tomorrow)\b")
_GENERIC_RE = re.compile(r"\b(when|ago)\b")
_HISTORY_RE = re.compile(r"previous|all my|history|journey|over time")


def _most_recent_month_day(month: int, day: int, today: date) -> date | None:
    for year in (today.year, today.year - 1):
        try:
            candidate = date(year, month, day)
        except ValueError:
            continue
        if candidate <= today:
            return candidate
    return None


def _resolve_temporal(text: str, today: date) -> tuple[date, str] | None:
    if m := _ISO_RE.search(text):
        try:
            return date(int(m[1]), int(m[2]), int(m[3])), "explicit_date"
        except ValueError:
            pass
    if m := _MONTH_DAY_RE.search(text):
        if (d := _most_recent_month_day(_MONTHS[m[1]], int(m[2]), today)) is not None:
            return d, "explicit_date"
    if m := _DAY_MONTH_RE.search(text):
        if (d := _most_recent_month_day(_MONTHS[m[2]], int(m[1]), today)) is not None:
            return d, "explicit_date"
    if m := _AGO_RE.search(text):
        count = int(m[1]) if m[1].isdigit() else _NUMBER_WORDS[m[1]]
        return today - timedelta(days=count * _UNIT_DAYS[m[2]]), _UNIT_CLASS[m[2]]
    if m := _LAST_WEEKDAY_RE.search(text):
        back = (today.weekday() - _WEEKDAYS[m[1]]) % 7 or 7
        return today - timedelta(days=back), "weekday"
    if m := _DAY_WORD_RE.search(text):
        offset = {"yesterday": -1, "today": 0, "tomorrow": 1}[m[1]]
        return today + timedelta(days=offset), "day"
    if m := _LAST_UNIT_RE.search(text):
        return today - timedelta(days=_UNIT_DAYS[m[1]]), m[1]
    if _GENERIC_RE.search(text):
        return today, "generic"
    return None


def analyze_query(query: str, now: datetime, cfg: TemporalConfig | None = None) -> QueryAnalysis:
    """Detect temporal intent and history intent in ``query``.

    Reference dates are resolved against ``now`` (taken as UTC). Patterns are
    tried from most to least specific; the first match decides the window.
    """
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    cfg = cfg or TemporalConfig()
    text = query.lower()
    if now.tzinfo is None:
        now = now.replace(tzinfo=UTC)
    today = now.astimezone(UTC).date()
    include_historical = _HISTORY_RE.search(text) is not None
    resolved = _resolve_temporal(text, today)
    if resolved is None:
        return QueryAnalysis(include_historical=include_historical)
    ref, klass = resolved
    return QueryAnalysis(
        temporal_intent=True,
        reference_date=ref,
        window_days=float(cfg.window_table[klass]),
        include_historical=include_historical,
        temporal_class=klass,
    )
