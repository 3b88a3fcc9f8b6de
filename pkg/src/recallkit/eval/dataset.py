"""Evaluation datasets and the loader aliases for benchmark-style files.

Native shape (one JSON document)::

    {"name": str,
     "conversations": [{"id", "owners": [str], "sessions": [
         {"session_id", "lines": ["[YYYY-MM-DD HH:MM:SS] Speaker: text"], "line_ids": [str]}]}],
     "questions": [{"id", "conversation_id", "question", "question_type",
                    "answer", "evidence_ids": [str], "now": "YYYY-MM-DDTHH:MM:SSZ"}]}

Aliases accepted by ``load_dataset``:

* question fields: ``query`` for ``question``; ``gold_answer`` for ``answer``;
  ``category`` or ``type`` for ``question_type``; ``evidence`` or
  ``answer_session_ids`` for ``evidence_ids``; ``question_date`` for ``now``.
* LoCoMo-style numeric categories: 1 single_hop, 2 temporal, 3 multi_hop,
  4 open_domain. Category 5 (adversarial) has no type here and is skipped.
* LongMemEval-style type names such as ``single-session-user`` or
  ``knowledge-update`` (hyphens become underscores, ``single_session`` becomes ``ss``).
* sessions given as ``turns``/``dialogue`` of ``{speaker|role, text|content,
  dia_id}`` plus a session ``date_time``/``date`` instead of message lines.
* a top-level list of LongMemEval-style items (``haystack_sessions``,
  ``haystack_dates``, ``haystack_session_ids``), one conversation per item.

Evidence ids may name a line or a whole session; a session id stands for all
of its lines.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any

from ..model import UTC, format_message_line, format_ts, parse_message_line, parse_ts

QUESTION_TYPES = (
    "single_hop",
    "multi_hop",
    "open_domain",
    "temporal",
    "ss_user",
    "ss_assistant",
    "ss_preference",
    "knowledge_update",
    "multi_session",
    "temporal_reasoning",
)

LOCOMO_CATEGORIES = {1: "single_hop", 2: "temporal", 3: "multi_hop", 4: "open_domain"}
SKIPPED_CATEGORIES = {5}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Session:
    session_id: str
    lines: tuple[str, ...]
    line_ids: tuple[str, ...]


@dataclass(frozen=True)
class Conversation:
    id: str
    owners: tuple[str, ...]
    sessions: tuple[Session, ...]

    def latest_timestamp(self) -> datetime | None:
        stamps = [parse_message_line(line)[0] for s in self.sessions for line in s.lines]
        return max(stamps) if stamps else None


@dataclass(frozen=True)
class Question:
    id: str
    conversation_id: str
    question: str
    question_type: str
    answer: str
    evidence_ids: tuple[str, ...] = ()
    now: str | None = None


@dataclass
class EvalDataset:
    name: str
    conversations: list[Conversation]
    questions: list[Question]
    skipped: int = 0
    _by_id: dict[str, Conversation] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {c.id: c for c in self.conversations}
        if len(self._by_id) != len(self.conversations):
            raise DatasetError("duplicate conversation ids")
        qids = [q.id for q in self.questions]
        if len(set(qids)) != len(qids):
            raise DatasetError("duplicate question ids")
        for q in self.questions:
            conv = self._by_id.get(q.conversation_id)
            if conv is None:
                raise DatasetError(f"question {q.id} names unknown conversation {q.conversation_id}")
            if q.question_type not in QUESTION_TYPES:
                raise DatasetError(f"question {q.id} has unknown type {q.question_type!r}")
            known = self.evidence_universe(conv)
            missing = [e for e in q.evidence_ids if e not in known]
            if missing:
                raise DatasetError(f"question {q.id} references unknown evidence {missing}")

    def conversation(self, conv_id: str) -> Conversation:
        return self._by_id[conv_id]

    @staticmethod
    def evidence_universe(conv: Conversation) -> set[str]:
        ids = {s.session_id for s in conv.sessions}
        for s in conv.sessions:
            ids.update(s.line_ids)
        return ids

    def expand_evidence(self, q: Question) -> set[str]:
        """Evidence as line ids (session ids are expanded to their lines)."""
        conv = self.conversation(q.conversation_id)
        sessions = {s.session_id: s for s in conv.sessions}
        out: set[str] = set()
        for e in q.evidence_ids:
            out.update(sessions[e].line_ids if e in sessions else (e,))
        return out


# --- loading ---------------------------------------------------------------


def normalize_type(raw: Any) -> str | None:
    """Map a native, LoCoMo or LongMemEval question type onto QUESTION_TYPES (None = skip)."""
    if isinstance(raw, int) or (isinstance(raw, str) and raw.isdigit()):
        n = int(raw)
        if n in SKIPPED_CATEGORIES:
            return None
        if n not in LOCOMO_CATEGORIES:
            raise DatasetError(f"unknown numeric category {raw!r}")
        return LOCOMO_CATEGORIES[n]
    name = str(raw).strip().lower().replace("-", "_").replace(" ", "_")
    name = name.replace("single_session_", "ss_")
    if name == "adversarial":
        return None
    if name not in QUESTION_TYPES:
        raise DatasetError(f"unknown question type {raw!r}")
    return name


def _first(d: dict[str, Any], *names: str, default: Any = None) -> Any:
    for n in names:
        if n in d and d[n] is not None:
            return d[n]
    return default


_LOCOMO_DATE = "%I:%M %p on %d %B, %Y"
_LME_DATE = re.compile(r"^(\d{4})/(\d{2})/(\d{2})(?: \(\w+\))? (\d{2}):(\d{2})$")


def parse_session_date(text: str) -> datetime:
    text = text.strip()
    if m := _LME_DATE.match(text):
        y, mo, d, h, mi = map(int, m.groups())
        return datetime(y, mo, d, h, mi, tzinfo=UTC)
    try:
        return datetime.strptime(text, _LOCOMO_DATE).replace(tzinfo=UTC)
    except ValueError:
        pass
    try:
        return parse_ts(text)
    except ValueError:
        raise DatasetError(f"unparseable session date {text!r}") from None


def _turns_to_lines(turns: list[dict[str, Any]], start: datetime, sid: str) -> tuple[list[str], list[str]]:
    lines, ids = [], []
    for i, turn in enumerate(turns):
        speaker = str(_first(turn, "speaker", "role", default="user"))
        text = " ".join(str(_first(turn, "text", "content", default="")).split())
        ts = start + timedelta(seconds=30 * i)
        lines.append(format_message_line(ts, speaker, text))
        ids.append(str(_first(turn, "dia_id", "id", default=f"{sid}:{i + 1}")))
    return lines, ids


def _session(raw: dict[str, Any], index: int) -> Session:
    sid = str(_first(raw, "session_id", "id", default=f"S{index + 1}"))
    if "lines" in raw:
        lines = [str(x) for x in raw["lines"]]
        ids = [str(x) for x in raw.get("line_ids", [f"{sid}:{i + 1}" for i in range(len(lines))])]
    else:
        turns = _first(raw, "turns", "dialogue", "messages")
        if turns is None:
            raise DatasetError(f"session {sid} has neither lines nor turns")
        start = parse_session_date(str(_first(raw, "date_time", "date", "timestamp")))
        lines, ids = _turns_to_lines(turns, start, sid)
    if len(lines) != len(ids):
        raise DatasetError(f"session {sid}: {len(lines)} lines but {len(ids)} line ids")
    for line in lines:
        parse_message_line(line)  # raises MalformedLine early
    return Session(sid, tuple(lines), tuple(ids))


def _question(raw: dict[str, Any], index: int, default_conv: str | None) -> Question | None:
    qtype = normalize_type(_first(raw, "question_type", "category", "type"))
    if qtype is None:
        return None
    conv_id = _first(raw, "conversation_id", "sample_id", default=default_conv)
    if conv_id is None:
        raise DatasetError(f"question {index} has no conversation_id")
    evidence = _first(raw, "evidence_ids", "evidence", "answer_session_ids", default=[])
    now = _first(raw, "now", "question_date")
    if now is not None and not re.match(r"^\d{4}-\d{2}-\d{2}T", str(now)):
        now = format_ts(parse_session_date(str(now)))
    return Question(
        id=str(_first(raw, "id", "question_id", default=f"q{index + 1:04d}")),
        conversation_id=str(conv_id),
        question=str(_first(raw, "question", "query")),
        question_type=qtype,
        answer=str(_first(raw, "answer", "gold_answer", default="")),
        evidence_ids=tuple(str(e) for e in evidence),
        now=now,
    )


def _from_longmemeval(items: list[dict[str, Any]], name: str) -> EvalDataset:
    convs, questions, skipped = [], [], 0
    for i, item in enumerate(items):
        cid = str(_first(item, "question_id", "id", default=f"c{i + 1:04d}"))
        dates = item.get("haystack_dates") or []
        sids = item.get("haystack_session_ids") or [f"{cid}-s{j + 1}" for j in range(len(item["haystack_sessions"]))]
        sessions = []
        for j, turns in enumerate(item["haystack_sessions"]):
            start = parse_session_date(dates[j]) if j < len(dates) else datetime(2023, 1, 1, tzinfo=UTC) + timedelta(days=j)
            lines, ids = _turns_to_lines(turns, start, str(sids[j]))
            sessions.append(Session(str(sids[j]), tuple(lines), tuple(ids)))
        convs.append(Conversation(cid, (cid,), tuple(sessions)))
        q = _question({**item, "conversation_id": cid, "id": cid}, i, cid)
        if q is None:
            skipped += 1
        else:
            questions.append(q)
    return EvalDataset(name, convs, questions, skipped)


def parse_dataset(data: Any, name: str = "dataset") -> EvalDataset:
    if isinstance(data, list):
        return _from_longmemeval(data, name)
    convs = []
    for i, raw in enumerate(data.get("conversations", [])):
        cid = str(_first(raw, "id", "conversation_id", "sample_id", default=f"c{i + 1}"))
        owners = raw.get("owners") or [cid]
        sessions = tuple(_session(s, j) for j, s in enumerate(raw.get("sessions", [])))
        convs.append(Conversation(cid, tuple(str(o) for o in owners), sessions))
    default_conv = convs[0].id if len(convs) == 1 else None
    questions, skipped = [], 0
    for i, raw in enumerate(data.get("questions", [])):
        q = _question(raw, i, default_conv)
        if q is None:
            skipped += 1
        else:
            questions.append(q)
    return EvalDataset(str(data.get("name", name)), convs, questions, skipped)


def load_dataset(path: str | Path) -> EvalDataset:
    path = Path(path)
    return parse_dataset(json.loads(path.read_text("utf-8")), path.stem)


def bundled_dataset_path(name: str = "synthetic") -> Path:
    return Path(__file__).with_name("data") / f"{name}.json"
