"""Extraction operations, the extractor contract, and two extractors.

``RuleExtractor`` is a deterministic stand-in for an LLM: it turns first-person
statements into third-person facts and decides ADD/UPDATE/DELETE/NONE by
comparing each fact's (subject, relation) slot against the context memories.
``RemoteExtractor`` posts the same inputs to an HTTP endpoint.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from enum import Enum
from typing import Any, Protocol, Sequence

from .model import Category, MemoryRecord, MessageRecord, Scope


class Action(str, Enum):
    ADD = "ADD"
    UPDATE = "UPDATE"
    DELETE = "DELETE"
    NONE = "NONE"


class InvalidOperation(ValueError):
    pass


class ExtractorError(RuntimeError):
    """The extractor failed; the batch stays pending and can be retried."""


@dataclass(frozen=True)
class ExtractionOp:
    action: Action
    fact: str | None = None
    replaces_id: str | None = None
    category: Category | None = None
    event_date: date | None = None
    scope: Scope = Scope.USER
    source_message_ids: tuple[str, ...] = ()

    def validate(self) -> None:
        if self.action is Action.ADD and not (self.fact and self.category):
            raise InvalidOperation("ADD needs fact and category")
        if self.action is Action.UPDATE and not (self.fact and self.replaces_id):
            raise InvalidOperation("UPDATE needs fact and replaces_id")
        if self.action is Action.DELETE and not self.replaces_id:
            raise InvalidOperation("DELETE needs replaces_id")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"action": self.action.value}
        if self.fact is not None:
            out["fact"] = self.fact
        if self.replaces_id is not None:
            out["replaces_id"] = self.replaces_id
        if self.category is not None:
            out["category"] = self.category.value
        if self.event_date is not None:
            out["event_date"] = self.event_date.isoformat()
        if self.scope is not Scope.USER:
            out["scope"] = self.scope.value
        if self.source_message_ids:
            out["source_message_ids"] = list(self.source_message_ids)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExtractionOp:
        """Build an op from the extractor JSON shape. Ids are coerced to strings."""
        try:
            action = Action(str(data["action"]).upper())
        except (KeyError, ValueError) as exc:
            raise InvalidOperation(f"bad action in {data!r}") from exc
        replaces = data.get("replaces_id")
        category = data.get("category")
        event_date = data.get("event_date")
        try:
            op = cls(
                action=action,
                fact=data.get("fact"),
                replaces_id=None if replaces is None else str(replaces),
                category=None if category is None else Category(category),
                event_date=None if not event_date else date.fromisoformat(str(event_date)[:10]),
                scope=Scope(data.get("scope", "USER")),
                source_message_ids=tuple(str(x) for x in data.get("source_message_ids", ())),
            )
        except ValueError as exc:
            raise InvalidOperation(str(exc)) from exc
        return op


class Extractor(Protocol):
    def extract(self, new_messages: Sequence[MessageRecord], context: Sequence[MemoryRecord]) -> list[ExtractionOp]: ...


def parse_operations(payload: dict[str, Any]) -> list[ExtractionOp]:
    ops = [ExtractionOp.from_dict(item) for item in payload.get("operations", [])]
    for op in ops:
        op.validate()
    return ops


# --- rule-based reference extractor ----------------------------------------

# first match wins; checked against the lowercased fact
CATEGORY_KEYWORDS: list[tuple[Category, tuple[str, ...]]] = [
    (Category.HEALTH, ("doctor", "sick", "allergic", "allergy", "health", "hospital", "medication",
                       "diagnosed", "injury", "injured", "diet", "asthma", "therapy")),
    (Category.PROFESSIONAL, ("works", "work", "job", "engineer", "company", "career", "office",
                             "promoted", "boss", "manager", "lead", "employer", "hired", "colleague")),
    (Category.EDUCATION, ("school", "university", "college", "degree", "studies", "studying",
                          "student", "graduated", "course", "class")),
    (Category.FINANCE, ("money", "salary", "bank", "invest", "savings", "loan", "budget", "debt",
                        "mortgage", "stocks")),
    (Category.RELATIONSHIPS, ("wife", "husband", "friend", "sister", "brother", "mother", "father",
                              "mom", "dad", "partner", "girlfriend", "boyfriend", "married", "daughter",
                              "son", "family")),
    (Category.TRAVEL, ("trip", "travel", "flight", "visited", "vacation", "holiday", "flew", "abroad")),
    (Category.EVENTS, ("birthday", "wedding", "party", "concert", "meeting", "conference", "anniversary")),
    (Category.GOALS, ("wants to", "plans to", "goal", "hopes to", "dream", "intends to", "aims to")),
    (Category.HABITS, ("every day", "every morning", "usually", "always", "routine", "each week", "daily")),
    (Category.BELIEFS, ("believes", "religion", "faith", "thinks that", "values")),
    (Category.EMOTIONAL, ("feels", "excited", "happy", "sad", "anxious", "stressed", "worried",
                          "nervous", "proud", "lonely", "angry")),
    (Category.HOBBIES, ("hobby", "plays", "hiking", "painting", "guitar", "reading", "gardening",
                        "cooking", "photography", "running", "swimming", "chess", "knitting")),
    (Category.PREFERENCES, ("likes", "loves", "prefers", "favorite", "favourite", "hates", "enjoys",
                            "dislikes")),
    (Category.PERSONAL_DETAILS, ("name", "years old", "born", "lives", "is from", "age", "moved to",
                                 "birthday")),
]

# relations that hold a single value at a time; a new value supersedes the old one
SINGLE_VALUED = frozenset({"is", "works as", "works at", "works for", "works in", "lives in",
                           "lives at", "is from", "is married to", "drives", "is dating"})

_VERB_FORMS = {
    "am": "is", "'m": "is", "was": "was", "have": "has", "'ve": "has", "do": "does", "go": "goes",
}
_SUBJECT_VERB_RE = re.compile(r"^(?:i\s+(?:just\s+|also\s+|now\s+|currently\s+|recently\s+)?)(\S+)\s*(.*)$")
_MY_RE = re.compile(r"^my\s+(.+?)\s+(is|are|was|were)\s+(.+)$")
_IM_RE = re.compile(r"^i'm\s+(.+)$")
_NEGATE_RE = re.compile(
    r"^i\s+(?:no\s+longer|don't|do\s+not|stopped)\s+(\S+)(?:\s+(as|at|for|in|to|on|with))?\s*(.*?)(?:\s+anymore)?$"
)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_RELATION_RE = re.compile(
    r"^(?P<subj>.+?)\s+(?P<verb>is married to|is dating|is from|works as|works at|works for|works in|"
    r"lives in|lives at|is|are|has|drives|likes|loves|enjoys|prefers|hates|plays|owns|studies|"
    r"wants to|plans to|visited|got|\S+s)\s+(?P<obj>.+)$"
)
_ASSISTANT_NAMES = frozenset({"assistant", "ai", "bot", "system"})


_IRREGULAR_PAST = frozenset(
    "got went bought met had made took saw ran began left became broke flew wrote told said found gave "
    "kept lost won sold felt heard thought brought caught taught ate drank swam sang knew grew threw drew "
    "drove rode spoke chose woke forgot paid built spent sent lent came sat stood fell held led".split()
)


def third_person(verb: str) -> str:
    v = verb.lower()
    if v in _VERB_FORMS:
        return _VERB_FORMS[v]
    if v.endswith("ed") or v in _IRREGULAR_PAST:
        return v
    if v.endswith(("s", "sh", "ch", "x", "z", "o")):
        return v + "es"
    if v.endswith("y") and len(v) > 1 and v[-2] not in "aeiou":
        return v[:-1] + "ies"
    return v + "s"


def _clean(sentence: str) -> str:
    return sentence.strip().rstrip(".!?").strip()


def _third_person_refs(text: str, speaker: str) -> str:
    text = re.sub(r"\bmy\b", f"{speaker}'s", text, flags=re.IGNORECASE)
    return re.sub(r"\b(me|myself)\b", speaker, text, flags=re.IGNORECASE)


def first_person_to_fact(speaker: str, sentence: str) -> str | None:
    """Rewrite 'I work as X' -> 'James works as X'; None if not a self statement."""
    fact = _first_person_to_fact(speaker, sentence)
    if fact is None:
        return None
    head, _, tail = fact.partition(" ")
    return f"{head} {_third_person_refs(tail, speaker)}" if tail else fact


def _first_person_to_fact(speaker: str, sentence: str) -> str | None:
    s = _clean(sentence)
    low = s.lower()
    if m := _MY_RE.match(low):
        start = len("my ")
        noun = s[start:start + len(m[1])]
        verb = {"are": "are", "were": "were"}.get(m[2], m[2])
        rest = s[len(s) - len(m[3]):]
        return f"{speaker}'s {noun} {verb} {rest}"
    if m := _IM_RE.match(low):
        rest = s[len(s) - len(m[1]):]
        return f"{speaker} is {rest}"
    if m := _SUBJECT_VERB_RE.match(low):
        verb = m[1]
        if verb in {"think", "guess", "mean", "know", "see", "hope"} and not m[2]:
            return None
        verb_start = low.index(verb, 1)
        rest = s[verb_start + len(verb):].strip()
        phrase = f"{speaker} {third_person(verb)}"
        return f"{phrase} {rest}" if rest else None
    return None


@dataclass(frozen=True)
class Slot:
    subject: str
    relation: str
    obj: str


def parse_slot(fact: str) -> Slot | None:
    m = _RELATION_RE.match(_clean(fact).lower())
    if m is None:
        return None
    return Slot(m["subj"], m["verb"], m["obj"].strip())


def categorize(fact: str) -> Category:
    low = f" {fact.lower()} "
    for category, keys in CATEGORY_KEYWORDS:
        for key in keys:
            if re.search(rf"\b{re.escape(key)}\b", low):
                return category
    return Category.MISC


def _event_date(text: str, when: datetime) -> date | None:
    low = text.lower()
    if re.search(r"\byesterday\b", low):
        return (when - timedelta(days=1)).date()
    if re.search(r"\btoday\b", low):
        return when.date()
    return None


def _strip_relative(fact: str) -> str:
    return re.sub(r"\s+\b(yesterday|today)\b", "", fact).strip()


class RuleExtractor:
    """Deterministic extractor used offline and in tests.

    Rules, applied per sentence of each non-assistant message:

    * ``I <verb> ...`` / ``I'm ...`` / ``My <noun> is ...`` become a fact about
      the speaker, categorized by keyword.
    * A fact whose text already exists (case-insensitive) in context or earlier
      in the batch is NONE.
    * A fact on a single-valued relation (``works as``, ``lives in``, ``is`` ...)
      whose (subject, relation) matches a context memory with a different
      object becomes UPDATE of that memory.
    * ``I no longer <verb> ...`` / ``I don't <verb> ... anymore`` becomes DELETE
      of the matching context memory.
    * Anything else is ADD; sentences that are not self statements are NONE.
    """

    def __init__(self, assistant_names: frozenset[str] = _ASSISTANT_NAMES) -> None:
        self.assistant_names = assistant_names

    def extract(self, new_messages: Sequence[MessageRecord], context: Sequence[MemoryRecord]) -> list[ExtractionOp]:
        known = {m.content.lower(): m for m in context}
        slots: dict[tuple[str, str], MemoryRecord] = {}
        for mem in context:
            slot = parse_slot(mem.content)
            if slot is not None and slot.relation in SINGLE_VALUED:
                slots.setdefault((slot.subject, slot.relation), mem)
        ops: list[ExtractionOp] = []
        # latest op per single-valued slot inside this batch
        batch_slot_op: dict[tuple[str, str], int] = {}
        seen: set[str] = set()
        for msg in new_messages:
            if msg.speaker.lower() in self.assistant_names:
                continue
            for sentence in _SENTENCE_SPLIT.split(msg.text.strip()):
                op = self._sentence_op(msg, sentence, known, slots, seen)
                if op is None:
                    continue
                if op.action in (Action.ADD, Action.UPDATE) and op.fact:
                    slot = parse_slot(op.fact)
                    key = (slot.subject, slot.relation) if slot and slot.relation in SINGLE_VALUED else None
                    if key is not None and key in batch_slot_op:
                        # a later statement in the same batch wins over an earlier one
                        prev = ops[batch_slot_op[key]]
                        ops[batch_slot_op[key]] = ExtractionOp(Action.NONE, source_message_ids=prev.source_message_ids)
                        if prev.action is Action.UPDATE:
                            op = ExtractionOp(Action.UPDATE, op.fact, prev.replaces_id, op.category,
                                              op.event_date, op.scope, op.source_message_ids)
                    if key is not None:
                        batch_slot_op[key] = len(ops)
                ops.append(op)
        return ops

    def _sentence_op(self, msg, sentence, known, slots, seen) -> ExtractionOp | None:
        src = (msg.id,)
        low = _clean(sentence).lower()
        if not low:
            return None
        if m := _NEGATE_RE.match(low):
            verb = third_person(m[1])
            relation = f"{verb} {m[2]}" if m[2] else verb
            target = slots.get((msg.speaker.lower(), relation))
            if target is not None:
                return ExtractionOp(Action.DELETE, replaces_id=target.id, source_message_ids=src)
            return ExtractionOp(Action.NONE, source_message_ids=src)
        raw = first_person_to_fact(msg.speaker, sentence)
        if raw is None:
            return ExtractionOp(Action.NONE, source_message_ids=src)
        event = _event_date(raw, msg.timestamp)
        fact = _strip_relative(raw)
        scope = Scope.CONTEXT if re.search(r"\b(right now|at the moment|this session)\b", low) else Scope.USER
        if fact.lower() in known or fact.lower() in seen:
            return ExtractionOp(Action.NONE, source_message_ids=src)
        seen.add(fact.lower())
        category = categorize(fact)
        slot = parse_slot(fact)
        if slot is not None and slot.relation in SINGLE_VALUED:
            target = slots.get((slot.subject, slot.relation))
            if target is not None:
                old = parse_slot(target.content)
                if old is not None and old.obj != slot.obj:
                    return ExtractionOp(Action.UPDATE, fact, target.id, category, event, scope, src)
        return ExtractionOp(Action.ADD, fact, None, category, event, scope, src)


class RemoteExtractor:
    """POST ``{"messages": [lines], "existing_memories": [...]}`` and parse ``{"operations": [...]}``."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 30.0, client=None) -> None:
        import httpx

        self.endpoint = endpoint
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def extract(self, new_messages: Sequence[MessageRecord], context: Sequence[MemoryRecord]) -> list[ExtractionOp]:
        import httpx

        body = {
            "messages": [m.to_line() for m in new_messages],
            "existing_memories": [
                {"id": m.id, "content": m.content, "category": m.category.value} for m in context
            ],
        }
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            return parse_operations(resp.json())
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise ExtractorError(f"remote extractor failed: {exc}") from exc
