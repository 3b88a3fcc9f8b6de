import json
from datetime import date, datetime

import httpx
import pytest

from recallkit.extraction import (
    Action,
    ExtractionOp,
    ExtractorError,
    InvalidOperation,
    RemoteExtractor,
    RuleExtractor,
    categorize,
    first_person_to_fact,
    parse_operations,
    parse_slot,
    third_person,
)
from recallkit.model import UTC, Category, MemoryRecord, MessageRecord, Scope

TS = datetime(2024, 5, 8, 10, 30, tzinfo=UTC)


def msg(text, speaker="James", i=1, session="s1", ts=TS):
    return MessageRecord(f"msg{i}", "james", session, speaker, text, ts)


def mem(mid, content, category=Category.PROFESSIONAL):
    return MemoryRecord(mid, "james", content, category, created_at=TS)


def test_op_invariants():
    ExtractionOp(Action.NONE).validate()
    ExtractionOp(Action.ADD, "x", category=Category.MISC).validate()
    for bad in (ExtractionOp(Action.ADD, "x"), ExtractionOp(Action.UPDATE, "x"), ExtractionOp(Action.DELETE)):
        with pytest.raises(InvalidOperation):
            bad.validate()


def test_parse_operations_wire_shape():
    payload = {"operations": [
        {"action": "UPDATE", "fact": "James works at Google as a Senior Engineer", "replaces_id": 42,
         "category": "professional", "event_date": "2024-05-08"},
        {"action": "NONE"},
    ]}
    ops = parse_operations(payload)
    assert ops[0] == ExtractionOp(Action.UPDATE, "James works at Google as a Senior Engineer", "42",
                                  Category.PROFESSIONAL, date(2024, 5, 8))
    assert ops[1].action is Action.NONE
    assert ExtractionOp.from_dict(ops[0].to_dict()) == ops[0]
    with pytest.raises(InvalidOperation):
        parse_operations({"operations": [{"action": "MERGE"}]})
    with pytest.raises(InvalidOperation):
        parse_operations({"operations": [{"action": "ADD", "fact": "x", "category": "nonsense"}]})
    with pytest.raises(InvalidOperation):
        parse_operations({"operations": [{"action": "DELETE"}]})


@pytest.mark.parametrize("sentence,fact", [
    ("I work as Software Engineer.", "James works as Software Engineer"),
    ("I just got a new job at Google!", "James got a new job at Google"),
    ("My favorite food is sushi.", "James's favorite food is sushi"),
    ("I'm allergic to peanuts", "James is allergic to peanuts"),
    ("I love my dog", "James loves James's dog"),
    ("I watch films", "James watches films"),
    ("I study biology", "James studies biology"),
    ("The weather is nice", None),
    ("I think", None),
])
def test_first_person_rewrite(sentence, fact):
    assert first_person_to_fact("James", sentence) == fact


def test_third_person():
    assert [third_person(v) for v in ["work", "go", "have", "try", "play", "watch", "moved", "told"]] == \
        ["works", "goes", "has", "tries", "plays", "watches", "moved", "told"]


def test_slots_and_categories():
    assert parse_slot("James works as Tech Lead") == parse_slot("james works as tech lead")
    s = parse_slot("James lives in Berlin")
    assert (s.subject, s.relation, s.obj) == ("james", "lives in", "berlin")
    assert categorize("James works as Tech Lead") is Category.PROFESSIONAL
    assert categorize("James is allergic to cats") is Category.HEALTH
    assert categorize("James's favorite food is sushi") is Category.PREFERENCES
    assert categorize("James owns a purple kazoo") is Category.MISC


class TestRuleExtractor:
    ex = RuleExtractor()

    def test_add_with_category_and_sources(self):
        [op] = self.ex.extract([msg("I work as Software Engineer.")], [])
        assert op == ExtractionOp(Action.ADD, "James works as Software Engineer", None,
                                  Category.PROFESSIONAL, None, Scope.USER, ("msg1",))

    def test_assistant_lines_are_ignored(self):
        assert self.ex.extract([msg("I am an assistant.", speaker="Assistant")], []) == []

    def test_duplicate_is_none(self):
        [op] = self.ex.extract([msg("I work as Software Engineer.")], [mem("m1", "James works as Software Engineer")])
        assert op.action is Action.NONE

    def test_conflicting_single_valued_slot_updates(self):
        [op] = self.ex.extract([msg("I work as Senior Engineer.")], [mem("m1", "James works as Software Engineer")])
        assert (op.action, op.replaces_id, op.fact) == (Action.UPDATE, "m1", "James works as Senior Engineer")

    def test_multi_valued_relation_adds(self):
        [op] = self.ex.extract([msg("I like tea.")], [mem("m1", "James likes coffee", Category.PREFERENCES)])
        assert op.action is Action.ADD

    def test_negation_deletes(self):
        [op] = self.ex.extract([msg("I don't live in Paris anymore.")], [mem("m1", "James lives in Paris")])
        assert (op.action, op.replaces_id) == (Action.DELETE, "m1")
        [op] = self.ex.extract([msg("I no longer work as a nurse.")], [mem("m1", "James works as a nurse")])
        assert (op.action, op.replaces_id) == (Action.DELETE, "m1")
        [op] = self.ex.extract([msg("I no longer live in Rome.")], [])
        assert op.action is Action.NONE

    def test_relative_dates(self):
        [op] = self.ex.extract([msg("I visited Rome yesterday.")], [])
        assert op.event_date == date(2024, 5, 7)
        assert op.fact == "James visited Rome"

    def test_context_scope(self):
        [op] = self.ex.extract([msg("I'm tired right now.")], [])
        assert op.scope is Scope.CONTEXT

    def test_later_statement_in_batch_wins(self):
        ops = self.ex.extract([msg("I live in Paris.", i=1), msg("I live in Rome.", i=2)], [])
        assert [o.action for o in ops] == [Action.NONE, Action.ADD]
        assert ops[1].fact == "James lives in Rome"
        ops = self.ex.extract([msg("I live in Paris.", i=1), msg("I live in Rome.", i=2)],
                              [mem("m1", "James lives in Oslo")])
        assert [o.action for o in ops] == [Action.NONE, Action.UPDATE]
        assert ops[1].replaces_id == "m1"

    def test_replaces_ids_come_from_context(self):
        ctx = [mem("m1", "James works as a baker"), mem("m2", "James lives in Oslo")]
        lines = ["I work as a chef.", "I don't live in Oslo anymore.", "I'm happy.", "I like jazz."]
        ops = self.ex.extract([msg(t, i=i) for i, t in enumerate(lines)], ctx)
        for op in ops:
            op.validate()
            if op.replaces_id is not None:
                assert op.replaces_id in {"m1", "m2"}


def test_remote_extractor_contract():
    seen = {}

    def handler(request):
        seen.update(json.loads(request.content))
        return httpx.Response(200, json={"operations": [
            {"action": "ADD", "fact": "James got a job at Google", "category": "professional", "event_date": "2024-05-08"}]})

    ex = RemoteExtractor("http://x/extract", client=httpx.Client(transport=httpx.MockTransport(handler)))
    [op] = ex.extract([msg("I just got a new job at Google!")], [mem("7", "James works as Software Engineer")])
    assert seen == {
        "messages": ["[2024-05-08 10:30:00] James: I just got a new job at Google!"],
        "existing_memories": [{"id": "7", "content": "James works as Software Engineer", "category": "professional"}],
    }
    assert op.action is Action.ADD and op.event_date == date(2024, 5, 8)


@pytest.mark.parametrize("response", [httpx.Response(503), httpx.Response(200, text="not json"),
                                      httpx.Response(200, json={"operations": [{"action": "ADD"}]})])
def test_remote_extractor_failures(response):
    ex = RemoteExtractor("http://x/extract", client=httpx.Client(transport=httpx.MockTransport(lambda r: response)))
    with pytest.raises(ExtractorError):
        ex.extract([msg("hi")], [])
