from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from recallkit import MemoryEngine  # noqa: E402
from recallkit.model import UTC  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PROMOTION_STEPS = [
    ("s1", "[2023-01-10 09:00:00] James: I work as Software Engineer."),
    ("s2", "[2023-09-01 09:00:00] James: I work as Senior Engineer."),
    ("s3", "[2024-05-08 10:30:00] James: I work as Tech Lead."),
]


def run_promotions(engine: MemoryEngine, owner: str = "james") -> list[str]:
    """Feed three successive job-title statements through ingestion; return new memory ids in order."""
    ids = []
    for session, line in PROMOTION_STEPS:
        engine.ingest_messages(owner, session, [line])
        summary = engine.process_pending(owner)
        ids.extend(summary.added + summary.updated)
    return ids


@pytest.fixture
def engine():
    eng = MemoryEngine(parallel_search=False)
    yield eng
    eng.close()


@pytest.fixture
def now():
    from datetime import datetime

    return datetime(2024, 6, 1, 12, 0, 0, tzinfo=UTC)


def check_chain_invariants(engine: MemoryEngine, owners=None) -> None:
    """Chain integrity, consecutive versions and three-way store coherence."""
    from recallkit.model import Status

    for owner in owners if owners is not None else engine.docs.owners():
        recs = {r.id: r for r in engine.memories(owner)}
        successors = {}
        for r in recs.values():
            if r.replaces_id is not None:
                assert r.replaces_id not in successors, f"{r.replaces_id} replaced twice"
                successors[r.replaces_id] = r.id
            assert engine.vectors.payload(r.id, owner).is_current == r.is_current, r.id
            assert engine.lexical.is_current(r.id, owner) == r.is_current, r.id
        seen = 0
        for r in recs.values():
            if r.replaces_id is not None:
                continue
            chain = [r]
            while chain[-1].id in successors:
                chain.append(recs[successors[chain[-1].id]])
            seen += len(chain)
            assert [c.version for c in chain] == list(range(1, len(chain) + 1))
            current = [c for c in chain if c.is_current]
            if chain[-1].status is Status.DELETED:
                assert current == []
            else:
                assert current == [chain[-1]]
            assert all(c.status is Status.HISTORICAL for c in chain[:-1])
        assert seen == len(recs)


# one entry per acceptance criterion: (name, passed, seconds, detail)
ACCEPTANCE: list[tuple[str, bool, float, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, seconds, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  ({seconds:.2f}s)  {detail}")
