"""Walk one user through three job changes and show how the memory store keeps them.

Run with ``python3 demos/version_chain.py``.
"""

from datetime import datetime

from recallkit import MemoryEngine
from recallkit.model import UTC

SESSIONS = [
    ("s1", "[2023-01-10 09:00:00] James: I work as Software Engineer."),
    ("s2", "[2023-09-01 09:00:00] James: I work as Senior Engineer."),
    ("s3", "[2024-05-08 10:30:00] James: I work as Tech Lead."),
]
NOW = datetime(2024, 6, 1, 12, 0, tzinfo=UTC)


def main() -> None:
    engine = MemoryEngine(parallel_search=False)
    for session, line in SESSIONS:
        engine.ingest_messages("james", session, [line])
        summary = engine.process_pending("james")
        print(f"{session}: added={len(summary.added)} updated={len(summary.updated)}")

    print("\nCurrent answer to 'What is my job?':")
    for hit in engine.search("james", "What is my job?", 3, now=NOW).hits:
        print(f"  {hit.content}  (v{hit.version}, final score {hit.score_final:.4f})")

    print("\nHistorical query 'What were all my previous jobs?':")
    for hit in engine.search("james", "What were all my previous jobs?", 10, now=NOW).hits:
        print(f"  v{hit.version} {hit.status:<10} replaces={hit.replaces_id}  {hit.content}")

    head = [m for m in engine.memories("james") if m.is_current][0]
    print(f"\nHistory of {head.id}:")
    for rec in engine.history("james", head.id):
        print(f"  {rec.id} v{rec.version} created {rec.created_at:%Y-%m-%d}  {rec.content}")


if __name__ == "__main__":
    main()
