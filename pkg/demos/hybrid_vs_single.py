"""Contrast vector-only, keyword-only and hybrid retrieval on two kinds of query.

A rare name is easy for keyword search and invisible to the reference embedder.
A paraphrase is the opposite. Hybrid fusion recovers both.
Run with ``python3 demos/hybrid_vs_single.py``.
"""

from datetime import datetime

from recallkit import Action, Category, ExtractionOp, LexicalQuery, MemoryEngine
from recallkit.lexical import EmptyQuery
from recallkit.model import UTC
from recallkit.vectors import VectorFilter

DOCS = [
    "Zorblat garden",
    "James talked about journey abroad",
    "James talked about holiday tour",
    "James is into dog hound",
    "James is into cook chef",
    "James is into hike trail",
]
QUERIES = ["zorblat trip", "puppy canine", "baking recipe", "trekking mountains"]


def main() -> None:
    engine = MemoryEngine(parallel_search=False)
    ops = [ExtractionOp(Action.ADD, d, category=Category.MISC) for d in DOCS]
    engine.apply_operations("u", ops, now=datetime(2024, 1, 1, tzinfo=UTC))
    content = {m.id: m.content for m in engine.memories("u")}
    for q in QUERIES:
        qv = engine.embedder.embed(q, "query")
        vec = [content[m] for m, _ in engine.vectors.two_stage_search(qv, VectorFilter("u"), 2)]
        try:
            kw = [content[m] for m, _ in engine.lexical.search(LexicalQuery(q, "u", limit=2))]
        except EmptyQuery:
            kw = []
        hyb = [h.content for h in engine.search("u", q, 2, now=datetime(2024, 6, 1, tzinfo=UTC)).hits]
        print(f"query {q!r}\n  vector : {vec}\n  keyword: {kw}\n  hybrid : {hyb}\n")


if __name__ == "__main__":
    main()
