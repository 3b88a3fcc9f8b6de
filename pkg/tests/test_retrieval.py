from datetime import date, datetime, timedelta

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import run_promotions
from recallkit.extraction import Action, ExtractionOp
from recallkit.model import UTC, Category, FusionConfig, QueryAnalysis, ScoredHit, TemporalConfig
from recallkit.retrieval import (
    PassthroughReranker,
    RemoteReranker,
    RerankerError,
    apply_temporal_boost,
    dedup,
    rrf_fuse,
    temporal_score,
)

REF = date(2024, 5, 7)


def scores(hits):
    return {h.memory_id: h.score_fused for h in hits}


class TestRRF:
    def test_rank_one_in_both(self):
        [h] = rrf_fuse(["a"], ["a"])
        assert h.score_fused == pytest.approx(1 / 11, abs=1e-12)
        assert h.score_fused == pytest.approx(0.090909, abs=1e-6)
        assert (h.rank_vector, h.rank_bm25) == (1, 1)

    def test_single_modality(self):
        hits = rrf_fuse(["v"], ["b"])
        assert [h.memory_id for h in hits] == ["v", "b"]
        assert scores(hits)["v"] == pytest.approx(0.063636, abs=1e-6)
        assert scores(hits)["b"] == pytest.approx(0.027273, abs=1e-6)
        assert scores(hits)["v"] == pytest.approx(0.7 / 11, abs=1e-12)

    def test_empty(self):
        assert rrf_fuse([], []) == []

    def test_ties_by_ascending_id(self):
        hits = rrf_fuse(["x", "y"], ["y", "x"], FusionConfig(w_vector=0.5, w_bm25=0.5))
        assert [h.memory_id for h in hits] == ["x", "y"]
        assert hits[0].score_fused == hits[1].score_fused

    @given(st.permutations(list("abcdefghij")), st.permutations(list("abcdefghij")),
           st.integers(0, 10), st.integers(0, 10))
    def test_matches_oracle(self, vec, bm, nv, nb):
        vec, bm = vec[:nv], bm[:nb]
        got = rrf_fuse(vec, bm)
        expected = oracles.rrf(vec, bm)
        assert [h.memory_id for h in got] == oracles.ranked(expected)
        for h in got:
            assert h.score_fused == pytest.approx(expected[h.memory_id], abs=1e-12)

    @given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=20, unique=True))
    def test_invariant_under_monotone_score_transform(self, raw):
        # integer scores keep the transform exactly strictly increasing
        ids = [f"d{i:02d}" for i in range(len(raw))]
        def order(vals):
            return [ids[i] for i in sorted(range(len(vals)), key=lambda i: -vals[i])]
        transformed = [x**3 + 2 * x + 7 for x in raw]
        a = rrf_fuse(order(raw), order(raw[::-1]))
        b = rrf_fuse(order(transformed), order(transformed[::-1]))
        assert [(h.memory_id, h.score_fused) for h in a] == [(h.memory_id, h.score_fused) for h in b]

    def test_strictly_decreasing_in_each_rank(self):
        cfg = FusionConfig()
        for present_other in (False, True):
            prev = None
            for r in range(1, 101):
                vec = [f"p{i}" for i in range(r - 1)] + ["t"]
                bm = ["t"] if present_other else []
                s = scores(rrf_fuse(vec, bm, cfg))["t"]
                if prev is not None:
                    assert s < prev
                prev = s
            prev = None
            for r in range(1, 101):
                bm = [f"p{i}" for i in range(r - 1)] + ["t"]
                vec = ["t"] if present_other else []
                s = scores(rrf_fuse(vec, bm, cfg))["t"]
                if prev is not None:
                    assert s < prev
                prev = s


class TestTemporal:
    def test_examples(self):
        assert temporal_score(REF, REF, 10) == 1.0
        assert temporal_score(REF + timedelta(days=10), REF, 10) == pytest.approx(0.1)
        assert temporal_score(REF + timedelta(days=40), REF, 10) == pytest.approx(0.1)
        assert temporal_score(REF + timedelta(days=5), REF, 10) == pytest.approx(0.5)
        assert temporal_score(datetime(2024, 5, 7, 12, tzinfo=UTC), REF, 1) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            temporal_score(REF, REF, 0)

    @given(st.floats(-1000, 1000, allow_nan=False), st.floats(0.01, 400))
    def test_bounded_symmetric_and_matches_oracle(self, delta_days, window):
        ref = datetime(2024, 5, 7, tzinfo=UTC)
        event = ref + timedelta(days=delta_days)
        after = temporal_score(event, REF, window)
        before = temporal_score(ref - timedelta(days=delta_days), REF, window)
        assert 0.1 <= after <= 1.0
        assert after == pytest.approx(before, abs=1e-9)
        assert after == pytest.approx(oracles.temporal(event, ref, window), abs=1e-9)

    def analysis(self, window=3):
        return QueryAnalysis(True, REF, window, "weekday")

    def test_boost_example(self):
        h = ScoredHit("a", score_fused=1 / 11, event_time=datetime(2024, 5, 7, tzinfo=UTC))
        [out] = apply_temporal_boost([h], self.analysis())
        assert out.temporal_score == 1.0
        assert out.score_final == pytest.approx(0.6 / 11 + 0.4, abs=1e-12)
        assert out.score_final == pytest.approx(0.454545, abs=1e-6)

    def test_closer_wins_and_created_at_fallback(self):
        far = ScoredHit("a", score_fused=0.05, event_time=datetime(2024, 5, 1, tzinfo=UTC))
        near = ScoredHit("b", score_fused=0.05, created_at=datetime(2024, 5, 7, 9, tzinfo=UTC))
        assert [h.memory_id for h in apply_temporal_boost([far, near], self.analysis())] == ["b", "a"]

    def test_no_intent_passes_through(self):
        hits = [ScoredHit("a", score_fused=0.02), ScoredHit("b", score_fused=0.05)]
        out = apply_temporal_boost(hits, QueryAnalysis())
        assert [(h.memory_id, h.score_final) for h in out] == [("b", 0.05), ("a", 0.02)]

    @given(st.lists(st.integers(0, 10**5).map(lambda i: i / 10**6), min_size=2, max_size=10, unique=True))
    def test_equal_time_keeps_fused_order(self, fused):
        # fused gaps stay well above the resolution of the blended score
        t = datetime(2024, 4, 1, tzinfo=UTC)
        hits = [ScoredHit(f"h{i}", score_fused=s, event_time=t) for i, s in enumerate(fused)]
        before = [h.memory_id for h in sorted(hits, key=lambda h: -h.score_fused)]
        assert [h.memory_id for h in apply_temporal_boost(hits, self.analysis())] == before


def near_duplicates(rng, sim=0.995, n=3):
    """n unit vectors with pairwise cosine exactly ``sim`` plus one orthogonal vector."""
    basis = np.linalg.qr(rng.standard_normal((768, n + 2)))[0].T
    a, b = np.sqrt(sim), np.sqrt(1 - sim)
    vecs = [a * basis[0] + b * basis[i + 1] for i in range(n)]
    return vecs, basis[n + 1]


class TestDedup:
    def test_identical_keeps_higher(self):
        v = np.eye(768)[0]
        hits = [ScoredHit("hi", score_final=2), ScoredHit("lo", score_final=1)]
        assert [h.memory_id for h in dedup(hits, {"hi": v, "lo": v})] == ["hi"]

    def test_orthogonal_kept(self):
        e = np.eye(768)
        hits = [ScoredHit(f"h{i}") for i in range(4)]
        assert len(dedup(hits, {f"h{i}": e[i] for i in range(4)})) == 4

    def test_three_near_duplicates_plus_one(self):
        vecs, other = near_duplicates(np.random.default_rng(0))
        assert float(vecs[0] @ vecs[1]) == pytest.approx(0.995, abs=1e-12)
        emb = {"a": vecs[0], "b": vecs[1], "c": vecs[2], "d": other}
        hits = [ScoredHit(x) for x in "abcd"]
        assert [h.memory_id for h in dedup(hits, emb)] == ["a", "d"]
        assert [h.memory_id for h in dedup(hits[::-1], emb)] == ["d", "c"]

    def test_below_threshold_is_kept(self):
        vecs, _ = near_duplicates(np.random.default_rng(1), sim=0.985, n=2)
        assert len(dedup([ScoredHit("a"), ScoredHit("b")], {"a": vecs[0], "b": vecs[1]})) == 2

    @given(st.integers(0, 2**31 - 1), st.integers(1, 12))
    def test_idempotent(self, seed, n):
        rng = np.random.default_rng(seed)
        base = rng.standard_normal((3, 768))
        emb = {}
        for i in range(n):
            v = base[i % 3] + rng.choice([0.0, 0.05, 1.0]) * rng.standard_normal(768)
            emb[f"h{i}"] = v / np.linalg.norm(v)
        hits = [ScoredHit(f"h{i}") for i in range(n)]
        once = dedup(hits, emb)
        assert [h.memory_id for h in dedup(once, emb)] == [h.memory_id for h in once]
        ids = [h.memory_id for h in once]
        for i, x in enumerate(ids):
            for y in ids[:i]:
                assert float(emb[x] @ emb[y]) <= 0.99 + 1e-12


def add(engine, owner, facts, when=datetime(2024, 5, 1, tzinfo=UTC)):
    ops = [ExtractionOp(Action.ADD, f, category=Category.MISC) for f in facts]
    return engine.apply_operations(owner, ops, now=when).added


class TestSearch:
    def test_empty_store(self, engine, now):
        res = engine.search("nobody", "What did I do last Tuesday?", now=now)
        assert res.hits == []
        assert res.analysis.temporal_intent

    def test_google_found_by_both(self, engine, now):
        [mid] = add(engine, "james", ["James works at Google"])
        [hit] = engine.search("james", "google", now=now).hits
        assert hit.memory_id == mid
        assert (hit.rank_vector, hit.rank_bm25) == (1, 1)
        assert hit.score_fused == pytest.approx(1 / 11)

    def test_k_validation_and_truncation(self, engine, now):
        add(engine, "u", [f"fact number {i} about tea" for i in range(8)])
        assert len(engine.search("u", "tea", k=3, now=now).hits) == 3
        with pytest.raises(ValueError):
            engine.search("u", "tea", k=0, now=now)

    def test_owner_isolation(self, engine, now):
        add(engine, "a", ["Alice likes tea"])
        add(engine, "b", ["Bob likes tea"])
        assert [h.content for h in engine.search("a", "tea", now=now).hits] == ["Alice likes tea"]

    def test_only_current_by_default_and_chain_history(self, engine, now):
        ids = run_promotions(engine)
        res = engine.search("james", "what is my job title", now=now)
        assert all(h.is_current for h in res.hits)
        assert [h.memory_id for h in res.hits] == [ids[-1]]
        hist = engine.search("james", "What were all my previous jobs?", now=now)
        assert hist.analysis.include_historical
        assert [h.memory_id for h in hist.hits] == ids
        assert [h.version for h in hist.hits] == [1, 2, 3]
        assert [h.replaces_id for h in hist.hits] == [None, ids[0], ids[1]]

    def test_reranker_reorders_top(self, now):
        from recallkit import MemoryEngine

        class Reverse:
            def rescore(self, query, candidates):
                return [(cid, float(i)) for i, (cid, _) in enumerate(candidates)]

        base = MemoryEngine(parallel_search=False)
        rev = MemoryEngine(parallel_search=False, reranker=Reverse())
        for e in (base, rev):
            add(e, "u", ["tea with milk", "green tea tea", "tea ceremony in Kyoto"])
        a = [h.memory_id for h in base.search("u", "tea", now=now).hits]
        b = [h.memory_id for h in rev.search("u", "tea", now=now).hits]
        assert b == a[::-1]

    def test_reranker_failure_degrades(self, now):
        from recallkit import MemoryEngine

        class Broken:
            def rescore(self, query, candidates):
                raise RerankerError("down")

        base = MemoryEngine(parallel_search=False)
        broken = MemoryEngine(parallel_search=False, reranker=Broken())
        for e in (base, broken):
            add(e, "u", ["tea with milk", "green tea", "coffee and tea"])
        res = broken.search("u", "tea", now=now)
        assert res.warnings == ["rerank_degraded"]
        assert [h.memory_id for h in res.hits] == [h.memory_id for h in base.search("u", "tea", now=now).hits]

    def test_temporal_query_prefers_nearby_event(self, engine):
        add(engine, "u", ["James went hiking"], when=datetime(2024, 5, 7, 18, tzinfo=UTC))
        add(engine, "u", ["James went hiking in the Alps"], when=datetime(2024, 3, 1, tzinfo=UTC))
        res = engine.search("u", "hiking last Tuesday", now=datetime(2024, 5, 10, 12, tzinfo=UTC))
        assert res.hits[0].content == "James went hiking"
        assert res.hits[0].temporal_score is not None

    def test_dedup_in_pipeline(self, engine, now):
        add(engine, "u", ["James likes tea"])
        add(engine, "u", ["James likes tea"])
        assert len(engine.search("u", "tea", now=now).hits) == 1

    def test_parallel_and_serial_agree(self, now):
        from recallkit import MemoryEngine

        a, b = MemoryEngine(parallel_search=True), MemoryEngine(parallel_search=False)
        for e in (a, b):
            add(e, "u", [f"James visited city {i} and ate noodles" for i in range(30)])
        qa = [h.to_dict() for h in a.search("u", "noodles city 7", now=now).hits]
        qb = [h.to_dict() for h in b.search("u", "noodles city 7", now=now).hits]
        assert qa == qb
        a.close()


def test_passthrough_reranker():
    assert PassthroughReranker().rescore("q", [("a", "x"), ("b", "y")]) == [("a", 1.0), ("b", 0.5)]


def test_remote_reranker():
    def handler(request):
        return httpx.Response(200, json={"scores": [0.1, 0.9]})

    rr = RemoteReranker("http://r/rerank", client=httpx.Client(transport=httpx.MockTransport(handler)))
    assert rr.rescore("q", [("a", "x"), ("b", "y")]) == [("a", 0.1), ("b", 0.9)]
    bad = RemoteReranker("http://r", client=httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500))))
    with pytest.raises(RerankerError):
        bad.rescore("q", [("a", "x")])
    short = RemoteReranker("http://r", client=httpx.Client(
        transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"scores": []}))))
    with pytest.raises(RerankerError):
        short.rescore("q", [("a", "x")])


def _brute_recall(engine, owner, queries, k):
    """Hybrid, vector-only and bm25-only Recall@k by brute force over a small corpus."""
    from recallkit.lexical import EmptyQuery, LexicalQuery
    from recallkit.vectors import VectorFilter

    out = {"hybrid": 0, "vector": 0, "bm25": 0}
    for q, rel in queries:
        qv = engine.embedder.embed(q, "query")
        vec = [m for m, _ in engine.vectors.exhaustive_search(qv, VectorFilter(owner), 50)]
        try:
            bm = [m for m, _ in engine.lexical.search(LexicalQuery(q, owner, limit=50))]
        except EmptyQuery:
            bm = []
        hyb = [h.memory_id for h in rrf_fuse(vec, bm)]
        out["hybrid"] += rel in hyb[:k]
        out["vector"] += rel in vec[:k]
        out["bm25"] += rel in bm[:k]
    return out


def test_hybrid_recall_at_full_depth_dominates(engine):
    """With k at the full candidate depth the fused list covers both modalities' lists."""
    facts = [f"James's friend number {i} is called {name}" for i, name in enumerate(
        ["Ana", "Bo", "Cai", "Dee", "Eli", "Fay", "Gus", "Hal", "Ivy", "Jo"])]
    facts += ["James plays the cello", "James has a cat named Miso", "James lives in Lisbon",
              "James is allergic to shellfish", "James runs marathons"]
    ids = add(engine, "u", facts)
    queries = [("who is Gus", ids[6]), ("musical instrument", ids[10]), ("pet cat", ids[11]),
               ("which city", ids[12]), ("food allergy", ids[13]), ("running", ids[14])]
    r = _brute_recall(engine, "u", queries, k=100)
    assert r["hybrid"] >= max(r["vector"], r["bm25"])
