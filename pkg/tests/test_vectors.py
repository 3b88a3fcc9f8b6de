import json

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from recallkit.vectors import (
    DegenerateTruncation,
    EmbedderError,
    ReferenceEmbedder,
    RemoteEmbedder,
    VectorFilter,
    VectorPayload,
    VectorStore,
    check_embedding,
    truncate_normalize,
)


def unit(rng, n=768):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_truncate_uniform_vector_gives_one_sixteenth():
    e = np.full(768, 1 / np.sqrt(768))
    out = truncate_normalize(e)
    assert out.shape == (256,)
    np.testing.assert_allclose(out, 1 / 16, rtol=0, atol=1e-15)


def test_truncate_prefix_only_vector_unchanged():
    rng = np.random.default_rng(1)
    e = np.zeros(768)
    e[:256] = unit(rng, 256)
    np.testing.assert_allclose(truncate_normalize(e), e[:256], atol=1e-15)


def test_truncate_degenerate():
    e = np.zeros(768)
    e[300] = 1.0
    with pytest.raises(DegenerateTruncation):
        truncate_normalize(e)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, 768, elements=finite))
def test_truncate_matches_oracle_and_is_unit(e):
    if np.linalg.norm(e[:256]) < 1e-6:
        return
    out = truncate_normalize(e)
    assert abs(np.linalg.norm(out) - 1) <= 1e-6
    np.testing.assert_allclose(out, oracles.truncate(e.tolist()), atol=1e-9)


def test_check_embedding():
    rng = np.random.default_rng(0)
    check_embedding(unit(rng))
    with pytest.raises(ValueError):
        check_embedding(np.ones(768))
    with pytest.raises(ValueError):
        check_embedding(unit(rng, 10))


def _store(vecs, user="u", current=None):
    vs = VectorStore()
    for i, v in enumerate(vecs):
        cur = True if current is None else current[i]
        vs.upsert_memory_vectors(f"m{i:04d}", v, VectorPayload(f"m{i:04d}", user, cur))
    return vs


def test_self_similarity_and_last_write_wins():
    rng = np.random.default_rng(2)
    vecs = [unit(rng) for _ in range(5)]
    vs = _store(vecs)
    [(mid, sim)] = vs.two_stage_search(vecs[3], VectorFilter("u"), 1)
    assert mid == "m0003" and sim == pytest.approx(1.0, abs=1e-6)
    vs.upsert_memory_vectors("m0003", vecs[3], VectorPayload("m0003", "u", False))
    assert vs.payload("m0003", "u").is_current is False
    assert "m0003" not in [m for m, _ in vs.two_stage_search(vecs[3], VectorFilter("u"), 5)]
    assert "m0003" in [m for m, _ in vs.two_stage_search(vecs[3], VectorFilter("u", current_only=False), 5)]


def test_small_store_matches_brute_force_order():
    rng = np.random.default_rng(3)
    vecs = [unit(rng) for _ in range(3)]
    q = unit(rng)
    vs = _store(vecs)
    expected = sorted(range(3), key=lambda i: -float(vecs[i] @ q))
    assert [m for m, _ in vs.two_stage_search(q, VectorFilter("u"), 3)] == [f"m{i:04d}" for i in expected]


def test_far_vector_self_match():
    rng = np.random.default_rng(4)
    v = unit(rng)
    far = -v + 0.01 * unit(rng)
    vs = _store([v, far / np.linalg.norm(far)])
    [(mid, sim)] = vs.two_stage_search(v, VectorFilter("u"), 1)
    assert mid == "m0000" and sim == pytest.approx(1.0, abs=1e-9)


def test_fifty_vectors_shortlist_overlap_and_equality():
    rng = np.random.default_rng(5)
    vecs = [unit(rng) for _ in range(50)]
    vs = _store(vecs)
    for _ in range(20):
        q = unit(rng)
        exact = [m for m, _ in vs.exhaustive_search(q, VectorFilter("u"), 5)]
        brute = [f"m{i:04d}" for i in sorted(range(50), key=lambda i: (-float(vecs[i] @ q), i))[:5]]
        assert exact == brute
        assert [m for m, _ in vs.two_stage_search(q, VectorFilter("u"), 5, shortlist_size=50)] == exact
        approx = [m for m, _ in vs.two_stage_search(q, VectorFilter("u"), 5, shortlist_size=10)]
        assert len(approx) == 5 and set(approx) <= {f"m{i:04d}" for i in range(50)}


@given(st.integers(0, 2**31 - 1), st.integers(1, 40), st.integers(1, 10))
def test_two_stage_equals_exhaustive_when_shortlist_covers_store(seed, n, k):
    rng = np.random.default_rng(seed)
    vecs = [unit(rng) for _ in range(n)]
    current = rng.random(n) < 0.7
    vs = _store(vecs, current=current.tolist())
    q = unit(rng)
    for flt in (VectorFilter("u"), VectorFilter("u", current_only=False)):
        assert vs.two_stage_search(q, flt, k, shortlist_size=n) == vs.exhaustive_search(q, flt, k)
        for mid, _ in vs.two_stage_search(q, flt, k, shortlist_size=n):
            if flt.current_only:
                assert current[int(mid[1:])]


@given(st.integers(0, 2**31 - 1))
def test_monotone_in_768d_among_survivors(seed):
    rng = np.random.default_rng(seed)
    vecs = [unit(rng) for _ in range(60)]
    vs = _store(vecs)
    q = unit(rng)
    out = vs.two_stage_search(q, VectorFilter("u"), 20, shortlist_size=25)
    sims = [s for _, s in out]
    assert sims == sorted(sims, reverse=True)


def test_user_isolation_and_missing_user():
    rng = np.random.default_rng(6)
    vs = VectorStore()
    v = unit(rng)
    vs.upsert_memory_vectors("a", v, VectorPayload("a", "u1"))
    vs.upsert_memory_vectors("b", v, VectorPayload("b", "u2"))
    assert [m for m, _ in vs.two_stage_search(v, VectorFilter("u1"), 5)] == ["a"]
    assert vs.two_stage_search(v, VectorFilter("nobody"), 5) == []


def test_context_session_filter():
    rng = np.random.default_rng(7)
    vs = VectorStore()
    a, b = unit(rng), unit(rng)
    vs.upsert_memory_vectors("a", a, VectorPayload("a", "u", context_session="s1"))
    vs.upsert_memory_vectors("b", b, VectorPayload("b", "u"))
    assert {m for m, _ in vs.two_stage_search(a, VectorFilter("u", session_id="s2"), 5)} == {"b"}
    assert {m for m, _ in vs.two_stage_search(a, VectorFilter("u", session_id="s1"), 5)} == {"a", "b"}


def test_immediate_recall():
    rng = np.random.default_rng(8)
    vs = VectorStore()
    vecs = [unit(rng) for _ in range(5)]
    for i, v in enumerate(vecs):
        vs.upsert_message_vector(f"msg{i}", "u", v)
    [(mid, sim)] = vs.immediate_recall_search(vecs[2], VectorFilter("u", current_only=False), 1)
    assert mid == "msg2" and sim == pytest.approx(1.0, abs=1e-9)
    q = unit(rng)
    short = [truncate_normalize(v) for v in vecs]
    qs = truncate_normalize(q)
    expected = [f"msg{i}" for i in sorted(range(5), key=lambda i: -float(short[i] @ qs))[:3]]
    assert [m for m, _ in vs.immediate_recall_search(q, VectorFilter("u", current_only=False), 3)] == expected
    assert vs.immediate_recall_search(q, VectorFilter("other", current_only=False), 3) == []


def test_growth_preserves_rows():
    rng = np.random.default_rng(9)
    vecs = [unit(rng) for _ in range(100)]
    vs = _store(vecs)
    for i in (0, 17, 99):
        np.testing.assert_array_equal(vs.embedding(f"m{i:04d}", "u"), vecs[i])


class TestReferenceEmbedder:
    emb = ReferenceEmbedder()

    def test_deterministic_unit_vectors(self):
        a = self.emb.embed("James works at Google")
        b = ReferenceEmbedder().embed("James works at Google")
        np.testing.assert_array_equal(a, b)
        assert abs(np.linalg.norm(a) - 1) < 1e-12
        assert a.shape == (768,)
        assert abs(np.linalg.norm(self.emb.embed("")) - 1) < 1e-12

    def test_seed_changes_space(self):
        a = ReferenceEmbedder(seed=1).embed("coffee")
        assert not np.allclose(a, self.emb.embed("coffee"))

    def test_shared_tokens_are_closer(self):
        a = self.emb.embed("James loves hiking in the mountains")
        b = self.emb.embed("hiking in the mountains")
        c = self.emb.embed("quarterly tax filing deadline")
        assert a @ b > a @ c + 0.3

    def test_synonyms_are_closer_than_unrelated(self):
        a = self.emb.embed("job")
        b = self.emb.embed("career")
        c = self.emb.embed("banana")
        assert a @ b > 0.7
        assert a @ b > a @ c + 0.5

    def test_prefix_keeps_most_signal(self):
        a, b = self.emb.embed("dog puppy"), self.emb.embed("canine pet")
        full = float(a @ b)
        short = float(truncate_normalize(a) @ truncate_normalize(b))
        assert abs(full - short) < 0.15

    def test_unknown_role(self):
        with pytest.raises(ValueError):
            self.emb.embed("x", role="banana")


def test_remote_embedder_sends_prefixed_texts():
    seen = {}

    def handler(request):
        body = json.loads(request.content)
        seen.update(body)
        return httpx.Response(200, json={"embeddings": [[1.0] + [0.0] * 767 for _ in body["texts"]]})

    emb = RemoteEmbedder("http://emb/embed", client=httpx.Client(transport=httpx.MockTransport(handler)))
    out = emb.embed_many(["hello", "world"], "query")
    assert seen == {"texts": ["search_query: hello", "search_query: world"], "role": "query"}
    assert len(out) == 2 and out[0][0] == 1.0
    emb.embed("doc")
    assert seen["texts"] == ["search_document: doc"]


@pytest.mark.parametrize("response", [
    httpx.Response(500),
    httpx.Response(200, json=[[1.0] * 10]),
    httpx.Response(200, json={"embeddings": []}),
])
def test_remote_embedder_errors(response):
    emb = RemoteEmbedder("http://emb/embed", client=httpx.Client(transport=httpx.MockTransport(lambda r: response)))
    with pytest.raises(EmbedderError):
        emb.embed("x")
