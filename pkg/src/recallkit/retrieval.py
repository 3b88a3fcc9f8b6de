"""Hybrid retrieval: RRF fusion, temporal boosting, dedup, reranking, history mode."""

from __future__ import annotations

import logging
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time as dtime
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .lexical import BM25Index, EmptyQuery, LexicalQuery
from .model import UTC, FusionConfig, QueryAnalysis, ScoredHit, TemporalConfig, analyze_query
from .store import DocumentStore
from .vectors import Embedder, VectorFilter, VectorStore, row_dots

log = logging.getLogger(__name__)


def rrf_fuse(vec_ranked: Sequence[str], bm25_ranked: Sequence[str], cfg: FusionConfig | None = None) -> list[ScoredHit]:
    """Weighted Reciprocal Rank Fusion over two 1-based rank lists.

    A retriever that did not return an id contributes nothing for it.
    """
    cfg = cfg or FusionConfig()
    hits: dict[str, ScoredHit] = {}
    for rank, mid in enumerate(vec_ranked, start=1):
        hits[mid] = ScoredHit(mid, rank_vector=rank)
    for rank, mid in enumerate(bm25_ranked, start=1):
        hit = hits.get(mid)
        if hit is None:
            hits[mid] = ScoredHit(mid, rank_bm25=rank)
        else:
            hit.rank_bm25 = rank
    for hit in hits.values():
        rrf_vec = 1.0 / (cfg.k_rrf + hit.rank_vector) if hit.rank_vector is not None else 0.0
        rrf_bm25 = 1.0 / (cfg.k_rrf + hit.rank_bm25) if hit.rank_bm25 is not None else 0.0
        hit.score_fused = cfg.w_vector * rrf_vec + cfg.w_bm25 * rrf_bm25
        hit.score_final = hit.score_fused
    return sorted(hits.values(), key=lambda h: (-h.score_fused, h.memory_id))


def _as_datetime(d: date | datetime) -> datetime:
    if isinstance(d, datetime):
        return d if d.tzinfo else d.replace(tzinfo=UTC)
    return datetime.combine(d, dtime(0, 0), tzinfo=UTC)


def temporal_score(event_time: date | datetime, reference_date: date | datetime, window_days: float, floor: float = 0.1) -> float:
    """max(floor, 1 - |event_time - reference_date| / window_days), distance in fractional days."""
    if window_days <= 0:
        raise ValueError("window_days must be positive")
    delta = abs((_as_datetime(event_time) - _as_datetime(reference_date)).total_seconds()) / 86400.0
    return max(floor, 1.0 - delta / window_days)


def apply_temporal_boost(hits: list[ScoredHit], analysis: QueryAnalysis, tcfg: TemporalConfig | None = None) -> list[ScoredHit]:
    """Blend time proximity into the fused score; hits must carry event_time/created_at."""
    tcfg = tcfg or TemporalConfig()
    if not analysis.temporal_intent:
        for h in hits:
            h.score_final = h.score_fused
        return sorted(hits, key=lambda h: (-h.score_final, h.memory_id))
    for h in hits:
        when = h.event_time if h.event_time is not None else h.created_at
        if when is None:
            raise ValueError(f"hit {h.memory_id} has no timestamp")
        h.temporal_score = temporal_score(when, analysis.reference_date, analysis.window_days, tcfg.floor)
        h.score_final = tcfg.w_fused * h.score_fused + tcfg.w_temporal * h.temporal_score
    return sorted(hits, key=lambda h: (-h.score_final, h.memory_id))


def dedup(hits: Sequence[ScoredHit], embeddings: Mapping[str, np.ndarray], threshold: float = 0.99) -> list[ScoredHit]:
    """Greedy near-duplicate removal in the given (descending score) order.

    A hit is dropped when its cosine similarity to any kept hit exceeds
    ``threshold``. Embeddings are expected unit-norm.
    """
    kept: list[ScoredHit] = []
    kept_vecs: list[np.ndarray] = []
    for h in hits:
        v = np.asarray(embeddings[h.memory_id], dtype=np.float64)
        if kept_vecs and float(np.max(row_dots(np.stack(kept_vecs), v))) > threshold:
            continue
        kept.append(h)
        kept_vecs.append(v)
    return kept


# --- rerankers ------------------------------------------------------------


class RerankerError(RuntimeError):
    pass


class Reranker(Protocol):
    def rescore(self, query: str, candidates: Sequence[tuple[str, str]]) -> list[tuple[str, float]]: ...


class PassthroughReranker:
    """Scores that reproduce the incoming order: 1, 1/2, 1/3, ..."""

    def rescore(self, query: str, candidates: Sequence[tuple[str, str]]) -> list[tuple[str, float]]:
        return [(cid, 1.0 / (i + 1)) for i, (cid, _) in enumerate(candidates)]


class RemoteReranker:
    """Cross-encoder over HTTP: POST ``{"query", "documents": [text]}`` -> ``{"scores": [...]}``."""

    def __init__(self, endpoint: str, timeout: float = 2.0, token: str | None = None, client=None) -> None:
        import httpx

        self.endpoint = endpoint
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def rescore(self, query: str, candidates: Sequence[tuple[str, str]]) -> list[tuple[str, float]]:
        import httpx

        if not candidates:
            return []
        body = {"query": query, "documents": [text for _, text in candidates]}
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            scores = resp.json()["scores"]
        except (httpx.HTTPError, ValueError, KeyError, TypeError) as exc:
            raise RerankerError(str(exc)) from exc
        if len(scores) != len(candidates):
            raise RerankerError("reranker returned a different number of scores")
        return [(cid, float(s)) for (cid, _), s in zip(candidates, scores)]


# --- pipeline -------------------------------------------------------------


@dataclass
class SearchResult:
    hits: list[ScoredHit]
    analysis: QueryAnalysis
    stage_timings: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "hits": [h.to_dict() for h in self.hits],
            "analysis": self.analysis.to_dict(),
            "warnings": list(self.warnings),
        }
        if include_timings:
            out["stage_timings"] = dict(self.stage_timings)
        return out


def _hydrate(hit: ScoredHit, rec) -> ScoredHit:
    hit.content = rec.content
    hit.version = rec.version
    hit.replaces_id = rec.replaces_id
    hit.is_current = rec.is_current
    hit.status = rec.status.value
    hit.category = rec.category.value
    hit.event_time = rec.event_time
    hit.created_at = rec.created_at
    hit.source_message_ids = rec.source_message_ids
    return hit


def _chronological(hits: list[ScoredHit]) -> list[ScoredHit]:
    return sorted(hits, key=lambda h: (h.event_time or h.created_at, h.version or 0, h.memory_id))


def search_pipeline(
    *,
    owner_id: str,
    query: str,
    k: int,
    now: datetime,
    docs: DocumentStore,
    lexical: BM25Index,
    vectors: VectorStore,
    embedder: Embedder,
    reranker: Reranker,
    fcfg: FusionConfig,
    tcfg: TemporalConfig,
    include_historical: bool | None = None,
    session_id: str | None = None,
    executor: Executor | None = None,
) -> SearchResult:
    """ANALYZE -> parallel vector/BM25 SEARCH -> FUSE -> boost/dedup/rerank -> OUTPUT."""
    if k < 1:
        raise ValueError("k must be >= 1")
    timings: dict[str, float] = {}
    warnings: list[str] = []
    clock = time.perf_counter

    t = clock()
    analysis = analyze_query(query, now, tcfg)
    if include_historical is not None:
        analysis = replace(analysis, include_historical=include_historical)
    current_only = not analysis.include_historical
    timings["analyze"] = clock() - t

    t = clock()
    q768 = embedder.embed(query, "query")
    timings["embed"] = clock() - t

    def vector_side() -> list[tuple[str, float]]:
        flt = VectorFilter(owner_id, current_only, session_id)
        return vectors.two_stage_search(q768, flt, fcfg.candidate_depth, fcfg.shortlist_size)

    def lexical_side() -> list[tuple[str, float]]:
        try:
            return lexical.search(LexicalQuery(query, owner_id, current_only, fcfg.candidate_depth, session_id))
        except EmptyQuery:
            return []

    t = clock()
    if executor is not None:
        fut = executor.submit(vector_side)
        bm25 = lexical_side()
        vec = fut.result()
    else:
        vec = vector_side()
        bm25 = lexical_side()
    timings["search"] = clock() - t

    t = clock()
    hits = rrf_fuse([mid for mid, _ in vec], [mid for mid, _ in bm25], fcfg)
    for h in hits:
        _hydrate(h, docs.get(owner_id, h.memory_id))
    timings["fuse"] = clock() - t

    t = clock()
    if analysis.temporal_intent and not analysis.include_historical:
        hits = apply_temporal_boost(hits, analysis, tcfg)
    timings["temporal"] = clock() - t

    t = clock()
    embeddings = {h.memory_id: vectors.embedding(h.memory_id, owner_id) for h in hits}
    hits = dedup(hits, embeddings, fcfg.dedup_threshold)
    timings["dedup"] = clock() - t

    t = clock()
    if analysis.include_historical:
        hits = _expand_history(hits, k, owner_id, docs, session_id)
    else:
        hits = _rerank(query, hits, reranker, fcfg.rerank_top_n, warnings)[:k]
    timings["rerank"] = clock() - t
    return SearchResult(hits, analysis, timings, warnings)


def _rerank(query: str, hits: list[ScoredHit], reranker: Reranker, top_n: int, warnings: list[str]) -> list[ScoredHit]:
    n = min(top_n, len(hits))
    if n == 0:
        return hits
    head, tail = hits[:n], hits[n:]
    try:
        scores = dict(reranker.rescore(query, [(h.memory_id, h.content) for h in head]))
        missing = [h.memory_id for h in head if h.memory_id not in scores]
        if missing:
            raise RerankerError(f"no score for {missing[:3]}")
    except RerankerError as exc:
        log.warning("reranker failed, keeping fused order: %s", exc)
        warnings.append("rerank_degraded")
        return hits
    for h in head:
        h.rerank_score = float(scores[h.memory_id])
    # stable sort keeps the fused order among equal rerank scores
    head.sort(key=lambda h: -h.rerank_score)
    return head + tail


def _expand_history(hits: list[ScoredHit], k: int, owner_id: str, docs: DocumentStore, session_id: str | None) -> list[ScoredHit]:
    """Take hits by relevance, pull in their whole version chains, order oldest first."""
    chosen: dict[str, ScoredHit] = {}
    by_id = {h.memory_id: h for h in hits}
    for h in hits:
        if len(chosen) >= k:
            break
        if h.memory_id in chosen:
            continue
        for rec in docs.chain(owner_id, h.memory_id):
            if len(chosen) >= k:
                break
            if rec.id in chosen:
                continue
            if session_id is not None and rec.session_id not in (None, session_id) and rec.scope.value == "CONTEXT":
                continue
            member = by_id.get(rec.id)
            if member is None:
                member = _hydrate(ScoredHit(rec.id, via_chain=True), rec)
            chosen[rec.id] = member
    return _chronological(list(chosen.values()))
