"""Five-phase evaluation: INGEST, INDEXING, SEARCH, ANSWER, EVALUATE.

Retrieval is scored against evidence: a retrieved memory counts as relevant
when one of the messages it was extracted from is an evidence line of the
question. Each hit is labelled with the first evidence line it covers that an
earlier hit has not, so every evidence line is counted once.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence, TypeVar

import numpy as np

from ..client import ClientError, EngineClient
from ..model import format_ts
from .clients import Answerer, ExtractiveAnswerer, Judge
from .dataset import QUESTION_TYPES, EvalDataset, Question
from .metrics import bleu1, rank_metrics, token_f1

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class Phase(str, Enum):
    INGEST = "INGEST"
    INDEXING = "INDEXING"
    SEARCH = "SEARCH"
    ANSWER = "ANSWER"
    EVALUATE = "EVALUATE"


class EvalPhaseError(RuntimeError):
    def __init__(self, phase: Phase, message: str) -> None:
        super().__init__(f"[{phase.value}] {message}")
        self.phase = phase


@dataclass(frozen=True)
class EvalConfig:
    k: int = 10
    answer_k: int = 1
    parallelism: int = 4

    def __post_init__(self) -> None:
        if self.k < 1 or self.answer_k < 1 or self.parallelism < 1:
            raise ValueError("k, answer_k and parallelism must be >= 1")


_METRICS = ("token_f1", "bleu1", "hit_at_k", "mrr", "ndcg", "precision_at_k", "recall_at_k", "f1_at_k")


@dataclass
class TypeMetrics:
    count: int = 0
    with_evidence: int = 0
    token_f1: float = 0.0
    bleu1: float = 0.0
    hit_at_k: float = 0.0
    mrr: float = 0.0
    ndcg: float = 0.0
    precision_at_k: float = 0.0
    recall_at_k: float = 0.0
    f1_at_k: float = 0.0
    judge: float | None = None  # percentage, only with a judge configured


@dataclass
class QuestionResult:
    id: str
    question_type: str
    answer: str
    retrieved: list[str]
    metrics: dict[str, float]
    correct: bool | None = None


@dataclass
class MetricsReport:
    dataset: str
    k: int
    overall: TypeMetrics
    per_type: dict[str, TypeMetrics]
    questions: list[QuestionResult] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        head = f"{'Question Type':<20} {'Accuracy':>8} {'Hit@K':>7} {'MRR':>7} {'NDCG':>7} {'F1':>7} {'BLEU-1':>7} {'N':>5}"
        rows = [head, "-" * len(head)]

        def row(name: str, m: TypeMetrics) -> str:
            acc = f"{m.judge:.1f}%" if m.judge is not None else "-"
            return (f"{name:<20} {acc:>8} {m.hit_at_k:>7.3f} {m.mrr:>7.3f} {m.ndcg:>7.3f} "
                    f"{m.token_f1:>7.3f} {m.bleu1:>7.3f} {m.count:>5d}")

        for qtype in QUESTION_TYPES:
            if qtype in self.per_type:
                rows.append(row(qtype, self.per_type[qtype]))
        rows.append("-" * len(head))
        rows.append(row("overall", self.overall))
        return "\n".join(rows)


@dataclass
class EvalOutcome:
    report: MetricsReport
    latency: dict[str, float]  # seconds; kept apart so the report stays reproducible

    def to_dict(self) -> dict[str, Any]:
        return {"metrics": self.report.to_dict(), "latency": self.latency}


def _aggregate(results: Sequence[QuestionResult]) -> TypeMetrics:
    out = TypeMetrics(count=len(results))
    if not results:
        return out
    out.token_f1 = float(np.mean([r.metrics["token_f1"] for r in results]))
    out.bleu1 = float(np.mean([r.metrics["bleu1"] for r in results]))
    ranked = [r for r in results if "hit_at_k" in r.metrics]
    out.with_evidence = len(ranked)
    for name in _METRICS[2:]:
        setattr(out, name, float(np.mean([r.metrics[name] for r in ranked])) if ranked else 0.0)
    judged = [r.correct for r in results if r.correct is not None]
    if judged:
        out.judge = 100.0 * sum(judged) / len(judged)
    return out


def latency_summary(samples: Sequence[float]) -> dict[str, float]:
    if not samples:
        return {"count": 0, "p50": 0.0, "p95": 0.0, "p99": 0.0, "mean": 0.0}
    arr = np.asarray(samples, dtype=np.float64)
    return {
        "count": int(arr.size),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "p99": float(np.percentile(arr, 99)),
        "mean": float(arr.mean()),
    }


def _pmap(fn: Callable[[T], R], items: Sequence[T], parallelism: int) -> list[R]:
    if parallelism == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


@dataclass
class _Retrieved:
    hits: list[dict[str, Any]]
    seconds: list[float]


def _merge_owner_hits(per_owner: list[list[dict[str, Any]]], k: int) -> list[dict[str, Any]]:
    """Interleave several owners' ranked hits by their final score; drop repeated contents."""
    pool = []
    for oi, hits in enumerate(per_owner):
        for rank, h in enumerate(hits):
            score = h["rerank_score"] if h.get("rerank_score") is not None else h["score_final"]
            pool.append((-(score or 0.0), oi, rank, h))
    pool.sort(key=lambda t: t[:3])
    out, seen = [], set()
    for *_, h in pool:
        key = h["content"].lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(h)
    return out[:k]


def run_eval(
    dataset: EvalDataset,
    client: EngineClient,
    config: EvalConfig | None = None,
    *,
    answerer: Answerer | None = None,
    judge: Judge | None = None,
) -> EvalOutcome:
    cfg = config or EvalConfig()
    answerer = answerer or ExtractiveAnswerer(cfg.answer_k)
    # engine message id -> dataset line id, per owner
    line_of: dict[tuple[str, str], str] = {}

    phase = Phase.INGEST
    try:
        for conv in dataset.conversations:
            for owner in conv.owners:
                for s in conv.sessions:
                    key = f"eval:{dataset.name}:{conv.id}:{owner}:{s.session_id}"
                    resp = client.ingest(owner, s.session_id, list(s.lines), idempotency_key=key)
                    for mid, lid in zip(resp["message_ids"], s.line_ids):
                        line_of[(owner, mid)] = lid

        phase = Phase.INDEXING
        for conv in dataset.conversations:
            for owner in conv.owners:
                client.process(owner)

        phase = Phase.SEARCH
        questions = sorted(dataset.questions, key=lambda q: q.id)

        def search_one(q: Question) -> _Retrieved:
            conv = dataset.conversation(q.conversation_id)
            now = q.now or format_ts(conv.latest_timestamp())
            per_owner, seconds = [], []
            for owner in conv.owners:
                t = time.perf_counter()
                res = client.search(owner, q.question, cfg.k, now=now)
                seconds.append(time.perf_counter() - t)
                per_owner.append([dict(h, _owner=owner) for h in res["hits"]])
            return _Retrieved(_merge_owner_hits(per_owner, cfg.k), seconds)

        retrieved = _pmap(search_one, questions, cfg.parallelism)

        phase = Phase.ANSWER
        answers = _pmap(
            lambda pair: answerer.answer(pair[0], [h["content"] for h in pair[1].hits]),
            list(zip(questions, retrieved)),
            cfg.parallelism,
        )

        phase = Phase.EVALUATE
        verdicts: list[bool | None] = [None] * len(questions)
        if judge is not None:
            verdicts = _pmap(lambda pair: judge.is_correct(*pair), list(zip(questions, answers)), cfg.parallelism)
        results = []
        for q, r, ans, verdict in zip(questions, retrieved, answers, verdicts):
            evidence = dataset.expand_evidence(q)
            labels, covered = [], set()
            for i, h in enumerate(r.hits):
                sources = {line_of.get((h["_owner"], m)) for m in h.get("source_message_ids", [])}
                fresh = sorted((sources & evidence) - covered)
                hit_ev = fresh or sorted(sources & evidence)
                if hit_ev:
                    covered.add(hit_ev[0])
                    labels.append(hit_ev[0])
                else:
                    labels.append(f"\x00miss{i}")
            metrics = {"token_f1": token_f1(ans, q.answer), "bleu1": bleu1(ans, q.answer)}
            if evidence:
                metrics.update(rank_metrics(labels, evidence, cfg.k))
            results.append(QuestionResult(q.id, q.question_type, ans, [h["memory_id"] for h in r.hits], metrics, verdict))
        per_type = {
            t: _aggregate([r for r in results if r.question_type == t])
            for t in QUESTION_TYPES
            if any(r.question_type == t for r in results)
        }
        report = MetricsReport(dataset.name, cfg.k, _aggregate(results), per_type, results)
    except EvalPhaseError:
        raise
    except Exception as exc:
        raise EvalPhaseError(phase, f"{type(exc).__name__}: {exc}") from exc

    latency = latency_summary([s for r in retrieved for s in r.seconds])
    return EvalOutcome(report, latency)


def write_report(outcome: EvalOutcome, path: str | Path) -> tuple[Path, Path]:
    """Write the JSON report to ``path`` and the table next to it (``.txt``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(outcome.to_dict(), sort_keys=True, indent=2) + "\n", "utf-8")
    lat = outcome.latency
    table = outcome.report.to_table() + (
        f"\n\nsearch latency over {lat['count']} calls: p50 {lat['p50'] * 1000:.1f} ms, "
        f"p95 {lat['p95'] * 1000:.1f} ms, p99 {lat['p99'] * 1000:.1f} ms, mean {lat['mean'] * 1000:.1f} ms\n"
    )
    table_path = path.with_suffix(".txt")
    table_path.write_text(table, "utf-8")
    return path, table_path
