"""The memory engine: ingestion, version chains, dual-store coherence, search.

Writes run in two phases. Planning (validation, extraction, embedding) runs
under the owner's writer mutex only, so owners proceed in parallel. Commit
allocates ids, appends one log entry and applies its effects to the document
store, the lexical index and the vector store under a global commit lock and
the owner's write lock; readers hold the owner's read lock, so they see the
state before or after a commit, never in between. Replay goes through the
same ``_apply_effects`` path as live writes.
"""

from __future__ import annotations

import logging
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Iterator, Sequence

import numpy as np

from .extraction import Action, ExtractionOp, Extractor, ExtractorError, InvalidOperation, RuleExtractor
from .lexical import BM25Index
from .model import (
    UTC,
    FusionConfig,
    MemoryRecord,
    MessageRecord,
    Scope,
    Status,
    TemporalConfig,
    parse_message_line,
)
from .persistence import Persistence, decode_vector, encode_vector
from .retrieval import PassthroughReranker, Reranker, SearchResult, search_pipeline
from .store import DocumentStore, NotFound
from .vectors import Embedder, ReferenceEmbedder, VectorFilter, VectorPayload, VectorStore, truncate_normalize

log = logging.getLogger(__name__)

__all__ = ["MemoryEngine", "ApplyResult", "ProcessSummary", "NotFound", "EngineUnavailable"]


class EngineUnavailable(RuntimeError):
    pass


class RWLock:
    """Writer-preferring readers/writer lock."""

    def __init__(self) -> None:
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    @contextmanager
    def read(self) -> Iterator[None]:
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self) -> Iterator[None]:
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


@dataclass
class _OwnerLocks:
    writer: threading.Lock = field(default_factory=threading.Lock)
    rw: RWLock = field(default_factory=RWLock)


@dataclass
class ApplyResult:
    added: list[str] = field(default_factory=list)
    updated: list[str] = field(default_factory=list)  # ids of the new versions
    deleted: list[str] = field(default_factory=list)
    skipped: int = 0
    errors: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "added": self.added,
            "updated": self.updated,
            "deleted": self.deleted,
            "skipped": self.skipped,
            "errors": self.errors,
        }


@dataclass
class ProcessSummary:
    batches: int = 0
    messages_processed: int = 0
    added: list[str] = field(default_factory=list)
    updated: list[str] = field(default_factory=list)
    deleted: list[str] = field(default_factory=list)
    skipped: int = 0
    errors: list[dict[str, Any]] = field(default_factory=list)

    def absorb(self, res: ApplyResult, n_messages: int) -> None:
        self.batches += 1
        self.messages_processed += n_messages
        self.added += res.added
        self.updated += res.updated
        self.deleted += res.deleted
        self.skipped += res.skipped
        self.errors += res.errors

    def to_dict(self) -> dict[str, Any]:
        return {
            "added": len(self.added),
            "updated": len(self.updated),
            "deleted": len(self.deleted),
            "skipped": self.skipped,
            "errors": self.errors,
            "batches": self.batches,
            "messages_processed": self.messages_processed,
            "memory_ids": {"added": self.added, "updated": self.updated, "deleted": self.deleted},
        }


@dataclass
class _Planned:
    """A write whose ids are still placeholders (``tmp:<n>``)."""

    effects: list[dict[str, Any]]
    result: ApplyResult | None = None
    tmp_count: int = 0


_TMP = "tmp:"


class MemoryEngine:
    def __init__(
        self,
        *,
        embedder: Embedder | None = None,
        extractor: Extractor | None = None,
        reranker: Reranker | None = None,
        fusion: FusionConfig | None = None,
        temporal: TemporalConfig | None = None,
        data_dir: str | None = None,
        snapshot_every: int = 1000,
        fsync: bool = True,
        parallel_search: bool = True,
        context_size: int = 10,
    ) -> None:
        self.embedder = embedder or ReferenceEmbedder()
        self.extractor = extractor or RuleExtractor()
        self.reranker = reranker or PassthroughReranker()
        self.fusion = fusion or FusionConfig()
        self.temporal = temporal or TemporalConfig()
        self.context_size = context_size
        self.snapshot_every = snapshot_every

        self.docs = DocumentStore()
        self.lexical = BM25Index()
        self.vectors = VectorStore()

        self._commit_lock = threading.RLock()
        self._locks: dict[str, _OwnerLocks] = defaultdict(_OwnerLocks)
        self._locks_guard = threading.Lock()
        self._seq = 0
        self._next = {"msg": 1, "mem": 1}
        self._idem: dict[tuple[str, str, str], Any] = {}
        self._executor = ThreadPoolExecutor(max_workers=2, thread_name_prefix="search") if parallel_search else None
        self._closed = False

        self._persist: Persistence | None = None
        if data_dir is not None:
            self._persist = Persistence(data_dir, fsync=fsync)
            self._recover()

    # -- lifecycle ----------------------------------------------------------

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        if self._executor is not None:
            self._executor.shutdown(wait=False)
        if self._persist is not None:
            self._persist.close()

    def __enter__(self) -> MemoryEngine:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _check_open(self) -> None:
        if self._closed:
            raise EngineUnavailable("engine is closed")

    def _owner(self, owner_id: str) -> _OwnerLocks:
        with self._locks_guard:
            return self._locks[owner_id]

    # -- commit / replay ------------------------------------------------------

    def _alloc(self, kind: str) -> str:
        n = self._next[kind]
        self._next[kind] = n + 1
        return f"{kind}-{n:08d}"

    def _resolve_ids(self, planned: _Planned) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for eff in planned.effects:
            rec = eff.get("rec")
            if rec is not None and rec["id"].startswith(_TMP):
                mapping[rec["id"]] = self._alloc("msg" if eff["t"] == "message" else "mem")
        return mapping

    @staticmethod
    def _substitute(obj: Any, mapping: dict[str, str]) -> Any:
        if isinstance(obj, str):
            return mapping.get(obj, obj)
        if isinstance(obj, list):
            return [MemoryEngine._substitute(x, mapping) for x in obj]
        if isinstance(obj, dict):
            return {k: MemoryEngine._substitute(v, mapping) for k, v in obj.items()}
        return obj

    def _commit(self, owner_id: str, kind: str, planned: _Planned, response: Any, key: str | None) -> Any:
        with self._commit_lock:
            mapping = self._resolve_ids(planned)
            effects = [_substitute_effect(e, mapping) for e in planned.effects]
            response = self._substitute(response, mapping)
            self._seq += 1
            entry = {
                "seq": self._seq,
                "owner": owner_id,
                "kind": kind,
                "key": key,
                "response": response,
                "effects": effects,
                "next_ids": dict(self._next),
            }
            if self._persist is not None:
                self._persist.append(entry)
            with self._owner(owner_id).rw.write():
                self._apply_effects(entry)
            if self._persist is not None and self._persist.entries_since_snapshot >= self.snapshot_every:
                self._snapshot()
        return response

    def _apply_effects(self, entry: dict[str, Any]) -> None:
        owner = entry["owner"]
        for eff in entry["effects"]:
            t = eff["t"]
            if t == "message":
                msg = MessageRecord.from_dict(eff["rec"])
                self.docs.put_message(msg)
                self.vectors.upsert_message_vector(msg.id, owner, decode_vector(eff["vec"]), truncated=True)
            elif t == "memory":
                rec = MemoryRecord.from_dict(eff["rec"])
                self.docs.put_memory(rec)
                self._index_memory(rec, decode_vector(eff["vec"]))
            elif t == "state":
                status = Status(eff["status"])
                self.docs.set_state(owner, eff["id"], is_current=eff["is_current"], status=status)
                self.lexical.set_current(eff["id"], owner, eff["is_current"])
                self.vectors.set_current(eff["id"], owner, eff["is_current"])
            elif t == "processed":
                self.docs.mark_processed(owner, eff["ids"])
            else:
                raise ValueError(f"unknown effect {t!r}")
        self._next = {k: max(self._next[k], v) for k, v in entry["next_ids"].items()}
        self._seq = max(self._seq, entry["seq"])
        if entry.get("key"):
            self._idem[(owner, entry["kind"], entry["key"])] = entry["response"]

    def _index_memory(self, rec: MemoryRecord, e768: np.ndarray) -> None:
        ctx = rec.session_id if rec.scope is Scope.CONTEXT else None
        self.lexical.index_document(rec.id, rec.owner_id, rec.content, is_current=rec.is_current, context_session=ctx)
        payload = VectorPayload(rec.id, rec.owner_id, rec.is_current, rec.event_time, ctx)
        self.vectors.upsert_memory_vectors(rec.id, e768, payload)

    def _snapshot(self) -> None:
        assert self._persist is not None
        owners = sorted(set(self.docs.owners()))
        messages, memories = [], []
        for owner in owners:
            msg_vecs = dict(self.vectors.message_rows(owner))
            for m in self.docs.messages(owner):
                messages.append({"rec": m.to_dict(), "vec": encode_vector(msg_vecs[m.id])})
            for rec in self.docs.memories(owner):
                memories.append({"rec": rec.to_dict(), "vec": encode_vector(self.vectors.embedding(rec.id, owner))})
        state = {
            "seq": self._seq,
            "next_ids": dict(self._next),
            "messages": messages,
            "memories": memories,
            "idempotency": [[o, k, key, resp] for (o, k, key), resp in sorted(self._idem.items())],
        }
        self._persist.write_snapshot(state)
        log.info("snapshot written at seq %d", self._seq)

    def _recover(self) -> None:
        assert self._persist is not None
        snapshot, entries = self._persist.load()
        if snapshot is not None:
            for item in snapshot["messages"]:
                msg = MessageRecord.from_dict(item["rec"])
                self.docs.put_message(msg)
                self.vectors.upsert_message_vector(msg.id, msg.owner_id, decode_vector(item["vec"]), truncated=True)
            for item in snapshot["memories"]:
                rec = MemoryRecord.from_dict(item["rec"])
                self.docs.put_memory(rec)
                self._index_memory(rec, decode_vector(item["vec"]))
            self._next = dict(snapshot["next_ids"])
            self._seq = snapshot["seq"]
            for owner, kind, key, resp in snapshot["idempotency"]:
                self._idem[(owner, kind, key)] = resp
        for entry in entries:
            self._apply_effects(entry)
        log.info("recovered to seq %d (%d log entries replayed)", self._seq, len(entries))

    def snapshot(self) -> None:
        """Force a snapshot now (no-op without a data directory)."""
        if self._persist is not None:
            with self._commit_lock:
                self._snapshot()

    def _cached(self, owner_id: str, kind: str, key: str | None) -> Any:
        if key is None:
            return None
        return self._idem.get((owner_id, kind, key))

    # -- ingestion ------------------------------------------------------------

    def ingest_messages(
        self, owner_id: str, session_id: str, lines: Sequence[str], idempotency_key: str | None = None
    ) -> list[MessageRecord]:
        """Store raw messages (processed=false) and embed them for immediate recall.

        A malformed line aborts the whole batch before anything is written.
        """
        self._check_open()
        with self._owner(owner_id).writer:
            cached = self._cached(owner_id, "messages", idempotency_key)
            if cached is not None:
                return [self.docs.message(owner_id, mid) for mid in cached["message_ids"]]
            parsed = [parse_message_line(line) for line in lines]
            if not parsed:
                return []
            texts = [text for _, _, text in parsed]
            vecs = self.embedder.embed_many(texts, "document")
            effects = []
            for i, ((ts, speaker, text), vec) in enumerate(zip(parsed, vecs)):
                rec = MessageRecord(f"{_TMP}{i}", owner_id, session_id, speaker, text, ts, False)
                effects.append({"t": "message", "rec": rec.to_dict(), "vec": encode_vector(truncate_normalize(vec))})
            response = {"message_ids": [e["rec"]["id"] for e in effects]}
            response = self._commit(owner_id, "messages", _Planned(effects), response, idempotency_key)
            return [self.docs.message(owner_id, mid) for mid in response["message_ids"]]

    def retrieve_context(self, owner_id: str, batch_text: str, n: int | None = None) -> list[MemoryRecord]:
        """Top-n current memories most similar to ``batch_text``."""
        n = self.context_size if n is None else n
        if n <= 0:
            return []
        q = self.embedder.embed(batch_text, "document")
        with self._owner(owner_id).rw.read():
            hits = self.vectors.two_stage_search(q, VectorFilter(owner_id, True), n, self.fusion.shortlist_size)
            return [self.docs.get(owner_id, mid) for mid, _ in hits]

    def _plan_operations(
        self,
        owner_id: str,
        ops: Sequence[ExtractionOp],
        batch: Sequence[MessageRecord],
        now: datetime | None,
        context_ids: set[str] | None,
    ) -> _Planned:
        result = ApplyResult()
        effects: list[dict[str, Any]] = []
        created_at = now or (max(m.timestamp for m in batch) if batch else datetime.now(UTC).replace(microsecond=0))
        batch_session = batch[0].session_id if batch else None
        batch_ids = tuple(m.id for m in batch)
        staged: dict[str, MemoryRecord] = {}  # overlay of records touched in this batch
        to_embed: list[tuple[int, str]] = []
        n_new = 0

        def lookup(mid: str) -> MemoryRecord | None:
            return staged.get(mid) or self.docs.find(owner_id, mid)

        for i, op in enumerate(ops):
            try:
                op.validate()
            except InvalidOperation as exc:
                result.errors.append({"index": i, "error": "InvalidOperation", "detail": str(exc)})
                continue
            if op.action is Action.NONE:
                result.skipped += 1
                continue
            target = None
            if op.action in (Action.UPDATE, Action.DELETE):
                target = lookup(op.replaces_id)
                if target is None or (context_ids is not None and op.replaces_id not in context_ids and op.replaces_id not in staged):
                    result.errors.append({"index": i, "error": "UnknownReplacesId", "replaces_id": op.replaces_id})
                    continue
                if not target.is_current:
                    result.errors.append({"index": i, "error": "StaleTarget", "replaces_id": op.replaces_id})
                    continue
            scope = op.scope
            session = batch_session if scope is Scope.CONTEXT else None
            if scope is Scope.CONTEXT and session is None:
                result.errors.append({"index": i, "error": "InvalidOperation", "detail": "CONTEXT scope needs a session"})
                continue
            event_time = datetime(op.event_date.year, op.event_date.month, op.event_date.day, tzinfo=UTC) if op.event_date else None
            sources = op.source_message_ids or batch_ids
            if op.action is Action.DELETE:
                staged[target.id] = target.with_state(is_current=False, status=Status.DELETED)
                effects.append({"t": "state", "id": target.id, "is_current": False, "status": Status.DELETED.value})
                result.deleted.append(target.id)
                continue
            new_id = f"{_TMP}{n_new}"
            n_new += 1
            if op.action is Action.UPDATE:
                staged[target.id] = target.with_state(is_current=False, status=Status.HISTORICAL)
                effects.append({"t": "state", "id": target.id, "is_current": False, "status": Status.HISTORICAL.value})
                rec = MemoryRecord(
                    new_id, owner_id, op.fact, op.category or target.category, scope, session,
                    target.version + 1, target.id, True, Status.ACTIVE, event_time, created_at, sources,
                )
                result.updated.append(new_id)
            else:
                rec = MemoryRecord(
                    new_id, owner_id, op.fact, op.category, scope, session,
                    1, None, True, Status.ACTIVE, event_time, created_at, sources,
                )
                result.added.append(new_id)
            staged[new_id] = rec
            to_embed.append((len(effects), op.fact))
            effects.append({"t": "memory", "rec": rec.to_dict(), "vec": None})

        if to_embed:
            vecs = self.embedder.embed_many([text for _, text in to_embed], "document")
            for (idx, _), vec in zip(to_embed, vecs):
                effects[idx]["vec"] = encode_vector(vec)
        if batch:
            effects.append({"t": "processed", "ids": list(batch_ids)})
        return _Planned(effects, result)

    def apply_operations(
        self,
        owner_id: str,
        ops: Sequence[ExtractionOp],
        message_batch: Sequence[MessageRecord] = (),
        *,
        idempotency_key: str | None = None,
        now: datetime | None = None,
    ) -> ApplyResult:
        """Apply extractor operations with version chaining.

        Rejected operations (unknown or stale targets, invalid shapes) are
        reported in ``errors``; the rest still apply. ``created_at`` of new
        records defaults to the latest message timestamp in the batch.
        """
        self._check_open()
        with self._owner(owner_id).writer:
            return self._apply_locked(owner_id, ops, message_batch, idempotency_key, now, None)

    def _apply_locked(self, owner_id, ops, batch, key, now, context_ids) -> ApplyResult:
        cached = self._cached(owner_id, "apply", key)
        if cached is not None:
            return ApplyResult(**cached)
        planned = self._plan_operations(owner_id, ops, batch, now, context_ids)
        if not planned.effects and key is None:
            return planned.result
        response = self._commit(owner_id, "apply", planned, planned.result.to_dict(), key)
        return ApplyResult(**response)

    def process_pending(self, owner_id: str, idempotency_key: str | None = None) -> ProcessSummary:
        """Run extraction over every pending (owner, session) batch.

        Batches are committed one at a time, oldest session first. When the
        extractor fails the failing batch stays pending and ExtractorError is
        raised; batches before it remain applied.
        """
        self._check_open()
        with self._owner(owner_id).writer:
            cached = self._cached(owner_id, "process", idempotency_key)
            if cached is not None:
                return _summary_from_dict(cached)
            summary = ProcessSummary()
            pending = sorted(self.docs.pending(owner_id), key=lambda m: (m.timestamp, m.id))
            sessions: dict[str, list[MessageRecord]] = {}
            for m in pending:
                sessions.setdefault(m.session_id, []).append(m)
            for session_id, batch in sessions.items():
                ctx = self.retrieve_context(owner_id, "\n".join(m.text for m in batch))
                try:
                    ops = self.extractor.extract(batch, ctx)
                except ExtractorError:
                    raise
                except Exception as exc:  # extractor bugs must not corrupt state
                    raise ExtractorError(f"extractor raised {exc!r}") from exc
                res = self._apply_locked(owner_id, ops, batch, None, None, {m.id for m in ctx})
                summary.absorb(res, len(batch))
            if idempotency_key is not None:
                self._commit(owner_id, "process", _Planned([]), summary.to_dict(), idempotency_key)
            return summary

    # -- reads ----------------------------------------------------------------

    def search(
        self,
        owner_id: str,
        query: str,
        k: int = 10,
        *,
        now: datetime | None = None,
        include_historical: bool | None = None,
        session_id: str | None = None,
    ) -> SearchResult:
        self._check_open()
        now = now or datetime.now(UTC)
        with self._owner(owner_id).rw.read():
            return search_pipeline(
                owner_id=owner_id,
                query=query,
                k=k,
                now=now,
                docs=self.docs,
                lexical=self.lexical,
                vectors=self.vectors,
                embedder=self.embedder,
                reranker=self.reranker,
                fcfg=self.fusion,
                tcfg=self.temporal,
                include_historical=include_historical,
                session_id=session_id,
                executor=self._executor,
            )

    def history(self, owner_id: str, memory_id: str) -> list[MemoryRecord]:
        """Version chain containing ``memory_id``, oldest first (NotFound if absent)."""
        self._check_open()
        with self._owner(owner_id).rw.read():
            return self.docs.chain(owner_id, memory_id)

    def immediate_recall(self, owner_id: str, query: str, k: int = 10) -> list[tuple[MessageRecord, float]]:
        """Search raw messages, including ones not yet extracted."""
        self._check_open()
        q = self.embedder.embed(query, "query")
        with self._owner(owner_id).rw.read():
            hits = self.vectors.immediate_recall_search(q, VectorFilter(owner_id, False), k)
            return [(self.docs.message(owner_id, mid), sim) for mid, sim in hits]

    def memory(self, owner_id: str, memory_id: str) -> MemoryRecord:
        with self._owner(owner_id).rw.read():
            return self.docs.get(owner_id, memory_id)

    def memories(self, owner_id: str) -> list[MemoryRecord]:
        with self._owner(owner_id).rw.read():
            return self.docs.memories(owner_id)

    def messages(self, owner_id: str) -> list[MessageRecord]:
        with self._owner(owner_id).rw.read():
            return self.docs.messages(owner_id)


def _substitute_effect(eff: dict[str, Any], mapping: dict[str, str]) -> dict[str, Any]:
    eff = dict(eff)
    if "rec" in eff:
        rec = dict(eff["rec"])
        rec["id"] = mapping.get(rec["id"], rec["id"])
        if rec.get("replaces_id") is not None:
            rec["replaces_id"] = mapping.get(rec["replaces_id"], rec["replaces_id"])
        eff["rec"] = rec
    if "id" in eff:
        eff["id"] = mapping.get(eff["id"], eff["id"])
    return eff


def _summary_from_dict(data: dict[str, Any]) -> ProcessSummary:
    ids = data["memory_ids"]
    return ProcessSummary(
        batches=data["batches"],
        messages_processed=data["messages_processed"],
        added=list(ids["added"]),
        updated=list(ids["updated"]),
        deleted=list(ids["deleted"]),
        skipped=data["skipped"],
        errors=list(data["errors"]),
    )
