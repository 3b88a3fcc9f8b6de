"""Matryoshka vector store (768D accurate, 256D fast) and embedders."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Protocol, Sequence

import numpy as np

from . import _lexicon
from .lexical import analyze

FULL_DIM = 768
SHORT_DIM = 256
NORM_TOL = 1e-6

DOCUMENT_PREFIX = "search_document: "
QUERY_PREFIX = "search_query: "
ROLE_PREFIX = {"document": DOCUMENT_PREFIX, "query": QUERY_PREFIX}


class DegenerateTruncation(ValueError):
    """The 256-dim prefix of an embedding has (near) zero norm."""


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def truncate_normalize(e: np.ndarray, dim: int = SHORT_DIM) -> np.ndarray:
    """Keep the first ``dim`` components and rescale them to unit norm."""
    e = np.asarray(e, dtype=np.float64)
    head = e[:dim]
    norm = float(np.linalg.norm(head))
    if norm < 1e-9:
        raise DegenerateTruncation(f"norm of first {dim} components is {norm:.3g}")
    return head / norm


def check_embedding(e: np.ndarray, dim: int = FULL_DIM) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (dim,):
        raise ValueError(f"expected shape ({dim},), got {e.shape}")
    if not np.all(np.isfinite(e)):
        raise ValueError("embedding has non-finite components")
    if abs(float(np.linalg.norm(e)) - 1.0) > NORM_TOL:
        raise ValueError("embedding is not unit-norm")
    return e


@dataclass(frozen=True)
class VectorPayload:
    memory_id: str
    user_id: str
    is_current: bool = True
    event_time: datetime | None = None
    context_session: str | None = None  # session of a CONTEXT-scoped record


@dataclass(frozen=True)
class VectorFilter:
    user_id: str
    current_only: bool = True
    session_id: str | None = None


_DOT_CHUNK = 2048


def row_dots(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``mat @ q`` computed so each row's result is independent of the matrix shape.

    BLAS kernels pick blocking by matrix size, so the same row can come out a
    few ulps apart depending on how many other rows are multiplied with it.
    Here every row is reduced by the same fixed summation over its own
    products, which makes shortlist re-scoring and exhaustive search agree
    bit for bit and keeps results reproducible across restarts.
    """
    out = np.empty(mat.shape[0])
    for start in range(0, mat.shape[0], _DOT_CHUNK):
        block = mat[start:start + _DOT_CHUNK]
        np.sum(block * q, axis=1, out=out[start:start + block.shape[0]])
    return out


def rank_rows(sims: np.ndarray, ids: Sequence[str], n: int) -> list[int]:
    """Indices of the ``n`` best entries by (similarity desc, id asc)."""
    total = len(sims)
    if total == 0 or n <= 0:
        return []
    if total > n:
        kth = np.partition(sims, total - n)[total - n]
        candidates = np.flatnonzero(sims >= kth)
    else:
        candidates = np.arange(total)
    ordered = sorted(candidates.tolist(), key=lambda i: (-sims[i], ids[i]))
    return ordered[:n]


class _Collection:
    """Rows of one or more aligned matrices for a single user partition."""

    def __init__(self, dims: tuple[int, ...]) -> None:
        self.dims = dims
        self.ids: list[str] = []
        self.payloads: list[VectorPayload] = []
        self.row_of: dict[str, int] = {}
        self._cap = 0
        self.mats = {d: np.zeros((0, d)) for d in dims}
        self.current = np.zeros(0, dtype=bool)
        self.context = np.zeros(0, dtype=object)

    def __len__(self) -> int:
        return len(self.ids)

    def _grow(self) -> None:
        cap = max(16, self._cap * 2)
        for d in self.dims:
            grown = np.zeros((cap, d))
            grown[: self._cap] = self.mats[d]
            self.mats[d] = grown
        self.current = np.concatenate([self.current, np.zeros(cap - self._cap, dtype=bool)])
        self.context = np.concatenate([self.context, np.full(cap - self._cap, None, dtype=object)])
        self._cap = cap

    def upsert(self, key: str, vecs: dict[int, np.ndarray], payload: VectorPayload) -> None:
        row = self.row_of.get(key)
        if row is None:
            if len(self.ids) == self._cap:
                self._grow()
            row = len(self.ids)
            self.ids.append(key)
            self.payloads.append(payload)
            self.row_of[key] = row
        else:
            self.payloads[row] = payload
        for d, v in vecs.items():
            self.mats[d][row] = v
        self.current[row] = payload.is_current
        self.context[row] = payload.context_session

    def set_current(self, key: str, is_current: bool) -> None:
        row = self.row_of[key]
        self.payloads[row] = replace(self.payloads[row], is_current=is_current)
        self.current[row] = is_current

    def mask(self, flt: VectorFilter) -> np.ndarray:
        n = len(self.ids)
        keep = np.ones(n, dtype=bool)
        if flt.current_only:
            keep &= self.current[:n]
        if flt.session_id is not None:
            ctx = self.context[:n]
            keep &= np.array([c is None or c == flt.session_id for c in ctx], dtype=bool)
        return keep

    def vector(self, key: str, dim: int) -> np.ndarray:
        return self.mats[dim][self.row_of[key]].copy()


class VectorStore:
    """Memory vectors in a 768D and a 256D collection plus a 256D message collection.

    Partitions are keyed by user id; search never crosses partitions.
    """

    def __init__(self) -> None:
        self._memories: dict[str, _Collection] = {}
        self._messages: dict[str, _Collection] = {}

    # -- memories -----------------------------------------------------------

    def upsert_memory_vectors(self, memory_id: str, e768: np.ndarray, payload: VectorPayload) -> None:
        if payload.memory_id != memory_id:
            raise ValueError("payload.memory_id must equal memory_id")
        e768 = np.asarray(e768, dtype=np.float64)
        e256 = truncate_normalize(e768)
        coll = self._memories.setdefault(payload.user_id, _Collection((FULL_DIM, SHORT_DIM)))
        coll.upsert(memory_id, {FULL_DIM: e768, SHORT_DIM: e256}, payload)

    def set_current(self, memory_id: str, user_id: str, is_current: bool) -> None:
        self._memories[user_id].set_current(memory_id, is_current)

    def payload(self, memory_id: str, user_id: str) -> VectorPayload | None:
        coll = self._memories.get(user_id)
        if coll is None or memory_id not in coll.row_of:
            return None
        return coll.payloads[coll.row_of[memory_id]]

    def payloads(self, user_id: str) -> list[VectorPayload]:
        coll = self._memories.get(user_id)
        return list(coll.payloads) if coll else []

    def embedding(self, memory_id: str, user_id: str, dim: int = FULL_DIM) -> np.ndarray:
        return self._memories[user_id].vector(memory_id, dim)

    def users(self) -> list[str]:
        return sorted(self._memories)

    def memory_rows(self, user_id: str) -> list[tuple[str, np.ndarray, VectorPayload]]:
        coll = self._memories.get(user_id)
        if coll is None:
            return []
        return [(k, coll.mats[FULL_DIM][i].copy(), coll.payloads[i]) for i, k in enumerate(coll.ids)]

    def two_stage_search(
        self,
        q768: np.ndarray,
        flt: VectorFilter,
        k: int,
        shortlist_size: int = 200,
    ) -> list[tuple[str, float]]:
        """Shortlist by 256D cosine, then re-score the shortlist in 768D."""
        coll = self._memories.get(flt.user_id)
        if coll is None or len(coll) == 0 or k <= 0:
            return []
        q768 = np.asarray(q768, dtype=np.float64)
        q256 = truncate_normalize(q768)
        rows = np.flatnonzero(coll.mask(flt))
        if rows.size == 0:
            return []
        ids = [coll.ids[r] for r in rows]
        sims256 = row_dots(coll.mats[SHORT_DIM][: len(coll)], q256)[rows]
        shortlist = rows[rank_rows(sims256, ids, shortlist_size)]
        short_ids = [coll.ids[r] for r in shortlist]
        sims768 = row_dots(coll.mats[FULL_DIM][shortlist], q768)
        order = rank_rows(sims768, short_ids, k)
        return [(short_ids[i], float(sims768[i])) for i in order]

    def exhaustive_search(self, q768: np.ndarray, flt: VectorFilter, k: int) -> list[tuple[str, float]]:
        """Single-stage 768D search over every row that passes the filter."""
        coll = self._memories.get(flt.user_id)
        if coll is None or len(coll) == 0 or k <= 0:
            return []
        rows = np.flatnonzero(coll.mask(flt))
        ids = [coll.ids[r] for r in rows]
        sims = row_dots(coll.mats[FULL_DIM][: len(coll)], np.asarray(q768, dtype=np.float64))[rows]
        return [(ids[i], float(sims[i])) for i in rank_rows(sims, ids, k)]

    # -- messages (immediate recall) ---------------------------------------

    def upsert_message_vector(self, message_id: str, user_id: str, e: np.ndarray, *, truncated: bool = False) -> None:
        """Store a message's 256D vector; pass ``truncated=True`` if ``e`` already is one."""
        vec = np.asarray(e, dtype=np.float64) if truncated else truncate_normalize(e)
        coll = self._messages.setdefault(user_id, _Collection((SHORT_DIM,)))
        coll.upsert(message_id, {SHORT_DIM: vec}, VectorPayload(message_id, user_id))

    def message_rows(self, user_id: str) -> list[tuple[str, np.ndarray]]:
        coll = self._messages.get(user_id)
        if coll is None:
            return []
        return [(k, coll.mats[SHORT_DIM][i].copy()) for i, k in enumerate(coll.ids)]

    def immediate_recall_search(self, q768: np.ndarray, flt: VectorFilter, k: int) -> list[tuple[str, float]]:
        coll = self._messages.get(flt.user_id)
        if coll is None or len(coll) == 0 or k <= 0:
            return []
        sims = row_dots(coll.mats[SHORT_DIM][: len(coll)], truncate_normalize(q768))
        return [(coll.ids[i], float(sims[i])) for i in rank_rows(sims, coll.ids, k)]


# --- embedders -------------------------------------------------------------


class Embedder(Protocol):
    dim: int
    deterministic: bool

    def embed(self, text: str, role: str = "document") -> np.ndarray: ...

    def embed_many(self, texts: Sequence[str], role: str = "document") -> list[np.ndarray]: ...


class EmbedderError(RuntimeError):
    pass


def _seed_for(*parts: str) -> int:
    digest = hashlib.blake2b("\x1f".join(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class ReferenceEmbedder:
    """Deterministic offline embedder: a seeded random projection of the token multiset.

    Each token maps to a fixed Gaussian direction. Tokens listed in one
    synonym group share most of a concept direction, so paraphrases land
    close together. Function words carry little weight and unknown surface
    forms (names, rare words) half weight. Dimensions past the 256 prefix are
    damped so a truncated vector keeps most of the signal, as a
    Matryoshka-trained model would.

    The role prefix is accepted for interface parity but does not alter the
    vector: a bag-of-tokens projection gains nothing from a constant token.
    """

    dim = FULL_DIM
    deterministic = True

    synonym_mix = 0.35
    function_weight = 0.15
    unknown_weight = 0.5
    tail_scale = 0.5

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self._profile = np.ones(FULL_DIM)
        self._profile[SHORT_DIM:] = self.tail_scale
        self._cache: dict[str, tuple[np.ndarray, float]] = {}
        self._concept_of = {t: c for c, toks in _lexicon.CONCEPTS.items() for t in toks}

    def _gaussian(self, kind: str, name: str) -> np.ndarray:
        rng = np.random.default_rng(_seed_for(str(self.seed), kind, name))
        return rng.standard_normal(FULL_DIM) * self._profile

    def _token(self, token: str) -> tuple[np.ndarray, float]:
        hit = self._cache.get(token)
        if hit is not None:
            return hit
        concept = self._concept_of.get(token)
        own = self._gaussian("tok", token)
        if concept is not None:
            vec = normalize(normalize(self._gaussian("concept", concept)) + self.synonym_mix * normalize(own))
            weight = 1.0
        else:
            vec = normalize(own)
            weight = self.function_weight if token in _lexicon.FUNCTION_WORDS else self.unknown_weight
        self._cache[token] = (vec, weight)
        return vec, weight

    def embed(self, text: str, role: str = "document") -> np.ndarray:
        if role not in ROLE_PREFIX:
            raise ValueError(f"unknown role {role!r}")
        tokens = analyze(text)
        if not tokens:
            # empty text: a fixed direction so the result stays unit-norm
            return normalize(self._gaussian("empty", ""))
        acc = np.zeros(FULL_DIM)
        for tok in tokens:
            vec, weight = self._token(tok)
            acc += weight * vec
        return normalize(acc)

    def embed_many(self, texts: Sequence[str], role: str = "document") -> list[np.ndarray]:
        return [self.embed(t, role) for t in texts]


class RemoteEmbedder:
    """HTTP embedder: POST ``{"texts": [...], "role": ...}`` -> arrays of 768 reals.

    Texts are sent with their role prefix applied. The response may be a bare
    list of vectors or an object with an ``embeddings`` field.
    """

    dim = FULL_DIM
    deterministic = False

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 10.0, client=None) -> None:
        import httpx

        self.endpoint = endpoint
        self.timeout = timeout
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def embed_many(self, texts: Sequence[str], role: str = "document") -> list[np.ndarray]:
        import httpx

        prefix = ROLE_PREFIX[role]
        body = {"texts": [prefix + t for t in texts], "role": role}
        try:
            resp = self._client.post(self.endpoint, json=body)
            resp.raise_for_status()
            data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise EmbedderError(str(exc)) from exc
        vectors = data["embeddings"] if isinstance(data, dict) else data
        if len(vectors) != len(texts):
            raise EmbedderError("embedding count does not match input count")
        out = []
        for v in vectors:
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != (FULL_DIM,) or not np.all(np.isfinite(arr)):
                raise EmbedderError(f"bad embedding shape {arr.shape}")
            out.append(normalize(arr))
        return out

    def embed(self, text: str, role: str = "document") -> np.ndarray:
        return self.embed_many([text], role)[0]
