"""In-process inverted index with Okapi BM25 scoring and owner isolation.

Statistics (N, df, avgdl) are kept per owner partition and count every indexed
document of that owner, current or not; the ``current_only`` flag is a filter
and does not alter scoring, mirroring how a filter clause behaves in a search
engine bool query.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

K1 = 1.2
B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmptyQuery(ValueError):
    """The analyzed query contains no tokens."""


def analyze(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Posting:
    doc_id: str
    term_frequency: int
    doc_length: int


@dataclass(frozen=True)
class LexicalQuery:
    text: str
    owner_id: str
    current_only: bool = True
    limit: int = 50
    session_id: str | None = None

    def __post_init__(self) -> None:
        if self.limit < 1:
            raise ValueError("limit must be >= 1")


@dataclass
class _Doc:
    length: int
    terms: Counter
    is_current: bool
    context_session: str | None  # set for CONTEXT-scoped documents


@dataclass
class _Partition:
    docs: dict[str, _Doc] = field(default_factory=dict)
    postings: dict[str, dict[str, int]] = field(default_factory=dict)
    total_length: int = 0


def idf(n_docs: int, df: int) -> float:
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def term_score(tf: int, dl: int, avgdl: float, term_idf: float, k1: float = K1, b: float = B) -> float:
    return term_idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl))


class BM25Index:
    def __init__(self, k1: float = K1, b: float = B) -> None:
        self.k1 = k1
        self.b = b
        self._parts: dict[str, _Partition] = {}

    def __len__(self) -> int:
        return sum(len(p.docs) for p in self._parts.values())

    def index_document(
        self,
        doc_id: str,
        owner_id: str,
        text: str,
        *,
        is_current: bool = True,
        context_session: str | None = None,
    ) -> None:
        """Add ``doc_id``, replacing any previous version of it."""
        part = self._parts.setdefault(owner_id, _Partition())
        if doc_id in part.docs:
            self._drop(part, doc_id)
        terms = Counter(analyze(text))
        doc = _Doc(sum(terms.values()), terms, is_current, context_session)
        part.docs[doc_id] = doc
        part.total_length += doc.length
        for term, tf in terms.items():
            part.postings.setdefault(term, {})[doc_id] = tf

    def set_current(self, doc_id: str, owner_id: str, is_current: bool) -> None:
        """Flip the is_current flag without re-analyzing the text."""
        self._parts[owner_id].docs[doc_id].is_current = is_current

    def is_current(self, doc_id: str, owner_id: str) -> bool:
        return self._parts[owner_id].docs[doc_id].is_current

    def remove(self, doc_id: str, owner_id: str) -> None:
        part = self._parts.get(owner_id)
        if part is not None and doc_id in part.docs:
            self._drop(part, doc_id)

    def _drop(self, part: _Partition, doc_id: str) -> None:
        doc = part.docs.pop(doc_id)
        part.total_length -= doc.length
        for term in doc.terms:
            plist = part.postings[term]
            del plist[doc_id]
            if not plist:
                del part.postings[term]

    def postings(self, owner_id: str, term: str) -> list[Posting]:
        part = self._parts.get(owner_id)
        if part is None:
            return []
        return [
            Posting(doc_id, tf, part.docs[doc_id].length)
            for doc_id, tf in sorted(part.postings.get(term, {}).items())
        ]

    def search(self, q: LexicalQuery) -> list[tuple[str, float]]:
        """Rank the owner's documents by BM25 against ``q.text``.

        Multi-term queries use OR semantics: a document's score is the sum of
        its per-term scores. Ties are broken by ascending doc id.
        """
        tokens = analyze(q.text)
        if not tokens:
            raise EmptyQuery(q.text)
        part = self._parts.get(q.owner_id)
        if part is None or not part.docs:
            return []
        n_docs = len(part.docs)
        avgdl = part.total_length / n_docs
        if avgdl == 0:
            return []
        scores: dict[str, float] = {}
        # repeated query terms count once per occurrence, as in a match query
        for term in tokens:
            plist = part.postings.get(term)
            if not plist:
                continue
            term_idf = idf(n_docs, len(plist))
            for doc_id, tf in plist.items():
                doc = part.docs[doc_id]
                if q.current_only and not doc.is_current:
                    continue
                if q.session_id is not None and doc.context_session not in (None, q.session_id):
                    continue
                s = term_score(tf, doc.length, avgdl, term_idf, self.k1, self.b)
                scores[doc_id] = scores.get(doc_id, 0.0) + s
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[: q.limit]


def bm25_search(index: BM25Index, q: LexicalQuery) -> list[tuple[str, float]]:
    return index.search(q)
