"""Long-term conversational memory: versioned facts, hybrid retrieval, evaluation."""

from .engine import ApplyResult, MemoryEngine, ProcessSummary
from .extraction import Action, ExtractionOp, ExtractorError, RemoteExtractor, RuleExtractor
from .lexical import BM25Index, LexicalQuery, bm25_search
from .model import (
    Category,
    FusionConfig,
    MalformedLine,
    MemoryRecord,
    MessageRecord,
    QueryAnalysis,
    Scope,
    ScoredHit,
    Status,
    TemporalConfig,
    analyze_query,
    parse_message_line,
)
from .retrieval import PassthroughReranker, RemoteReranker, SearchResult, rrf_fuse, temporal_score
from .store import NotFound
from .vectors import ReferenceEmbedder, RemoteEmbedder, VectorStore, truncate_normalize

__all__ = [
    "Action", "ApplyResult", "BM25Index", "Category", "ExtractionOp", "ExtractorError", "FusionConfig",
    "LexicalQuery", "MalformedLine", "MemoryEngine", "MemoryRecord", "MessageRecord", "NotFound",
    "PassthroughReranker", "ProcessSummary", "QueryAnalysis", "ReferenceEmbedder", "RemoteEmbedder",
    "RemoteExtractor", "RemoteReranker", "RuleExtractor", "Scope", "ScoredHit", "SearchResult", "Status",
    "TemporalConfig", "VectorStore", "analyze_query", "bm25_search", "parse_message_line", "rrf_fuse",
    "temporal_score", "truncate_normalize",
]
