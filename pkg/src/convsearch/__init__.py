"""Conversational passage retrieval pipelines with TREC-style evaluation.

The package splits into composable layers: text analysis and corpus
handling, first-pass retrieval (BM25, relevance-model expansion, dense
dot-product search), conversational query rewriting, ranked-list fusion,
second-stage reranking, pipeline orchestration with named presets, and
an evaluation harness for runfiles and qrels.
"""

from __future__ import annotations

from .analysis import AnalyzerConfig, analyze
from .corpus import Corpus, CorpusStats, Passage
from .dense import HashedBagEncoder, VectorStore, dense_search
from .errors import (ConfigError, ConvSearchError, FormatError, IngestError,
                     MissingResponseError, ProtocolError, StageError,
                     TransportError)
from .evaluation import (MetricReport, Qrels, compare_reports, compute_metrics,
                         paired_t_test, parse_qrels, parse_runfile,
                         write_qrels, write_runfile)
from .fusion import rrf_fuse, score_combine
from .index import BM25Params, BM25_PRESETS, InvertedIndex
from .pipeline import (LegConfig, PipelineConfig, PipelineRunner, RerankStage,
                       RewriterSpec, RunResult, TurnRecord, grid, load_config,
                       preset, preset_names)
from .prf import PrfParams, WeightedQuery, rm3_expand, weighted_search
from .ranking import RankedList
from .remote import ModelServerClient, RemoteEncoder
from .rerank import (Bm25Rescorer, MarginStubScorer, PairCandidate,
                     QueryLikelihoodScorer, RemoteDuoScorer, RemoteMonoScorer,
                     TermOverlapScorer, pairwise_rerank, pointwise_rerank)
from .rewrite import (ContextBudget, ContextResult, Conversation,
                      HistoryAppendRewriter, IdentityRewriter, RemoteRewriter,
                      Turn, build_context_improved, build_context_original)
from .topics import load_topics, parse_topics, resolve_responses

__version__ = "1.0.0"

__all__ = [
    "AnalyzerConfig", "analyze",
    "Corpus", "CorpusStats", "Passage",
    "HashedBagEncoder", "VectorStore", "dense_search",
    "ConfigError", "ConvSearchError", "FormatError", "IngestError",
    "MissingResponseError", "ProtocolError", "StageError", "TransportError",
    "MetricReport", "Qrels", "compare_reports", "compute_metrics",
    "paired_t_test", "parse_qrels", "parse_runfile", "write_qrels",
    "write_runfile",
    "rrf_fuse", "score_combine",
    "BM25Params", "BM25_PRESETS", "InvertedIndex",
    "LegConfig", "PipelineConfig", "PipelineRunner", "RerankStage",
    "RewriterSpec", "RunResult", "TurnRecord", "grid", "load_config",
    "preset", "preset_names",
    "PrfParams", "WeightedQuery", "rm3_expand", "weighted_search",
    "RankedList",
    "ModelServerClient", "RemoteEncoder",
    "Bm25Rescorer", "MarginStubScorer",
    "PairCandidate", "QueryLikelihoodScorer",
    "RemoteDuoScorer", "RemoteMonoScorer", "TermOverlapScorer",
    "pairwise_rerank", "pointwise_rerank",
    "ContextBudget", "ContextResult", "Conversation", "HistoryAppendRewriter",
    "IdentityRewriter", "RemoteRewriter", "Turn", "build_context_improved",
    "build_context_original",
    "load_topics", "parse_topics", "resolve_responses",
    "__version__",
]
