"""End-to-end pipeline orchestration.

A PipelineConfig declares one retrieve-then-rerank architecture:
rewriters per stage, first-pass legs (sparse, sparse with relevance
feedback, dense), rank fusion, rerank stages, and an optional score
combination of the first-pass and reranked lists. Multi-rewrite
variants either fuse several first-pass runs (one per rewriter) before
reranking, or rerank a shared candidate set once per rewriter and fuse
the results.

The runner processes turns of a conversation strictly in order, since
rewrites feed forward into later contexts. Distinct conversations are
independent and may run on a thread pool. A turn that references a
missing canonical response is skipped; any other stage failure aborts
the rest of its conversation, and the run continues with the next one.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .analysis import AnalyzerConfig
from .corpus import Corpus
from .dense import BUILTIN_ENCODER_ID, HashedBagEncoder, VectorStore, dense_search
from .errors import ConfigError, MissingResponseError, StageError
from .evaluation import write_runfile
from .fusion import DEFAULT_K_RRF, rrf_fuse, score_combine
from .index import BM25Params, BM25_PRESETS, DEFAULT_DEPTH, InvertedIndex
from .prf import PrfParams, WeightedQuery, rm3_expand, weighted_search
from .ranking import RankedList
from .remote import ModelServerClient, resolve_endpoint
from .rerank import (DEFAULT_PAIRWISE_CUTOFF, Bm25Rescorer, MarginStubScorer,
                     PairwiseScorer, PointwiseScorer, QueryLikelihoodScorer,
                     RemoteDuoScorer, RemoteMonoScorer, TermOverlapScorer,
                     pairwise_rerank, pointwise_rerank)
from .rewrite import (DEFAULT_SEPARATOR, RESPONSE_WINDOW, ContextBudget,
                      ContextResult, Conversation, HistoryAppendRewriter,
                      IdentityRewriter, RemoteRewriter, Rewriter, Turn,
                      build_context_improved, build_context_original)

log = logging.getLogger(__name__)

REWRITER_NAMES = ("identity", "history-append", "remote")
CONTEXT_FORMS = ("original", "improved")
LEG_KINDS = ("bm25", "bm25+rm3", "dense")
FUSION_MODES = ("rrf", "none")
POINTWISE_SCORERS = ("term-overlap", "bm25-rescorer", "query-likelihood",
                     "remote-mono")
PAIRWISE_SCORERS = ("margin-stub", "remote-duo")
MULTI_REWRITE_STAGES = ("first-pass", "rerank")
CUTOFF_BY_YEAR = {2021: 500, 2020: 1000}


def _check_keys(mapping: dict, allowed: tuple[str, ...], section: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} in {section}")


@dataclass(frozen=True)
class RewriterSpec:
    """Which rewriter to run and how to build its input context."""

    name: str = "identity"
    context: str = "original"
    model: str | None = None
    budget: int = 512
    separator: str = DEFAULT_SEPARATOR
    stopwords: str = "english"
    max_terms: int | None = None

    def __post_init__(self) -> None:
        if self.name not in REWRITER_NAMES:
            raise ConfigError(f"unknown rewriter {self.name!r}")
        if self.context not in CONTEXT_FORMS:
            raise ConfigError(f"unknown context form {self.context!r}")
        if self.budget < 1:
            raise ConfigError("rewriter budget must be positive")

    @classmethod
    def from_dict(cls, data, section: str) -> "RewriterSpec":
        if isinstance(data, str):
            return cls(name=data)
        if not isinstance(data, dict):
            raise ConfigError(f"{section} must be a name or a table")
        _check_keys(data, ("name", "context", "model", "budget", "separator",
                           "stopwords", "max_terms"), section)
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "context": self.context, "model": self.model,
            "budget": self.budget, "separator": self.separator,
            "stopwords": self.stopwords, "max_terms": self.max_terms,
        }


def _bm25_params(value, section: str) -> BM25Params:
    if value is None:
        return BM25Params()
    if isinstance(value, str):
        if value not in BM25_PRESETS:
            raise ConfigError(
                f"unknown bm25 preset {value!r} in {section}; "
                f"known: {sorted(BM25_PRESETS)}"
            )
        return BM25_PRESETS[value]
    if isinstance(value, dict):
        _check_keys(value, ("k1", "b"), f"{section}.bm25")
        return BM25Params(**value)
    raise ConfigError(f"{section}.bm25 must be a preset name or k1/b table")


@dataclass(frozen=True)
class LegConfig:
    """One first-pass retriever leg."""

    kind: str
    name: str = ""
    bm25: BM25Params = BM25Params()
    rm3: PrfParams = PrfParams()
    encoder: str = "builtin"

    def __post_init__(self) -> None:
        if self.kind not in LEG_KINDS:
            raise ConfigError(f"unknown first-pass leg kind {self.kind!r}")
        if self.encoder not in ("builtin", "remote"):
            raise ConfigError(f"unknown dense encoder {self.encoder!r}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @classmethod
    def from_dict(cls, data, section: str) -> "LegConfig":
        if isinstance(data, str):
            data = {"kind": data}
        if not isinstance(data, dict):
            raise ConfigError(f"{section} must be a kind or a table")
        _check_keys(data, ("kind", "name", "bm25", "rm3", "encoder"), section)
        if "kind" not in data:
            raise ConfigError(f"{section} is missing 'kind'")
        out = dict(data)
        out["bm25"] = _bm25_params(data.get("bm25"), section)
        rm3 = data.get("rm3")
        if rm3 is None:
            out["rm3"] = PrfParams()
        elif isinstance(rm3, dict):
            _check_keys(rm3, ("fb_docs", "fb_terms", "query_weight", "mu",
                              "exclude_numeric"), f"{section}.rm3")
            out["rm3"] = PrfParams(**rm3)
        else:
            raise ConfigError(f"{section}.rm3 must be a table")
        return cls(**out)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "name": self.name,
            "bm25": {"k1": self.bm25.k1, "b": self.bm25.b},
            "rm3": {"fb_docs": self.rm3.fb_docs, "fb_terms": self.rm3.fb_terms,
                    "query_weight": self.rm3.query_weight, "mu": self.rm3.mu,
                    "exclude_numeric": self.rm3.exclude_numeric},
            "encoder": self.encoder,
        }


@dataclass(frozen=True)
class RerankStage:
    kind: str
    scorer: str
    cutoff: int = DEFAULT_PAIRWISE_CUTOFF
    mu: float = 2500.0

    def __post_init__(self) -> None:
        if self.kind == "pointwise":
            if self.scorer not in POINTWISE_SCORERS:
                raise ConfigError(f"unknown pointwise scorer {self.scorer!r}")
        elif self.kind == "pairwise":
            if self.scorer not in PAIRWISE_SCORERS:
                raise ConfigError(f"unknown pairwise scorer {self.scorer!r}")
            if self.cutoff < 2:
                raise ConfigError("pairwise cutoff must be >= 2")
        else:
            raise ConfigError(f"unknown rerank stage kind {self.kind!r}")

    @classmethod
    def from_dict(cls, data, section: str) -> "RerankStage":
        if not isinstance(data, dict):
            raise ConfigError(f"{section} must be a table")
        _check_keys(data, ("kind", "scorer", "cutoff", "mu"), section)
        for required in ("kind", "scorer"):
            if required not in data:
                raise ConfigError(f"{section} is missing {required!r}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scorer": self.scorer,
                "cutoff": self.cutoff, "mu": self.mu}

    @property
    def label(self) -> str:
        return f"{self.kind}-{self.scorer}"


@dataclass(frozen=True)
class CombinationSpec:
    w_first: float = 0.5
    w_rerank: float = 0.5
    normalization: str = "min-max"

    def __post_init__(self) -> None:
        if self.w_first < 0 or self.w_rerank < 0:
            raise ConfigError("combination weights must be non-negative")
        if self.w_first == 0 and self.w_rerank == 0:
            raise ConfigError("combination weights must not both be zero")
        if self.normalization not in ("none", "min-max"):
            raise ConfigError(
                f"unknown combination normalization {self.normalization!r}"
            )

    @classmethod
    def from_dict(cls, data, section: str) -> "CombinationSpec":
        if not isinstance(data, dict):
            raise ConfigError(f"{section} must be a table")
        _check_keys(data, ("w_first", "w_rerank", "normalization"), section)
        return cls(**data)

    def to_dict(self) -> dict:
        return {"w_first": self.w_first, "w_rerank": self.w_rerank,
                "normalization": self.normalization}


_TOP_LEVEL_KEYS = (
    "rewriter_r1", "rewriter_r2", "first_pass", "fusion", "k_rrf", "rerank",
    "combination", "multi_rewrite", "multi_rewrite_stage", "depth",
    "output_cutoff", "dataset_year", "run_tag", "endpoint", "analyzer",
    "write_artifacts", "threads",
)


@dataclass(frozen=True)
class PipelineConfig:
    rewriter_r1: RewriterSpec = RewriterSpec()
    rewriter_r2: RewriterSpec | None = None
    first_pass: tuple[LegConfig, ...] = (LegConfig("bm25"),)
    fusion: str = "rrf"
    k_rrf: float = DEFAULT_K_RRF
    rerank: tuple[RerankStage, ...] = ()
    combination: CombinationSpec | None = None
    multi_rewrite: tuple[RewriterSpec, ...] = ()
    multi_rewrite_stage: str = "first-pass"
    depth: int = DEFAULT_DEPTH
    output_cutoff: int = 500
    dataset_year: int | None = None
    run_tag: str = "run"
    endpoint: str | None = None
    analyzer: AnalyzerConfig | None = None
    write_artifacts: bool = True
    threads: int = 1

    def __post_init__(self) -> None:
        if self.rewriter_r2 is None:
            object.__setattr__(self, "rewriter_r2", self.rewriter_r1)
        if not self.first_pass:
            raise ConfigError("pipeline needs at least one first-pass leg")
        names = [leg.name for leg in self.first_pass]
        if len(set(names)) != len(names):
            raise ConfigError(f"first-pass leg names must be unique: {names}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")
        if self.k_rrf <= 0:
            raise ConfigError("k_rrf must be positive")
        if len(self.first_pass) > 1 and self.fusion == "none":
            raise ConfigError("multiple first-pass legs require rrf fusion")
        if self.multi_rewrite_stage not in MULTI_REWRITE_STAGES:
            raise ConfigError(
                f"unknown multi_rewrite_stage {self.multi_rewrite_stage!r}"
            )
        if self.multi_rewrite and self.multi_rewrite_stage == "rerank" \
                and not self.rerank:
            raise ConfigError("multi-rewrite reranking needs rerank stages")
        if self.depth < 1 or self.output_cutoff < 1:
            raise ConfigError("depth and output_cutoff must be positive")
        if self.dataset_year is not None:
            expected = CUTOFF_BY_YEAR.get(self.dataset_year)
            if expected is None:
                raise ConfigError(f"unknown dataset year {self.dataset_year}")
            if expected != self.output_cutoff:
                raise ConfigError(
                    f"dataset year {self.dataset_year} requires output cutoff "
                    f"{expected}, got {self.output_cutoff}"
                )
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("pipeline config must be a table")
        _check_keys(data, _TOP_LEVEL_KEYS, "pipeline config")
        out: dict = {}
        if "rewriter_r1" in data:
            out["rewriter_r1"] = RewriterSpec.from_dict(
                data["rewriter_r1"], "rewriter_r1")
        if "rewriter_r2" in data:
            out["rewriter_r2"] = RewriterSpec.from_dict(
                data["rewriter_r2"], "rewriter_r2")
        if "first_pass" in data:
            legs = data["first_pass"]
            if not isinstance(legs, list):
                raise ConfigError("first_pass must be a list of legs")
            out["first_pass"] = tuple(
                LegConfig.from_dict(leg, f"first_pass[{i}]")
                for i, leg in enumerate(legs)
            )
        if "rerank" in data:
            stages = data["rerank"]
            if not isinstance(stages, list):
                raise ConfigError("rerank must be a list of stages")
            out["rerank"] = tuple(
                RerankStage.from_dict(stage, f"rerank[{i}]")
                for i, stage in enumerate(stages)
            )
        if "combination" in data and data["combination"] is not None:
            out["combination"] = CombinationSpec.from_dict(
                data["combination"], "combination")
        if "multi_rewrite" in data:
            specs = data["multi_rewrite"]
            if not isinstance(specs, list):
                raise ConfigError("multi_rewrite must be a list of rewriters")
            out["multi_rewrite"] = tuple(
                RewriterSpec.from_dict(spec, f"multi_rewrite[{i}]")
                for i, spec in enumerate(specs)
            )
        if "analyzer" in data and data["analyzer"] is not None:
            out["analyzer"] = AnalyzerConfig.from_dict(data["analyzer"])
        for key in ("fusion", "k_rrf", "multi_rewrite_stage", "depth",
                    "output_cutoff", "dataset_year", "run_tag", "endpoint",
                    "write_artifacts", "threads"):
            if key in data:
                out[key] = data[key]
        if "output_cutoff" not in data and out.get("dataset_year") is not None:
            derived = CUTOFF_BY_YEAR.get(out["dataset_year"])
            if derived is not None:
                out["output_cutoff"] = derived
        return cls(**out)

    def to_dict(self) -> dict:
        return {
            "rewriter_r1": self.rewriter_r1.to_dict(),
            "rewriter_r2": self.rewriter_r2.to_dict(),
            "first_pass": [leg.to_dict() for leg in self.first_pass],
            "fusion": self.fusion,
            "k_rrf": self.k_rrf,
            "rerank": [stage.to_dict() for stage in self.rerank],
            "combination": (self.combination.to_dict()
                            if self.combination else None),
            "multi_rewrite": [spec.to_dict() for spec in self.multi_rewrite],
            "multi_rewrite_stage": self.multi_rewrite_stage,
            "depth": self.depth,
            "output_cutoff": self.output_cutoff,
            "dataset_year": self.dataset_year,
            "run_tag": self.run_tag,
            "endpoint": self.endpoint,
            "analyzer": self.analyzer.to_dict() if self.analyzer else None,
            "write_artifacts": self.write_artifacts,
            "threads": self.threads,
        }


def load_config(path: str | Path) -> PipelineConfig:
    """Read a YAML pipeline config file."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    return PipelineConfig.from_dict(data)


# Presets ----------------------------------------------------------------

def _preset_dicts() -> dict[str, dict]:
    organizers_rerank = [{"kind": "pointwise", "scorer": "remote-mono"}]
    clarke_first = [
        {"kind": "bm25+rm3", "bm25": "waterloo-tuned"},
        {"kind": "dense", "encoder": "remote"},
    ]
    clarke_rerank = [
        {"kind": "pointwise", "scorer": "remote-mono"},
        {"kind": "pairwise", "scorer": "remote-duo", "cutoff": 50},
    ]
    return {
        "baseline-organizers": {
            "rewriter_r1": {"name": "remote", "model": "canard",
                            "context": "original"},
            "first_pass": [{"kind": "bm25", "bm25": "default"}],
            "fusion": "none",
            "rerank": organizers_rerank,
            "dataset_year": 2021,
            "output_cutoff": 500,
            "run_tag": "baseline-organizers",
        },
        "baseline-organizers-offline": {
            "rewriter_r1": {"name": "identity", "context": "original"},
            "first_pass": [{"kind": "bm25", "bm25": "default"}],
            "fusion": "none",
            "rerank": [{"kind": "pointwise", "scorer": "term-overlap"}],
            "dataset_year": 2021,
            "output_cutoff": 500,
            "run_tag": "baseline-organizers-offline",
        },
        "waterloo-clarke": {
            "rewriter_r1": {"name": "remote", "model": "qrecc",
                            "context": "improved"},
            "first_pass": clarke_first,
            "fusion": "rrf",
            "rerank": clarke_rerank,
            "dataset_year": 2021,
            "output_cutoff": 500,
            "run_tag": "waterloo-clarke",
        },
        "waterloo-clarke-offline": {
            "rewriter_r1": {"name": "history-append", "context": "improved"},
            "first_pass": [
                {"kind": "bm25+rm3", "bm25": "waterloo-tuned"},
                {"kind": "dense", "encoder": "builtin"},
            ],
            "fusion": "rrf",
            "rerank": [
                {"kind": "pointwise", "scorer": "query-likelihood"},
                {"kind": "pairwise", "scorer": "margin-stub", "cutoff": 50},
            ],
            "dataset_year": 2021,
            "output_cutoff": 500,
            "run_tag": "waterloo-clarke-offline",
        },
    }


def preset_names() -> list[str]:
    return sorted(_preset_dicts())


def preset(name: str, offline: bool = False) -> PipelineConfig:
    """Look up a named preset; `offline` switches to its sidecar-free twin."""
    table = _preset_dicts()
    if offline and not name.endswith("-offline"):
        offline_name = f"{name}-offline"
        if offline_name in table:
            name = offline_name
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(table)}")
    return PipelineConfig.from_dict(table[name])


# Ablation grid ----------------------------------------------------------

GRID_REWRITERS: dict[str, dict] = {
    "raw": {"name": "identity", "context": "original"},
    "history-append": {"name": "history-append", "context": "improved"},
    "remote-canard": {"name": "remote", "model": "canard",
                      "context": "original"},
    "remote-qrecc": {"name": "remote", "model": "qrecc",
                     "context": "improved"},
}
GRID_FIRST_PASS: dict[str, list] = {
    "bm25": [{"kind": "bm25"}],
    "bm25-rm3": [{"kind": "bm25+rm3"}],
    "dense": [{"kind": "dense"}],
    "bm25-rm3+dense": [{"kind": "bm25+rm3"}, {"kind": "dense"}],
}
GRID_RERANK: dict[str, list] = {
    "none": [],
    "mono": [{"kind": "pointwise", "scorer": "query-likelihood"}],
    "mono-duo": [{"kind": "pointwise", "scorer": "query-likelihood"},
                 {"kind": "pairwise", "scorer": "margin-stub", "cutoff": 50}],
}


def grid(rewriters: list[str] | None = None,
         first_passes: list[str] | None = None,
         rerankers: list[str] | None = None,
         base: dict | None = None) -> dict[str, PipelineConfig]:
    """Cross product of component choices, one config per combination."""
    rewriters = rewriters or list(GRID_REWRITERS)
    first_passes = first_passes or list(GRID_FIRST_PASS)
    rerankers = rerankers or list(GRID_RERANK)
    out: dict[str, PipelineConfig] = {}
    for rw in rewriters:
        if rw not in GRID_REWRITERS:
            raise ConfigError(f"unknown grid rewriter {rw!r}")
        for fp in first_passes:
            if fp not in GRID_FIRST_PASS:
                raise ConfigError(f"unknown grid first pass {fp!r}")
            for rr in rerankers:
                if rr not in GRID_RERANK:
                    raise ConfigError(f"unknown grid reranker {rr!r}")
                name = f"rw={rw},fp={fp},rr={rr}"
                data = dict(base or {})
                data.update({
                    "rewriter_r1": dict(GRID_REWRITERS[rw]),
                    "first_pass": [dict(d) for d in GRID_FIRST_PASS[fp]],
                    "fusion": "rrf" if len(GRID_FIRST_PASS[fp]) > 1 else "none",
                    "rerank": [dict(d) for d in GRID_RERANK[rr]],
                    "run_tag": name,
                })
                out[name] = PipelineConfig.from_dict(data)
    return out


# Runner -----------------------------------------------------------------

@dataclass
class TurnRecord:
    """Every intermediate artifact produced while answering one turn."""

    turn_id: str
    rewrites: dict[str, str] = field(default_factory=dict)
    contexts: dict[str, dict] = field(default_factory=dict)
    expansions: dict[str, dict[str, float]] = field(default_factory=dict)
    legs: dict[str, RankedList] = field(default_factory=dict)
    fused: RankedList | None = None
    reranked: list[tuple[str, RankedList]] = field(default_factory=list)
    combined: RankedList | None = None
    final: RankedList | None = None


@dataclass
class RunResult:
    runs: dict[str, RankedList] = field(default_factory=dict)
    records: list[TurnRecord] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)
    aborted: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.skipped and not self.aborted


class PipelineRunner:
    """Executes a PipelineConfig over conversations against built handles."""

    def __init__(self, config: PipelineConfig, corpus: Corpus | None,
                 index: InvertedIndex | None = None,
                 vector_store: VectorStore | None = None,
                 client: ModelServerClient | None = None,
                 require_handles: bool = True):
        self.config = config
        self.corpus = corpus
        self.index = index
        self.vector_store = vector_store
        self._client = client
        self._rewriters: dict[RewriterSpec, Rewriter] = {}
        self._pointwise: dict[RerankStage, PointwiseScorer] = {}
        self._pairwise: dict[RerankStage, PairwiseScorer] = {}
        self._builtin_encoder = HashedBagEncoder()
        if require_handles:
            if corpus is None:
                raise ConfigError("pipeline runner needs a loaded corpus")
            self._validate_handles()

    def _validate_handles(self) -> None:
        config = self.config
        needs_index = any(leg.kind in ("bm25", "bm25+rm3")
                          for leg in config.first_pass)
        needs_index = needs_index or any(
            stage.scorer in ("bm25-rescorer", "query-likelihood")
            for stage in config.rerank)
        if needs_index and self.index is None:
            raise ConfigError("this pipeline needs a built inverted index")
        if any(leg.kind == "dense" for leg in config.first_pass) \
                and self.vector_store is None:
            raise ConfigError("this pipeline needs a built vector store")
        if config.analyzer is not None and self.index is not None \
                and config.analyzer != self.index.analyzer:
            raise ConfigError(
                "index analyzer does not match the analyzer in the config"
            )
        for leg in config.first_pass:
            if leg.kind == "dense" and leg.encoder == "builtin" \
                    and self.vector_store.encoder_id != BUILTIN_ENCODER_ID:
                raise ConfigError(
                    f"vector store was built with {self.vector_store.encoder_id!r}, "
                    f"not the builtin encoder"
                )

    # Component construction --------------------------------------------

    def client(self) -> ModelServerClient:
        if self._client is None:
            self._client = ModelServerClient(
                resolve_endpoint(self.config.endpoint))
        return self._client

    def _rewriter(self, spec: RewriterSpec) -> Rewriter:
        cached = self._rewriters.get(spec)
        if cached is None:
            if spec.name == "identity":
                cached = IdentityRewriter()
            elif spec.name == "history-append":
                cached = HistoryAppendRewriter(stopwords=spec.stopwords,
                                               max_terms=spec.max_terms)
            else:
                cached = RemoteRewriter(self.client(), spec.model)
            self._rewriters[spec] = cached
        return cached

    def _pointwise_scorer(self, stage: RerankStage) -> PointwiseScorer:
        cached = self._pointwise.get(stage)
        if cached is None:
            if stage.scorer == "term-overlap":
                cached = TermOverlapScorer()
            elif stage.scorer == "bm25-rescorer":
                cached = Bm25Rescorer(self.index)
            elif stage.scorer == "query-likelihood":
                cached = QueryLikelihoodScorer(self.index, mu=stage.mu)
            else:
                cached = RemoteMonoScorer(self.client())
            self._pointwise[stage] = cached
        return cached

    def _pairwise_scorer(self, stage: RerankStage) -> PairwiseScorer:
        cached = self._pairwise.get(stage)
        if cached is None:
            if stage.scorer == "margin-stub":
                cached = MarginStubScorer()
            else:
                cached = RemoteDuoScorer(self.client())
            self._pairwise[stage] = cached
        return cached

    def _text_of(self, passage_id: str) -> str:
        return self.corpus.raw_text(passage_id)

    # Stage plumbing -----------------------------------------------------

    @staticmethod
    def _stage(label: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (MissingResponseError, StageError):
            raise
        except Exception as exc:
            raise StageError(label, exc) from exc

    def _build_context(self, spec: RewriterSpec,
                       turns: list[Turn]) -> ContextResult:
        budget = ContextBudget(spec.budget)
        if spec.context == "original":
            window = turns[max(0, len(turns) - 1 - RESPONSE_WINDOW):-1]
            for turn in window:
                if turn.canonical_response is None:
                    raise MissingResponseError(
                        f"turn {turn.index} has no canonical response "
                        f"(needed in the context of turn {turns[-1].index})"
                    )
            return build_context_original(turns, budget)
        return build_context_improved(turns, budget)

    def _rewrite(self, spec: RewriterSpec, turns: list[Turn],
                 label: str, record: TurnRecord) -> str:
        context = self._stage(f"rewrite-{label}", self._build_context,
                              spec, turns)
        record.contexts[label] = context.to_dict()
        text = self._stage(f"rewrite-{label}",
                           self._rewriter(spec).rewrite_query, context)
        record.rewrites[label] = text
        return text

    # First pass ---------------------------------------------------------

    def _run_leg(self, leg: LegConfig, query_text: str,
                 turn_id: str, record: TurnRecord, prefix: str) -> RankedList:
        config = self.config
        if leg.kind == "dense":
            if leg.encoder == "builtin":
                vector = self._builtin_encoder.encode(query_text)
            else:
                vector = self.client().encode([query_text])[0]
            return dense_search(vector, self.vector_store, k=config.depth,
                                turn_id=turn_id, run_tag=leg.name)
        terms = self.index.analyze(query_text)
        first = self.index.search(terms, k=config.depth, params=leg.bm25,
                                  turn_id=turn_id, run_tag=leg.name)
        if leg.kind == "bm25" or not first.entries or not terms:
            return first
        expanded = rm3_expand(WeightedQuery.from_terms(terms), first,
                              self.index, leg.rm3)
        record.expansions[prefix + leg.name] = dict(expanded.weights)
        return weighted_search(expanded, self.index, k=config.depth,
                               params=leg.bm25, turn_id=turn_id,
                               run_tag=leg.name)

    def _first_pass(self, query_text: str, turn_id: str,
                    record: TurnRecord, prefix: str = "") -> RankedList:
        config = self.config
        lists = []
        for leg in config.first_pass:
            result = self._stage(f"first-pass-{leg.name}", self._run_leg,
                                 leg, query_text, turn_id, record, prefix)
            record.legs[prefix + leg.name] = result
            lists.append(result)
        if len(lists) == 1:
            return lists[0]
        populated = [rl for rl in lists if rl.entries]
        if not populated:
            return lists[0]
        return self._stage("fusion", rrf_fuse, populated, config.k_rrf,
                           config.depth, run_tag="rrf")

    # Rerank -------------------------------------------------------------

    def _apply_rerank(self, query_text: str, candidates: RankedList,
                      record: TurnRecord, prefix: str = "",
                      overrides: dict | None = None) -> RankedList:
        current = candidates
        for position, stage in enumerate(self.config.rerank):
            key = f"rerank:{position}"
            if overrides and key in overrides and not prefix:
                current = overrides[key]
            elif not current.entries:
                break
            elif stage.kind == "pointwise":
                current = self._stage(
                    f"{prefix}{stage.label}", pointwise_rerank, query_text,
                    current, self._pointwise_scorer(stage), self._text_of)
            else:
                current = self._stage(
                    f"{prefix}{stage.label}", pairwise_rerank, query_text,
                    current, self._pairwise_scorer(stage), self._text_of,
                    stage.cutoff)
            record.reranked.append((f"{prefix}{position}-{stage.label}",
                                    current))
        return current

    # Turn and conversation loops ---------------------------------------

    def run_turn(self, turns: list[Turn], turn_id: str,
                 overrides: dict | None = None) -> TurnRecord:
        """Answer the last turn of `turns` (earlier entries are history).

        `overrides` replaces named stage outputs with recorded artifacts:
        'rewrite_r1'/'rewrite_r2' (strings), 'fused' (a RankedList), and
        'rerank:<position>' (a RankedList per stage).
        """
        config = self.config
        overrides = overrides or {}
        record = TurnRecord(turn_id=turn_id)

        if "rewrite_r1" in overrides:
            q1 = overrides["rewrite_r1"]
            record.rewrites["r1"] = q1
        else:
            q1 = self._rewrite(config.rewriter_r1, turns, "r1", record)
        if "rewrite_r2" in overrides:
            q2 = overrides["rewrite_r2"]
            record.rewrites["r2"] = q2
        elif config.rewriter_r2 == config.rewriter_r1:
            q2 = q1
            record.rewrites["r2"] = q2
        else:
            q2 = self._rewrite(config.rewriter_r2, turns, "r2", record)

        multi_first = config.multi_rewrite \
            and config.multi_rewrite_stage == "first-pass"
        multi_rerank = config.multi_rewrite \
            and config.multi_rewrite_stage == "rerank"

        if "fused" in overrides:
            candidates = overrides["fused"]
            record.fused = candidates
        elif multi_first:
            per_rewriter = []
            for position, spec in enumerate(config.multi_rewrite):
                label = f"multi-{position}"
                query = self._rewrite(spec, turns, label, record)
                per_rewriter.append(self._first_pass(
                    query, turn_id, record, prefix=f"{label}:"))
            populated = [rl for rl in per_rewriter if rl.entries]
            candidates = self._stage(
                "fusion", rrf_fuse, populated or per_rewriter[:1],
                config.k_rrf, config.depth, run_tag="rrf")
            record.fused = candidates
        else:
            candidates = self._first_pass(q1, turn_id, record)
            record.fused = candidates

        if multi_rerank:
            reranked_lists = []
            for position, spec in enumerate(config.multi_rewrite):
                label = f"multi-{position}"
                query = self._rewrite(spec, turns, label, record)
                reranked_lists.append(self._apply_rerank(
                    query, candidates, record, prefix=f"{label}:"))
            populated = [rl for rl in reranked_lists if rl.entries]
            reranked = self._stage(
                "fusion", rrf_fuse, populated or reranked_lists[:1],
                config.k_rrf, config.depth, run_tag="rrf")
            record.reranked.append(("multi-fused", reranked))
        else:
            reranked = self._apply_rerank(q2, candidates, record,
                                          overrides=overrides)

        if config.combination is not None:
            spec = config.combination
            reranked = self._stage(
                "combination", score_combine, record.fused, reranked,
                spec.w_first, spec.w_rerank, spec.normalization)
            record.combined = reranked

        final = reranked.truncated(config.output_cutoff)
        record.final = RankedList(turn_id, final.entries, config.run_tag)
        return record

    def run_conversation(self, conversation: Conversation,
                         overrides: dict[str, dict] | None = None) -> RunResult:
        """Process turns in order; rewrites feed forward between turns."""
        result = RunResult()
        history: list[Turn] = []
        for turn in conversation.turns:
            history.append(turn)
            tid = f"{conversation.conversation_id}_{turn.index}"
            per_turn = (overrides or {}).get(tid)
            try:
                record = self.run_turn(list(history), tid, per_turn)
            except MissingResponseError as exc:
                log.warning("turn %s skipped: %s", tid, exc)
                result.skipped.append((tid, str(exc)))
                continue
            except StageError as exc:
                log.error("conversation %s aborted at turn %s: %s",
                          conversation.conversation_id, tid, exc)
                result.aborted.append((tid, exc.stage, str(exc)))
                break
            turn.rewrite = record.rewrites["r1"]
            result.records.append(record)
            result.runs[tid] = record.final
        return result

    def rewrite_topic_set(self, conversations: list[Conversation]) -> RunResult:
        """Run only the rewriting stages; records carry contexts and rewrites."""
        result = RunResult()
        config = self.config
        for conversation in conversations:
            history: list[Turn] = []
            for turn in conversation.turns:
                history.append(turn)
                tid = f"{conversation.conversation_id}_{turn.index}"
                record = TurnRecord(turn_id=tid)
                try:
                    q1 = self._rewrite(config.rewriter_r1, list(history),
                                       "r1", record)
                    if config.rewriter_r2 == config.rewriter_r1:
                        record.rewrites["r2"] = q1
                    else:
                        self._rewrite(config.rewriter_r2, list(history),
                                      "r2", record)
                except MissingResponseError as exc:
                    log.warning("turn %s skipped: %s", tid, exc)
                    result.skipped.append((tid, str(exc)))
                    continue
                except StageError as exc:
                    log.error("conversation %s aborted at turn %s: %s",
                              conversation.conversation_id, tid, exc)
                    result.aborted.append((tid, exc.stage, str(exc)))
                    break
                turn.rewrite = q1
                result.records.append(record)
        return result

    def run_topic_set(self, conversations: list[Conversation],
                      output_dir: str | Path | None = None) -> RunResult:
        """Run every conversation and optionally write run + artifacts."""
        merged = RunResult()
        if not conversations:
            log.warning("empty topic set: writing an empty runfile")
        threads = self.config.threads
        if threads > 1 and len(conversations) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                partials = list(pool.map(self.run_conversation, conversations))
        else:
            partials = [self.run_conversation(c) for c in conversations]
        for partial in partials:
            merged.runs.update(partial.runs)
            merged.records.extend(partial.records)
            merged.skipped.extend(partial.skipped)
            merged.aborted.extend(partial.aborted)
        if output_dir is not None:
            self._write_outputs(merged, Path(output_dir))
        return merged

    # Output layout ------------------------------------------------------

    def _write_outputs(self, result: RunResult, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        write_runfile(result.runs.values(), out / "run.txt")
        manifest = {
            "config": self.config.to_dict(),
            "corpus": self.corpus.manifest(),
            "index": self.index.manifest() if self.index else None,
            "vector_store": ({"encoder_id": self.vector_store.encoder_id,
                              "dim": self.vector_store.dim,
                              "count": len(self.vector_store.ids)}
                             if self.vector_store else None),
            "turns": sorted(result.runs),
            "skipped": result.skipped,
            "aborted": result.aborted,
        }
        (out / "manifest.txt").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        if not self.config.write_artifacts:
            return
        for record in result.records:
            turn_dir = out / "artifacts" / f"turn-{record.turn_id}"
            turn_dir.mkdir(parents=True, exist_ok=True)
            (turn_dir / "rewrites.json").write_text(
                json.dumps({"rewrites": record.rewrites,
                            "contexts": record.contexts,
                            "expansions": record.expansions},
                           indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            for name, ranked in record.legs.items():
                safe = name.replace(":", "-")
                write_runfile([ranked], turn_dir / f"leg-{safe}.txt")
            if record.fused is not None:
                write_runfile([record.fused], turn_dir / "fused.txt")
            for label, ranked in record.reranked:
                safe = label.replace(":", "-")
                write_runfile([ranked], turn_dir / f"rerank-{safe}.txt")
            if record.combined is not None:
                write_runfile([record.combined], turn_dir / "combined.txt")
            write_runfile([record.final], turn_dir / "final.txt")
