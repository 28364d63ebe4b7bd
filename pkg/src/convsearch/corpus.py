"""Passage corpus: ingestion, storage, and collection statistics.

Accepted inputs are JSONL records with ``id``/``title``/``body`` fields or a
three-column TSV fallback (``id \\t title \\t body``).  A stored corpus is a
directory with a ``manifest.json`` (analyzer config, stopword hash, stats)
and the normalized ``passages.jsonl``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .analysis import AnalyzerConfig, analyze
from .errors import IngestError

MANIFEST_NAME = "manifest.json"
PASSAGES_NAME = "passages.jsonl"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Passage:
    """One retrieval unit: opaque id, optional title, mandatory body."""

    id: str
    body: str
    title: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("passage id must be non-empty")
        if not self.body:
            raise ValueError(f"passage {self.id!r}: body must be non-empty")


@dataclass
class CorpusStats:
    doc_count: int
    total_tokens: int
    avg_doc_len: float
    df: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "doc_count": self.doc_count,
            "total_tokens": self.total_tokens,
            "avg_doc_len": self.avg_doc_len,
            "df": dict(sorted(self.df.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusStats":
        return cls(
            doc_count=data["doc_count"],
            total_tokens=data["total_tokens"],
            avg_doc_len=data["avg_doc_len"],
            df=dict(data.get("df", {})),
        )


def _parse_jsonl_record(lineno: int, line: str) -> Passage:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(f"line {lineno}: invalid JSON record: {exc}") from None
    if not isinstance(obj, dict) or "id" not in obj or "body" not in obj:
        raise IngestError(f"line {lineno}: record must carry 'id' and 'body' fields")
    try:
        return Passage(id=str(obj["id"]), body=str(obj["body"]),
                       title=str(obj["title"]) if obj.get("title") else None)
    except ValueError as exc:
        raise IngestError(f"line {lineno}: {exc}") from None


def _parse_tsv_record(lineno: int, line: str) -> Passage:
    parts = line.split("\t")
    if len(parts) != 3:
        raise IngestError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}")
    pid, title, body = parts
    try:
        return Passage(id=pid, body=body, title=title or None)
    except ValueError as exc:
        raise IngestError(f"line {lineno}: {exc}") from None


def _iter_records(source) -> Iterator[Passage]:
    """Yield passages from a path (JSONL or TSV by extension) or an iterable."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        is_jsonl = path.suffix.lower() in (".jsonl", ".json")
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                yield (_parse_jsonl_record if is_jsonl else _parse_tsv_record)(lineno, line)
    else:
        for item in source:
            if isinstance(item, Passage):
                yield item
            else:
                yield Passage(id=item["id"], body=item["body"], title=item.get("title"))


class Corpus:
    """Immutable passage collection with analyzer-consistent statistics.

    Built once by :meth:`ingest`; readers may share an instance freely.
    Per-passage token lists are cached on first access.
    """

    def __init__(self, passages: dict[str, Passage], analyzer: AnalyzerConfig,
                 stats: CorpusStats):
        self.passages = passages
        self.analyzer = analyzer
        self.stats = stats
        self._token_cache: dict[str, list[str]] = {}

    @classmethod
    def ingest(cls, source, analyzer: AnalyzerConfig | None = None) -> "Corpus":
        """Read a passage stream, analyze it, and compute collection statistics.

        Raises :class:`IngestError` for duplicate ids (naming the id),
        malformed records (naming the line), or an empty stream.  Statistics
        are accumulated with commutative updates, so the result does not
        depend on record order beyond the stored passage order itself.
        """
        analyzer = analyzer or AnalyzerConfig()
        passages: dict[str, Passage] = {}
        df: Counter[str] = Counter()
        total_tokens = 0
        corpus = cls(passages, analyzer, CorpusStats(0, 0, 0.0, {}))
        for passage in _iter_records(source):
            if passage.id in passages:
                raise IngestError(f"duplicate passage id: {passage.id!r}")
            passages[passage.id] = passage
            tokens = analyze(corpus.indexing_text(passage), analyzer)
            corpus._token_cache[passage.id] = tokens
            total_tokens += len(tokens)
            df.update(set(tokens))
        if not passages:
            raise IngestError("empty corpus")
        n = len(passages)
        corpus.stats = CorpusStats(
            doc_count=n,
            total_tokens=total_tokens,
            avg_doc_len=total_tokens / n,
            df=dict(df),
        )
        return corpus

    def indexing_text(self, passage: Passage) -> str:
        """The analyzed field: title and body joined by one space when catch_all is on."""
        if self.analyzer.catch_all and passage.title:
            return f"{passage.title} {passage.body}"
        return passage.body

    def analyzed(self, passage_id: str) -> list[str]:
        """Token list for one passage under this corpus's analyzer."""
        cached = self._token_cache.get(passage_id)
        if cached is None:
            passage = self.passages[passage_id]
            cached = analyze(self.indexing_text(passage), self.analyzer)
            self._token_cache[passage_id] = cached
        return cached

    def raw_text(self, passage_id: str) -> str:
        """Unanalyzed passage text, as handed to encoders and re-rankers."""
        return self.indexing_text(self.passages[passage_id])

    def __len__(self) -> int:
        return len(self.passages)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self.passages

    def manifest(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "analyzer": self.analyzer.to_dict(),
            "stats": self.stats.to_dict(),
        }

    def save(self, directory: str | Path) -> Path:
        """Write manifest and normalized passages; byte-stable for equal inputs."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest_path = directory / MANIFEST_NAME
        manifest_path.write_text(
            json.dumps(self.manifest(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        with (directory / PASSAGES_NAME).open("w", encoding="utf-8") as handle:
            for passage in self.passages.values():
                record = {"id": passage.id, "title": passage.title or "", "body": passage.body}
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
        analyzer = AnalyzerConfig.from_dict(manifest["analyzer"])
        stats = CorpusStats.from_dict(manifest["stats"])
        passages: dict[str, Passage] = {}
        with (directory / PASSAGES_NAME).open("r", encoding="utf-8") as handle:
            for line in handle:
                obj = json.loads(line)
                passages[obj["id"]] = Passage(
                    id=obj["id"], body=obj["body"], title=obj["title"] or None
                )
        return cls(passages, analyzer, stats)
