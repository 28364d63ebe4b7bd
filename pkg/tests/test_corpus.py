"""Corpus ingestion: JSONL/TSV parsing, validation, stats, save/load."""

from __future__ import annotations

import json

import pytest

from convsearch import AnalyzerConfig, Corpus, IngestError, Passage


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")


def test_jsonl_ingest(tmp_path):
    rows = [
        {"id": "A1", "body": "first passage body", "title": "First"},
        {"id": "A2", "body": "second passage body"},
    ]
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, rows)
    corpus = Corpus.ingest(path)
    assert len(corpus) == 2
    assert corpus.passages["A1"].title == "First"
    assert corpus.passages["A2"].title is None
    assert corpus.raw_text("A2") == "second passage body"
    assert corpus.raw_text("A1") == "First first passage body"


def test_tsv_ingest(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text("B1\t\tbody one\nB2\tTitle Two\tbody two\n",
                    encoding="utf-8")
    corpus = Corpus.ingest(path)
    assert list(corpus.passages) == ["B1", "B2"]
    assert corpus.passages["B1"].title is None
    assert corpus.raw_text("B2") == "Title Two body two"


def test_tsv_wrong_column_count(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text("B1\tbody only\n", encoding="utf-8")
    with pytest.raises(IngestError) as err:
        Corpus.ingest(path)
    assert "line 1" in str(err.value)


def test_duplicate_id_rejected():
    rows = [{"id": "X", "body": "a"}, {"id": "X", "body": "b"}]
    with pytest.raises(IngestError) as err:
        Corpus.ingest(rows)
    assert "duplicate" in str(err.value)


def test_missing_field_names_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(path, [{"id": "X", "body": "a"}, {"id": "Y"}])
    with pytest.raises(IngestError) as err:
        Corpus.ingest(path)
    assert "line 2" in str(err.value)


def test_invalid_json_names_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "X", "body": "a"}\n{not json\n', encoding="utf-8")
    with pytest.raises(IngestError) as err:
        Corpus.ingest(path)
    assert "line 2" in str(err.value)


def test_empty_stream_rejected():
    with pytest.raises(IngestError):
        Corpus.ingest([])


def test_passage_validation():
    with pytest.raises(ValueError):
        Passage(id="", body="text")
    with pytest.raises(ValueError):
        Passage(id="P", body="")


def test_catch_all_controls_title_indexing():
    rows = [{"id": "P", "body": "common body", "title": "unusual"}]
    with_title = Corpus.ingest(rows, AnalyzerConfig())
    without = Corpus.ingest(rows, AnalyzerConfig(catch_all=False))
    assert "unusual" in with_title.analyzed("P")
    assert "unusual" not in without.analyzed("P")
    assert without.raw_text("P") == "common body"


def test_stemmed_ingest_uses_porter():
    rows = [{"id": "P", "body": "cats running"}]
    corpus = Corpus.ingest(rows, AnalyzerConfig(stemmer="porter"))
    assert corpus.analyzed("P") == ["cat", "run"]


def test_stats_match_hand_count():
    rows = [
        {"id": "P1", "body": "galaxy galaxy star"},
        {"id": "P2", "body": "star dust"},
    ]
    corpus = Corpus.ingest(rows, AnalyzerConfig(stemmer="none"))
    assert corpus.stats.doc_count == 2
    assert corpus.stats.total_tokens == 5
    assert corpus.stats.avg_doc_len == 2.5
    assert corpus.stats.df == {"galaxy": 1, "star": 2, "dust": 1}


def test_stats_independent_of_record_order():
    rows = [
        {"id": "P1", "body": "galaxy galaxy star"},
        {"id": "P2", "body": "star dust"},
    ]
    forward = Corpus.ingest(rows, AnalyzerConfig())
    backward = Corpus.ingest(list(reversed(rows)), AnalyzerConfig())
    assert forward.stats.to_dict() == backward.stats.to_dict()


def test_save_load_round_trip(tmp_path, small_corpus):
    directory = small_corpus.save(tmp_path / "corpus")
    loaded = Corpus.load(directory)
    assert loaded.stats.to_dict() == small_corpus.stats.to_dict()
    assert loaded.analyzer == small_corpus.analyzer
    assert list(loaded.passages) == list(small_corpus.passages)
    some_id = next(iter(small_corpus.passages))
    assert loaded.analyzed(some_id) == small_corpus.analyzed(some_id)


def test_save_byte_stable(tmp_path, small_corpus):
    a = small_corpus.save(tmp_path / "a")
    b = small_corpus.save(tmp_path / "b")
    for name in ("manifest.json", "passages.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_manifest_reports_analyzer_and_stats(small_corpus):
    manifest = small_corpus.manifest()
    assert manifest["stats"]["doc_count"] == len(small_corpus)
    assert manifest["analyzer"] == small_corpus.analyzer.to_dict()
