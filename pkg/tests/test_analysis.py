"""Text analysis chain: tokenizer, stopwords, stemmer, config round-trip."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from convsearch.analysis import AnalyzerConfig, analyze
from convsearch.porter import stem
from convsearch.stopwords import ENGLISH, content_hash, resolve

# Canonical demonstration pairs published with the original algorithm.
PORTER_PAIRS = [
    ("caresses", "caress"), ("flies", "fli"), ("dies", "di"),
    ("mules", "mule"), ("denied", "deni"), ("died", "di"),
    ("agreed", "agre"), ("owned", "own"), ("humbled", "humbl"),
    ("sized", "size"), ("meeting", "meet"), ("stating", "state"),
    ("itemization", "item"), ("sensational", "sensat"),
    ("traditional", "tradit"), ("reference", "refer"),
    ("colonizer", "colon"), ("plotted", "plot"),
    ("relational", "relat"), ("conditional", "condit"),
    ("rational", "ration"), ("triplicate", "triplic"),
    ("formative", "form"), ("formalize", "formal"),
    ("electriciti", "electr"), ("electrical", "electr"),
    ("hopeful", "hope"), ("goodness", "good"),
    ("caress", "caress"), ("cats", "cat"), ("feed", "feed"),
    ("troubled", "troubl"), ("sky", "sky"), ("happy", "happi"),
]


@pytest.mark.parametrize("word,expected", PORTER_PAIRS)
def test_porter_canonical_pairs(word, expected):
    assert stem(word) == expected


def test_porter_short_words_unchanged():
    for word in ("at", "by", "is", "a", ""):
        assert stem(word) == word


def test_porter_lowercases():
    assert stem("Flies") == "fli"


@given(st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122),
               min_size=0, max_size=12))
def test_porter_idempotent_on_output_shape(word):
    out = stem(word)
    assert out == out.lower()
    assert len(out) <= max(len(word), 1) or word == ""


def test_tokenizer_splits_non_alphanumeric():
    config = AnalyzerConfig(stopword_list="none")
    assert analyze("Don't panic! It's 42.", config) == \
        ["don", "t", "panic", "it", "s", "42"]


def test_analysis_order_lowercase_stop_stem():
    config = AnalyzerConfig(stemmer="porter")
    assert analyze("The Meetings were Stated", config) == ["meet", "state"]


def test_stopwords_removed_before_stemming():
    # "being" is a stopword on the surface; "beings" is not and gets stemmed.
    config = AnalyzerConfig(stemmer="porter")
    assert analyze("being beings", config) == ["be"]


def test_empty_input_analyzes_to_empty():
    assert analyze("", AnalyzerConfig()) == []
    assert analyze("  \t\n ", AnalyzerConfig()) == []


def test_stopword_resolution_and_hash():
    assert resolve("none") == frozenset()
    assert resolve("english") == frozenset(ENGLISH)
    assert resolve("english-v1") == frozenset(ENGLISH)
    assert resolve(("x", "y")) == frozenset({"x", "y"})
    assert content_hash("english") == content_hash("english-v1")
    assert content_hash("english") != content_hash("none")
    with pytest.raises(KeyError):
        resolve("klingon")


def test_history_append_relevant_stopword_membership():
    words = resolve("english")
    assert "me" in words and "about" in words
    assert "tell" not in words and "jupiter" not in words


def test_analyzer_config_round_trip():
    for config in (AnalyzerConfig(),
                   AnalyzerConfig(stemmer="porter", stopword_list="none"),
                   AnalyzerConfig(stopword_list=("alpha", "beta"),
                                  catch_all=False)):
        assert AnalyzerConfig.from_dict(config.to_dict()) == config


def test_analyzer_config_rejects_unknowns():
    with pytest.raises(ValueError):
        AnalyzerConfig(stemmer="snowball")
    with pytest.raises(ValueError):
        AnalyzerConfig(token_rule="whitespace")
    with pytest.raises(KeyError):
        AnalyzerConfig(stopword_list="klingon")


@given(st.text(max_size=80))
def test_analyze_deterministic(text):
    config = AnalyzerConfig(stemmer="porter")
    assert analyze(text, config) == analyze(text, config)
