import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtattack.errors import EmptyText, InvalidEdit, UndefinedSimilarity
from mtattack.text import (Perturbation, apply_perturbation, cosine_similarity, lexical_embed,
                           normalize_and_tokenize, replay, token_key)

words = st.text(alphabet="abcdefghij,.!", min_size=1, max_size=8)
sentences = st.lists(words, min_size=1, max_size=8).map(" ".join)


def test_whitespace_collapses():
    t = normalize_and_tokenize("the  cat sat")
    assert t.words == ["the", "cat", "sat"]
    assert t.raw == "the cat sat"


def test_punctuation_stays_attached():
    assert normalize_and_tokenize("Hello, world").words == ["Hello,", "world"]


def test_blank_text_rejected():
    with pytest.raises(EmptyText):
        normalize_and_tokenize("   ")


def test_token_offsets_index_raw():
    t = normalize_and_tokenize("bad  movie here")
    for tok in t.tokens:
        assert t.raw[tok.start_char:tok.end_char] == tok.surface


def test_nfc_normalization():
    assert normalize_and_tokenize("café").raw == "café"


@pytest.mark.parametrize("p, expected", [
    (Perturbation("char-swap-adjacent", 0, 1), "bda movie"),
    (Perturbation("word-substitute", 1, payload="film"), "bad film"),
    (Perturbation("char-insert", 1, 5, "s"), "bad movies"),
    (Perturbation("char-substitute", 0, 0, "m"), "mad movie"),
    (Perturbation("char-delete", 1, 0), "bad ovie"),
])
def test_edits(p, expected):
    assert apply_perturbation(normalize_and_tokenize("bad movie"), p).raw == expected


def test_emptied_token_is_dropped():
    out = apply_perturbation(normalize_and_tokenize("a b"), Perturbation("char-delete", 0, 0))
    assert out.raw == "b"


@pytest.mark.parametrize("p", [
    Perturbation("char-delete", 5, 0),
    Perturbation("char-delete", 0, 9),
    Perturbation("char-swap-adjacent", 0, 2),
    Perturbation("word-substitute", 0, payload="two words"),
    Perturbation("char-insert", 0, 0, "xy"),
    Perturbation("bogus", 0, 0),
])
def test_invalid_edits(p):
    with pytest.raises(InvalidEdit):
        apply_perturbation(normalize_and_tokenize("bad movie"), p)


def test_cannot_empty_the_text():
    with pytest.raises(InvalidEdit):
        apply_perturbation(normalize_and_tokenize("a"), Perturbation("char-delete", 0, 0))


def test_replay_and_dict_roundtrip():
    t = normalize_and_tokenize("bad movie")
    edits = [Perturbation("char-swap-adjacent", 0, 1), Perturbation("word-substitute", 1, payload="film")]
    assert replay(t, edits).raw == "bda film"
    assert [Perturbation.from_dict(e.to_dict()) for e in edits] == edits


def test_token_key():
    assert token_key("Movie!") == "movie"
    assert token_key("...") == "..."


@settings(max_examples=60, deadline=None)
@given(sentences, st.integers(0, 20), st.integers(0, 20), st.sampled_from("xyz"))
def test_substitute_changes_one_token_only(raw, ti, co, ch):
    t = normalize_and_tokenize(raw)
    ti %= len(t)
    co %= len(t.words[ti])
    out = apply_perturbation(t, Perturbation("char-substitute", ti, co, ch))
    assert len(out) == len(t)
    diff = [i for i, (a, b) in enumerate(zip(t.words, out.words)) if a != b]
    assert diff in ([], [ti])
    # the input is untouched
    assert t == normalize_and_tokenize(raw)


def test_embedding_is_deterministic_and_unit():
    a, b = lexical_embed("abc"), lexical_embed("abc")
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6


def test_embedding_dim_floor():
    with pytest.raises(ValueError):
        lexical_embed("abc", dim=32)


def test_near_duplicate_closer_than_unrelated():
    base = lexical_embed("adversarial attack")
    assert (cosine_similarity(base, lexical_embed("adversarial attacks"))
            > cosine_similarity(base, lexical_embed("banana smoothie")))


def test_cosine_values():
    v = np.array([0.3, -1.2, 2.0])
    assert cosine_similarity(v, v) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1, 0], [1, 0, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-4)


def test_cosine_zero_vector():
    with pytest.raises(UndefinedSimilarity):
        cosine_similarity([0, 0], [1, 0])


@settings(max_examples=50, deadline=None)
@given(sentences, sentences)
def test_cosine_symmetric_and_bounded(a, b):
    ea, eb = lexical_embed(a), lexical_embed(b)
    s = cosine_similarity(ea, eb)
    assert s == cosine_similarity(eb, ea)
    assert -1.0 <= s <= 1.0
