"""Desk-scale toy victims and a seeded synthetic review corpus.

The victims are deterministic rule tables, so whether an adversarial text
changed a victim's output can be checked by hand.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .victims import TaskSpec, ToyVictim, builtin_dictionary_translator, builtin_lexicon_classifier

JOY_WORDS = ["love", "great", "happy", "wonderful", "delightful", "excellent",
             "enjoy", "brilliant", "charming", "fantastic", "beautiful", "fun"]
SAD_WORDS = ["hate", "awful", "terrible", "sad", "boring", "dreadful",
             "horrible", "miserable", "dull", "poor", "ugly", "painful"]
NEUTRAL_WORDS = ["the", "movie", "film", "plot", "actor", "story", "this", "was",
                 "is", "a", "scene", "ending", "music", "i", "we", "it", "and",
                 "cast", "script", "show", "of", "with", "director", "night",
                 "book", "very", "really", "so", "my", "friends"]
INTENSIFIERS = ["very", "really", "so", "truly", "extremely"]

EMOTION_LEXICON = {"joy": JOY_WORDS, "sadness": SAD_WORDS}

POLARITY_LEXICON = {
    "positive": ["love", "great", "excellent", "brilliant", "fantastic", "beautiful", "enjoy", "fun"],
    "negative": ["hate", "awful", "terrible", "horrible", "dreadful", "poor", "ugly", "boring"],
}
INTENSITY_LEXICON = {
    "strong": ["very", "really", "so", "truly", "extremely", "love", "hate",
               "fantastic", "horrible", "brilliant", "dreadful"],
}
SUBJECT_LEXICON = {
    "screen": ["movie", "film", "actor", "scene", "cast", "script", "director", "show"],
    "print": ["book", "story", "plot", "ending"],
}

# Made-up target languages: a mechanical respelling per word.
def _respell(word: str, suffix: str, swap: bool) -> str:
    w = word[::-1] if swap and len(word) > 3 else word
    return w + suffix


_ALL_WORDS = sorted(set(JOY_WORDS + SAD_WORDS + NEUTRAL_WORDS + INTENSIFIERS))
FR_DICTIONARY = {w: _respell(w, "e", False) for w in _ALL_WORDS}
FR_DICTIONARY.update({"the": "le", "cat": "chat", "i": "je", "love": "aime", "this": "ceci",
                      "and": "et", "a": "un", "is": "est", "was": "etait"})
ES_DICTIONARY = {w: _respell(w, "o", True) for w in _ALL_WORDS}
ES_DICTIONARY.update({"the": "el", "cat": "gato", "i": "yo", "and": "y", "a": "uno"})


def two_task_victim() -> ToyVictim:
    """Emotion classification plus word-for-word translation."""
    cls = builtin_lexicon_classifier(EMOTION_LEXICON, default_label="neutral")
    tr = builtin_dictionary_translator(FR_DICTIONARY)
    return ToyVictim([
        (TaskSpec("sentiment-cls", "classification", cls.label_space), cls),
        (TaskSpec("word-sub-translation", "translation", notes="en->fr toy dictionary"), tr),
    ])


def six_task_victim() -> ToyVictim:
    """Four classification tasks and two translation tasks."""
    emo = builtin_lexicon_classifier(EMOTION_LEXICON, "neutral")
    pol = builtin_lexicon_classifier(POLARITY_LEXICON, "mixed")
    inten = builtin_lexicon_classifier(INTENSITY_LEXICON, "mild")
    subj = builtin_lexicon_classifier(SUBJECT_LEXICON, "other")
    fr = builtin_dictionary_translator(FR_DICTIONARY)
    es = builtin_dictionary_translator(ES_DICTIONARY)
    return ToyVictim([
        (TaskSpec("emotion-cls", "classification", emo.label_space), emo),
        (TaskSpec("polarity-cls", "classification", pol.label_space), pol),
        (TaskSpec("intensity-cls", "classification", inten.label_space), inten),
        (TaskSpec("subject-cls", "classification", subj.label_space), subj),
        (TaskSpec("fr-translation", "translation"), fr),
        (TaskSpec("es-translation", "translation"), es),
    ])


BUILTIN_VICTIMS = {"two-task": two_task_victim, "six-task": six_task_victim}


def builtin_victim(name: str) -> ToyVictim:
    try:
        return BUILTIN_VICTIMS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin victim {name!r}; choose from {sorted(BUILTIN_VICTIMS)}") from None


def toy_corpus(n: int, seed: int = 0, min_len: int = 6, max_len: int = 10) -> list[dict]:
    """Synthetic one-line reviews, each carrying one or two emotion words.

    A small share of texts mixes both polarities so the emotion label is not a
    pure function of a single word.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        pool = JOY_WORDS if rng.random() < 0.5 else SAD_WORDS
        n_emo = 1 if rng.random() < 0.7 else 2
        words = list(rng.choice(NEUTRAL_WORDS, size=length - n_emo))
        for _ in range(n_emo):
            words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(pool)))
        if rng.random() < 0.1:
            other = SAD_WORDS if pool is JOY_WORDS else JOY_WORDS
            words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(other)))
        rows.append({"id": f"t{i:05d}", "text": " ".join(str(w) for w in words)})
    return rows


def write_jsonl(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise ConfigError(f"{path}:{lineno}: expected an object with 'id' and 'text'")
            rows.append({"id": str(obj["id"]), "text": obj["text"]})
    return rows
