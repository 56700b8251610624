"""Tokenization, single-edit perturbations and the lexical similarity embedding.

Tokens are whitespace-delimited with punctuation left attached, so a
:class:`Text` can always be rebuilt by joining its token surfaces with single
spaces.  Every perturbation rewrites exactly one token (or removes it when a
deletion empties it), which keeps edits replayable and easy to audit.
"""

from __future__ import annotations

import hashlib
import math
import string
import unicodedata
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyText, InvalidEdit, UndefinedSimilarity

# Key for the n-gram hash.  Changing it changes every lexical vector.
NGRAM_HASH_KEY = b"mtattack-ngram-v1"
NGRAM_ORDER = 3

CHAR_KINDS = ("char-insert", "char-delete", "char-swap-adjacent", "char-substitute")
EDIT_KINDS = CHAR_KINDS + ("word-substitute",)


@dataclass(frozen=True)
class Token:
    surface: str
    start_char: int
    end_char: int


@dataclass(frozen=True)
class Text:
    raw: str
    tokens: tuple[Token, ...]

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return self.raw


@dataclass(frozen=True)
class Perturbation:
    kind: str
    token_index: int
    char_offset: Optional[int] = None
    payload: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "token_index": self.token_index,
            "char_offset": self.char_offset,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Perturbation":
        return cls(d["kind"], d["token_index"], d.get("char_offset"), d.get("payload"))


def _from_words(words: Sequence[str]) -> Text:
    tokens = []
    pos = 0
    for w in words:
        tokens.append(Token(w, pos, pos + len(w)))
        pos += len(w) + 1
    return Text(" ".join(words), tuple(tokens))


def normalize_and_tokenize(raw: str) -> Text:
    """Collapse whitespace (after NFC) and split into tokens.

    >>> normalize_and_tokenize("the  cat sat").words
    ['the', 'cat', 'sat']
    """
    words = unicodedata.normalize("NFC", raw).split()
    if not words:
        raise EmptyText("text is empty or whitespace-only")
    return _from_words(words)


def as_text(value) -> Text:
    return value if isinstance(value, Text) else normalize_and_tokenize(value)


def token_key(surface: str) -> str:
    """Lookup key for a surface form: lowercased, outer punctuation stripped."""
    key = surface.lower().strip(string.punctuation)
    return key or surface.lower()


def _check_char_offset(word: str, p: Perturbation, upper: int) -> int:
    off = p.char_offset
    if off is None or not 0 <= off < upper:
        raise InvalidEdit(f"{p.kind}: char offset {off!r} outside token {word!r}")
    return off


def _check_payload(p: Perturbation, single_char: bool) -> str:
    pay = p.payload
    if not pay or any(c.isspace() for c in pay):
        raise InvalidEdit(f"{p.kind}: payload must be non-empty and whitespace-free")
    if single_char and len(pay) != 1:
        raise InvalidEdit(f"{p.kind}: payload must be a single character")
    return pay


def apply_perturbation(text: Text, p: Perturbation) -> Text:
    """Return a new Text with the single edit ``p`` applied."""
    words = list(text.words)
    if not 0 <= p.token_index < len(words):
        raise InvalidEdit(f"token index {p.token_index} out of range for {len(words)} tokens")
    word = words[p.token_index]

    if p.kind == "char-insert":
        # inserting at len(word) appends
        off = _check_char_offset(word, p, len(word) + 1)
        new = word[:off] + _check_payload(p, True) + word[off:]
    elif p.kind == "char-delete":
        off = _check_char_offset(word, p, len(word))
        new = word[:off] + word[off + 1:]
    elif p.kind == "char-swap-adjacent":
        off = _check_char_offset(word, p, len(word) - 1)
        new = word[:off] + word[off + 1] + word[off] + word[off + 2:]
    elif p.kind == "char-substitute":
        off = _check_char_offset(word, p, len(word))
        new = word[:off] + _check_payload(p, True) + word[off + 1:]
    elif p.kind == "word-substitute":
        new = _check_payload(p, False)
    else:
        raise InvalidEdit(f"unknown edit kind {p.kind!r}")

    if new:
        words[p.token_index] = new
    else:
        del words[p.token_index]
    if not words:
        raise InvalidEdit("edit would leave the text empty")
    return _from_words(words)


def replay(original: Text, edits: Sequence[Perturbation]) -> Text:
    out = original
    for e in edits:
        out = apply_perturbation(out, e)
    return out


def _bucket(gram: str, dim: int) -> int:
    h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=NGRAM_HASH_KEY)
    return int.from_bytes(h.digest(), "little") % dim


def lexical_embed(text, dim: int = 256) -> np.ndarray:
    """Hashed character 3-gram term frequencies, L2-normalized.

    The text is padded with one space on each side so word boundaries
    contribute their own n-grams.
    """
    if dim < 64:
        raise ValueError("dim must be >= 64")
    padded = f" {as_text(text).raw} "
    vec = np.zeros(dim)
    for i in range(len(padded) - NGRAM_ORDER + 1):
        vec[_bucket(padded[i:i + NGRAM_ORDER], dim)] += 1.0
    return vec / np.linalg.norm(vec)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarity("cosine similarity of a zero vector")
    # dot of the pre-normalized vectors is order independent for a symmetric result
    val = float((a / na) @ (b / nb))
    return min(1.0, max(-1.0, val))
