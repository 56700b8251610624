"""White-box attacks on a substitute model and similarity-constrained
candidate generation.

Attacks only ever see a :class:`~mtattack.substitute.SubstituteModel`; the
victim is never consulted while candidates are crafted.  Each attack
maximizes the squared-error loss against the substitute's original
prediction and stops as soon as that prediction flips.
"""

from __future__ import annotations

import csv
import math
import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional, Sequence

import numpy as np

from .representation import HashedNgramEmbedder, embed
from .substitute import OOV, SubstituteModel
from .text import (EDIT_KINDS, Perturbation, Text, apply_perturbation, as_text,
                   cosine_similarity, token_key)

METHOD_ORDER = ("hotflip", "fd", "textbugger")
HOTFLIP_RESCORE = 5
FD_RESCORE = 10
# TextBugger's "insert a space" bug; a visible joiner keeps the edit inside one token.
SPLIT_CHAR = "-"
ALPHABET = string.ascii_lowercase


@dataclass(frozen=True)
class AttackConstraints:
    epsilon: float = 0.8
    max_edit_ratio: float = 0.25
    max_substitute_evals: int = 2000

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")
        if not 0 <= self.max_edit_ratio <= 1:
            raise ValueError("max_edit_ratio must lie in [0, 1]")

    def max_edits(self, n_tokens: int) -> int:
        # round before ceil so 0.25 * 8 stays 2
        return math.ceil(round(self.max_edit_ratio * n_tokens, 9))


@dataclass(frozen=True)
class AdversarialCandidate:
    text: Text
    method_id: str
    similarity: float
    flipped_primary: bool
    edits: tuple[Perturbation, ...]
    n_evals: int = 0

    def to_dict(self) -> dict:
        return {
            "text": self.text.raw,
            "method_id": self.method_id,
            "similarity": self.similarity,
            "flipped_primary": self.flipped_primary,
            "edits": [e.to_dict() for e in self.edits],
            "n_evals": self.n_evals,
        }


@dataclass(frozen=True)
class NoFlip:
    """An attack that ended without flipping the substitute."""
    method_id: str
    reason: str
    n_evals: int = 0


@lru_cache(maxsize=1)
def load_confusables() -> dict:
    table: dict[str, str] = {}
    with resources.files("mtattack").joinpath("data/confusables.tsv").open(encoding="utf-8") as f:
        rows = csv.reader(f, delimiter="\t")
        next(rows)
        for row in rows:
            if len(row) == 2:
                table.setdefault(row[0], row[1])
    return table


class _Search:
    """Shared state for one attack run: loss bookkeeping and the eval cap."""

    def __init__(self, model: SubstituteModel, text: Text, constraints: AttackConstraints,
                 embedder, method_id: str):
        self.model = model
        self.original = text
        self.constraints = constraints
        self.embedder = embedder if embedder is not None else HashedNgramEmbedder()
        self.method_id = method_id
        self.evals = 0
        self.orig_vec = embed(self.embedder, text)
        self.target = int(self._proba(text) >= 0.5)
        self.max_edits = constraints.max_edits(len(text))

    def _proba(self, text: Text) -> float:
        self.evals += 1
        return self.model.predict_proba(text)

    def loss(self, text: Text) -> float:
        return (self.target - self._proba(text)) ** 2

    def gradient(self, text: Text) -> np.ndarray:
        self.evals += 1
        return self.model.input_gradient(text, target=self.target)

    def similarity(self, text: Text) -> float:
        return cosine_similarity(self.orig_vec, embed(self.embedder, text))

    def exhausted(self) -> bool:
        return self.evals >= self.constraints.max_substitute_evals

    def flipped(self, loss: float) -> bool:
        # loss = (target - p)^2 >= 0.25  <=>  prediction left the target side
        return loss >= 0.25 if self.target == 0 else loss > 0.25

    def pick(self, current: Text, edits: Sequence[Perturbation]):
        """Exact-rescore ``edits``; return the best (loss, sim, edit, text)
        among those that keep similarity >= epsilon."""
        best = None
        for e in edits:
            if self.exhausted():
                break
            new = apply_perturbation(current, e)
            sim = self.similarity(new)
            if sim < self.constraints.epsilon:
                continue
            key = (self.loss(new), sim, -EDIT_KINDS.index(e.kind))
            if best is None or key > best[0]:
                best = (key, e, new)
        if best is None:
            return None
        (loss, sim, _), e, new = best
        return loss, sim, e, new

    def result(self, current: Text, edits: list, loss: float, reason: str):
        if edits and self.flipped(loss):
            return AdversarialCandidate(current, self.method_id, self.similarity(current),
                                        True, tuple(edits), self.evals)
        return NoFlip(self.method_id, reason, self.evals)


def _char_edits(word: str, index: int) -> list[Perturbation]:
    out = [Perturbation("char-delete", index, o) for o in range(len(word))]
    out += [Perturbation("char-swap-adjacent", index, o) for o in range(len(word) - 1)
            if word[o] != word[o + 1]]
    out += [Perturbation("char-substitute", index, o, c)
            for o in range(len(word)) for c in ALPHABET if c != word[o]]
    return out


def _edited_surface(word: str, e: Perturbation) -> str:
    o = e.char_offset
    if e.kind == "char-delete":
        return word[:o] + word[o + 1:]
    if e.kind == "char-swap-adjacent":
        return word[:o] + word[o + 1] + word[o] + word[o + 2:]
    if e.kind == "char-substitute":
        return word[:o] + e.payload + word[o + 1:]
    if e.kind == "char-insert":
        return word[:o] + e.payload + word[o:]
    return e.payload


def _edit_order(e: Perturbation):
    return (EDIT_KINDS.index(e.kind), e.char_offset or 0, e.payload or "")


def hotflip_attack(model: SubstituteModel, text, constraints: AttackConstraints = AttackConstraints(),
                   embedder=None):
    """Greedy character flips guided by first-order loss estimates.

    Positions are visited in order of their best estimated gain; within a
    position the top estimates are re-scored exactly and the best is kept
    if it raises the loss.
    """
    text = as_text(text)
    s = _Search(model, text, constraints, embedder, "hotflip")
    current, edits = text, []
    cur_loss = s.loss(current)
    if s.max_edits == 0:
        return NoFlip("hotflip", "edit budget is zero", s.evals)
    while len(edits) < s.max_edits and not s.exhausted():
        grad = s.gradient(current)
        ids = model.ids(current)
        ranked = []
        for pos, word in enumerate(current.words):
            cands = _char_edits(word, pos)
            if not cands:
                continue
            new_ids = np.array([model.token_id(_edited_surface(word, e)) for e in cands])
            est = (model.E[new_ids] - model.E[ids[pos]]) @ grad[pos]
            order = sorted(range(len(cands)), key=lambda i: (-est[i], _edit_order(cands[i])))
            ranked.append((float(est[order[0]]), pos, [cands[i] for i in order[:HOTFLIP_RESCORE]]))
        ranked.sort(key=lambda r: (-r[0], r[1]))
        step = None
        for _, pos, top in ranked:
            step = s.pick(current, top)
            if step is not None and step[0] > cur_loss:
                break
            step = None
            if s.exhausted():
                break
        if step is None:
            break
        cur_loss, _, e, current = step
        edits.append(e)
        if s.flipped(cur_loss):
            break
    return s.result(current, edits, cur_loss, "no flip within budget")


def fd_attack(model: SubstituteModel, text, constraints: AttackConstraints = AttackConstraints(),
              embedder=None):
    """Word substitution along the loss gradient over the substitute's vocabulary."""
    text = as_text(text)
    s = _Search(model, text, constraints, embedder, "fd")
    current, edits = text, []
    cur_loss = s.loss(current)
    if s.max_edits == 0:
        return NoFlip("fd", "edit budget is zero", s.evals)
    words = model.words
    if not words:
        return NoFlip("fd", "empty vocabulary", s.evals)
    word_ids = np.array([model.vocab[w] for w in words])
    Ew = model.E[word_ids]
    while len(edits) < s.max_edits and not s.exhausted():
        grad = s.gradient(current)
        ids = model.ids(current)
        ranked = []
        for pos, word in enumerate(current.words):
            key = token_key(word)
            est = (Ew - model.E[ids[pos]]) @ grad[pos]
            order = [i for i in np.argsort(-est, kind="stable") if words[i] != key]
            if order:
                ranked.append((float(est[order[0]]), pos, [words[i] for i in order[:FD_RESCORE]]))
        if not ranked:
            return NoFlip("fd", "no alternative word in vocabulary", s.evals)
        ranked.sort(key=lambda r: (-r[0], r[1]))
        step = None
        for _, pos, top in ranked:
            step = s.pick(current, [Perturbation("word-substitute", pos, payload=w) for w in top])
            if step is not None and step[0] > cur_loss:
                break
            step = None
            if s.exhausted():
                break
        if step is None:
            break
        cur_loss, _, e, current = step
        edits.append(e)
        if s.flipped(cur_loss):
            break
    return s.result(current, edits, cur_loss, "no flip within budget")


def _nearest_word(model: SubstituteModel, word: str) -> Optional[str]:
    i = model.token_id(word)
    if model.id_to_token[i] == OOV:
        return None
    v = model.E[i]
    norms = np.linalg.norm(model.E, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = (model.E @ v) / (norms * np.linalg.norm(v))
    cos[i] = -np.inf
    cos[model.vocab[OOV]] = -np.inf
    cos[~np.isfinite(cos)] = -np.inf
    j = int(np.argmax(cos))
    return None if not np.isfinite(cos[j]) else model.id_to_token[j]


def textbugger_bugs(model: SubstituteModel, word: str, index: int) -> list[Perturbation]:
    """The five bug kinds for one word, in fixed order."""
    bugs = []
    n = len(word)
    if n >= 2:
        bugs.append(Perturbation("char-insert", index, n // 2, SPLIT_CHAR))
    if n >= 3:
        bugs.append(Perturbation("char-delete", index, min(max(n // 2, 1), n - 2)))
    if n >= 4:
        bugs.append(Perturbation("char-swap-adjacent", index, (n - 2) // 2))
    if n >= 2:
        conf = load_confusables()
        for o, ch in enumerate(word):
            if ch in conf:
                bugs.append(Perturbation("char-substitute", index, o, conf[ch]))
                break
    near = _nearest_word(model, word)
    if near is not None and near != token_key(word):
        bugs.append(Perturbation("word-substitute", index, payload=near))
    return bugs


def word_importance(model: SubstituteModel, text: Text, target: int) -> list[float]:
    """Drop in the probability of ``target`` when each word is deleted."""
    p0 = model.predict_proba(text)
    p0 = p0 if target == 1 else 1 - p0
    out = []
    for i in range(len(text)):
        if len(text) == 1:
            out.append(0.0)
            continue
        words = text.words[:i] + text.words[i + 1:]
        p = model.predict_proba(" ".join(words))
        out.append(p0 - (p if target == 1 else 1 - p))
    return out


def textbugger_attack(model: SubstituteModel, text, constraints: AttackConstraints = AttackConstraints(),
                      embedder=None):
    """Visit words by deletion importance and apply the most damaging bug."""
    text = as_text(text)
    s = _Search(model, text, constraints, embedder, "textbugger")
    current, edits = text, []
    cur_loss = s.loss(current)
    if s.max_edits == 0:
        return NoFlip("textbugger", "edit budget is zero", s.evals)
    imp = word_importance(model, text, s.target)
    s.evals += len(text) + 1
    order = sorted(range(len(text)), key=lambda i: (-imp[i], i))
    for pos in order:
        if len(edits) >= s.max_edits or s.exhausted():
            break
        step = s.pick(current, textbugger_bugs(model, current.words[pos], pos))
        if step is None or step[0] <= cur_loss:
            continue
        cur_loss, _, e, current = step
        edits.append(e)
        if s.flipped(cur_loss):
            break
    return s.result(current, edits, cur_loss, "no flip within budget")


ATTACKS: dict[str, Callable] = {
    "hotflip": hotflip_attack,
    "fd": fd_attack,
    "textbugger": textbugger_attack,
}


def run_methods(methods: Sequence[str], model, victim_text, constraints=AttackConstraints(),
                embedder=None) -> list:
    text = as_text(victim_text)
    unknown = [m for m in methods if m not in ATTACKS]
    if unknown:
        raise ValueError(f"unknown attack methods {unknown}")
    return [ATTACKS[m](model, text, constraints, embedder) for m in methods]


def generate_candidates(methods: Sequence[str], model, victim_text,
                        constraints: AttackConstraints = AttackConstraints(), embedder=None) -> list:
    """Run each method from the original text and keep the candidates that
    flip the substitute with similarity >= epsilon."""
    if not methods:
        raise ValueError("at least one attack method is required")
    outcomes = run_methods(methods, model, victim_text, constraints, embedder)
    return [c for c in outcomes
            if isinstance(c, AdversarialCandidate) and c.flipped_primary
            and c.similarity >= constraints.epsilon]
