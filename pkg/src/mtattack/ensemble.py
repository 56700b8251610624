"""Bootstrap substitute ensemble and transferability-oriented selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .attacks import METHOD_ORDER, AdversarialCandidate
from .errors import InvalidDataset
from .substitute import SubstituteModel, TrainingConfig, fit
from .text import as_text

log = logging.getLogger(__name__)

MAX_RESAMPLES = 5
# largest double below 1; keeps the tie-break term strictly inside [0, 1)
_BELOW_ONE = math.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class EnsembleConfig:
    w: int = 6
    sample_fraction: float = 0.8
    base_seed: int = 0

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class SelectionResult:
    chosen: Optional[AdversarialCandidate]
    scores: tuple[int, ...]
    tie_break: tuple[float, ...]
    h: Optional[int]
    flip_matrix: Optional[np.ndarray] = None

    def to_dict(self) -> dict:
        return {
            "chosen": None if self.chosen is None else self.chosen.to_dict(),
            "scores": list(self.scores),
            "tie_break": list(self.tie_break),
            "h": self.h,
        }


def bootstrap_indices(n: int, cfg: EnsembleConfig, k: int, labels: Sequence[int]) -> np.ndarray:
    """Without-replacement sample of floor(fraction * n) indices for member k,
    redrawn (same stream) while it holds a single label."""
    size = math.floor(cfg.sample_fraction * n)
    rng = np.random.default_rng(cfg.base_seed + k)
    labels = np.asarray(labels)
    for _ in range(MAX_RESAMPLES + 1):
        idx = np.sort(rng.choice(n, size=size, replace=False))
        if len(np.unique(labels[idx])) == 2:
            return idx
    raise InvalidDataset(f"bootstrap sample for member {k} kept a single label after {MAX_RESAMPLES} redraws")


def train_ensemble(dataset: Sequence, cfg: EnsembleConfig = EnsembleConfig(),
                   training_cfg: TrainingConfig = TrainingConfig()) -> list[SubstituteModel]:
    """Train ``cfg.w`` substitutes, member k on its own 80% sample with
    training seed ``base_seed + k``."""
    if len(dataset) < 10:
        raise InvalidDataset(f"need at least 10 labelled texts, got {len(dataset)}")
    labels = [int(y) for _, y in dataset]
    models = []
    for k in range(cfg.w):
        idx = bootstrap_indices(len(dataset), cfg, k, labels)
        subset = [dataset[i] for i in idx]
        models.append(fit(subset, replace(training_cfg, seed=cfg.base_seed + k)))
    return models


def transferability_scores(models: Sequence[SubstituteModel], original, candidates):
    """Return (I, totals): ``I[k, j]`` is 1 when model k's label for
    candidate j differs from its label for the original."""
    if not models:
        raise ValueError("at least one model is required")
    original = as_text(original)
    I = np.zeros((len(models), len(candidates)), dtype=int)
    for k, m in enumerate(models):
        base = m.predict(original)
        for j, c in enumerate(candidates):
            I[k, j] = int(m.predict(getattr(c, "text", c)) != base)
    return I, I.sum(axis=0)


def probability_change(primary: SubstituteModel, original, candidate_text) -> float:
    """Drop in the primary's probability of its original label, clamped to [0, 1)."""
    p_orig = primary.predict_proba(original)
    y_hat = int(p_orig >= 0.5)
    p_adv = primary.predict_proba(candidate_text)
    if y_hat == 0:
        p_orig, p_adv = 1 - p_orig, 1 - p_adv
    pc = p_orig - p_adv
    if pc < 0:
        log.debug("negative probability change %.3g clamped to 0", pc)
    return min(max(pc, 0.0), _BELOW_ONE)


def _ordinal(c) -> int:
    mid = getattr(c, "method_id", None)
    return METHOD_ORDER.index(mid) if mid in METHOD_ORDER else len(METHOD_ORDER)


def select_final(primary: SubstituteModel, models: Sequence[SubstituteModel], original,
                 candidates: Sequence[AdversarialCandidate]) -> SelectionResult:
    """Pick h = argmax_j (I_j + p_c^j); exact ties go to the lowest method
    ordinal, then the earliest position in the list."""
    if not candidates:
        return SelectionResult(None, (), (), None)
    original = as_text(original)
    I, totals = transferability_scores(models, original, candidates)
    pcs = [probability_change(primary, original, c.text) for c in candidates]
    h = min(range(len(candidates)),
            key=lambda j: (-(totals[j] + pcs[j]), _ordinal(candidates[j]), j))
    return SelectionResult(candidates[h], tuple(int(t) for t in totals), tuple(pcs), h, I)
