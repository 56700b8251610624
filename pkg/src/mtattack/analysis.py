"""Empirical checks behind the multi-method design.

* :func:`simulate_union_prob` estimates P(at least one of u methods succeeds)
  for u = 1..u_max, with independent or Gaussian-copula-coupled successes.
* :func:`independence_table` compares P(A)P(B) with P(AB) for every pair of
  attack methods.
* :func:`transfer_rate_report` tabulates victim flips against the number of
  substitutes a candidate fooled.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInput
from .ensemble import transferability_scores
from .text import as_text
from .victims import QueryLedger, Victim, query


@dataclass(frozen=True)
class EventSimConfig:
    success_probs: tuple
    trials: int = 100_000
    dependence: str = "independent"
    rho: float = 0.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.success_probs or not all(0 < p < 1 for p in self.success_probs):
            raise InvalidInput("success probabilities must lie in (0, 1)")
        if self.trials < 10_000:
            raise InvalidInput("at least 10^4 trials are required")
        if self.dependence not in ("independent", "shared-latent"):
            raise InvalidInput(f"unknown dependence {self.dependence!r}")
        if self.dependence == "shared-latent" and not 0 <= self.rho < 1:
            raise InvalidInput("rho must lie in [0, 1)")

    @property
    def u_max(self) -> int:
        return len(self.success_probs)


@dataclass(frozen=True)
class UnionEstimate:
    estimates: tuple
    std_errors: tuple
    closed_form: Optional[tuple]
    config: EventSimConfig

    def to_dict(self) -> dict:
        return {
            "u": list(range(1, len(self.estimates) + 1)),
            "estimates": list(self.estimates),
            "std_errors": list(self.std_errors),
            "closed_form": None if self.closed_form is None else list(self.closed_form),
            "success_probs": list(self.config.success_probs),
            "dependence": self.config.dependence,
            "rho": self.config.rho,
            "trials": self.config.trials,
        }


def _success_counts(cfg: EventSimConfig, n: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    """Count, for each u, the trials where one of the first u methods succeeded."""
    rng = np.random.default_rng(seed_seq)
    p = np.asarray(cfg.success_probs)
    if cfg.dependence == "independent":
        success = rng.random((n, len(p))) < p
    else:
        thresholds = np.array([NormalDist().inv_cdf(q) for q in p])
        shared = rng.standard_normal((n, 1))
        own = rng.standard_normal((n, len(p)))
        latent = math.sqrt(cfg.rho) * shared + math.sqrt(1 - cfg.rho) * own
        success = latent < thresholds
    any_so_far = np.logical_or.accumulate(success, axis=1)
    return any_so_far.sum(axis=0)


def simulate_union_prob(cfg: EventSimConfig) -> UnionEstimate:
    workers = max(1, cfg.workers)
    chunks = [cfg.trials // workers + (i < cfg.trials % workers) for i in range(workers)]
    seeds = np.random.SeedSequence(cfg.seed).spawn(workers)
    if workers == 1:
        parts = [_success_counts(cfg, chunks[0], seeds[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _success_counts(cfg, *a), zip(chunks, seeds)))
    counts = np.sum(parts, axis=0)
    est = counts / cfg.trials
    se = np.sqrt(est * (1 - est) / cfg.trials)
    closed = None
    if cfg.dependence == "independent":
        # P_u = P_{u-1} + (1 - P_{u-1}) p_u, exact at u = 1
        closed, prev = [], 0.0
        for p in cfg.success_probs:
            prev = prev + (1.0 - prev) * p
            closed.append(prev)
    return UnionEstimate(tuple(est.tolist()), tuple(se.tolist()),
                         None if closed is None else tuple(closed), cfg)


def is_monotone(estimate: UnionEstimate, n_se: float = 2.0) -> bool:
    """Non-decreasing in u, allowing ``n_se`` standard errors of slack."""
    e, s = estimate.estimates, estimate.std_errors
    return all(e[i + 1] >= e[i] - n_se * max(s[i], s[i + 1]) for i in range(len(e) - 1))


def independence_table(success_sets: dict, universe: Sequence) -> dict:
    """Pairwise P(A), P(B), P(A)P(B), P(AB) and P(A)P(B) - P(AB)."""
    universe = set(universe)
    if not universe:
        raise InvalidInput("empty text universe")
    if len(success_sets) < 2:
        raise InvalidInput("need at least two methods")
    n = len(universe)
    sets = {m: set(s) & universe for m, s in success_sets.items()}
    rows = []
    for a, b in itertools.combinations(sets, 2):
        pa, pb = len(sets[a]) / n, len(sets[b]) / n
        pab = len(sets[a] & sets[b]) / n
        rows.append({"method_a": a, "method_b": b, "p_a": pa, "p_b": pb,
                     "p_a_times_p_b": pa * pb, "p_ab": pab, "deviation": pa * pb - pab})
    devs = [r["deviation"] for r in rows]
    return {
        "rows": rows,
        "average_deviation": sum(devs) / len(devs),
        "average_abs_deviation": sum(abs(d) for d in devs) / len(devs),
        "n": n,
    }


def transfer_rate_report(candidates_by_text: Sequence, substitutes: Sequence, victim: Victim,
                         eval_ledger: QueryLedger) -> list:
    """Empirical P(victim output changes | candidate fooled k substitutes).

    ``candidates_by_text`` holds (original text, candidates) pairs.  The
    victim counts as flipped when any classification label changes (or any
    output changes, for victims without classification tasks).  Only
    observed k values get a row.
    """
    tasks = victim.declare_tasks()
    cls_ids = [t.task_id for t in tasks if t.kind == "classification"]
    watched = cls_ids or [t.task_id for t in tasks]
    counts: dict[int, list] = {}
    for original, cands in candidates_by_text:
        if not cands:
            continue
        original = as_text(original)
        _, totals = transferability_scores(substitutes, original, cands)
        base = query(victim, original, eval_ledger)
        for c, k in zip(cands, totals):
            resp = query(victim, c.text, eval_ledger)
            flipped = any(resp.get(t) != base.get(t) for t in watched)
            row = counts.setdefault(int(k), [0, 0])
            row[0] += 1
            row[1] += int(flipped)
    return [{"k": k, "n": n, "victim_flips": f, "rate": f / n}
            for k, (n, f) in sorted(counts.items())]
