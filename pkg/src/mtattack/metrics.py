"""Evaluation metrics and the run report.

All victim calls made here go through an evaluation ledger, separate from
the ledger that accounts for attack-time queries.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

from .errors import MetricMismatch
from .text import as_text
from .victims import QueryLedger, TaskSpec, Victim, VictimResponse, query

REPORT_SCHEMA_VERSION = 1
BLEU_MAX_ORDER = 4
BLEU_PRECISION_FLOOR = 1e-9


def _tokens(x) -> list[str]:
    if isinstance(x, str):
        return as_text(x).words if x.strip() else []
    return list(x)


def _task(victim: Victim, task_id: str) -> TaskSpec:
    for t in victim.declare_tasks():
        if t.task_id == task_id:
            return t
    raise MetricMismatch(f"victim has no task {task_id!r}")


def asr_from_labels(original_labels: Sequence[str], adversarial_labels: Sequence[Optional[str]]) -> float:
    """Percent of items whose label changed; ``None`` means no adversarial example."""
    n = len(original_labels)
    if n != len(adversarial_labels):
        raise ValueError("originals and adversarials differ in length")
    if n == 0:
        return 0.0
    changed = sum(a is not None and a != o for o, a in zip(original_labels, adversarial_labels))
    return 100.0 * changed / n


def asr(originals, adversarials, victim: Victim, task_id: str, eval_ledger: QueryLedger) -> float:
    """Attack success rate (percent) on one classification task."""
    if _task(victim, task_id).kind != "classification":
        raise MetricMismatch(f"ASR needs a classification task, {task_id!r} is not one")
    if len(originals) != len(adversarials):
        raise ValueError("originals and adversarials differ in length")
    orig_labels, adv_labels = [], []
    for o, a in zip(originals, adversarials):
        if a is None:
            orig_labels.append("")
            adv_labels.append(None)
            continue
        orig_labels.append(query(victim, o, eval_ledger).get(task_id))
        adv_labels.append(query(victim, a, eval_ledger).get(task_id))
    return asr_from_labels(orig_labels, adv_labels)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(reference_tokens, hypothesis_tokens) -> float:
    """Sentence BLEU-4: geometric mean of clipped n-gram precisions (zero
    precisions floored at 1e-9) times the brevity penalty.

    A hypothesis shorter than four tokens has no n-grams of the higher
    orders; those orders are left out of the mean rather than floored.
    """
    ref = _tokens(reference_tokens)
    hyp = _tokens(hypothesis_tokens)
    if not ref:
        raise ValueError("reference must be non-empty")
    if not hyp:
        return 0.0
    order = min(BLEU_MAX_ORDER, len(hyp))
    log_sum = 0.0
    for n in range(1, order + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        total = sum(h.values())
        matched = sum(min(c, r[g]) for g, c in h.items())
        prec = matched / total if matched > 0 else BLEU_PRECISION_FLOOR
        log_sum += math.log(prec)
    c, rl = len(hyp), len(ref)
    bp = 1.0 if c >= rl else math.exp(1.0 - rl / c)
    return bp * math.exp(log_sum / order)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_f1(reference, candidate) -> float:
    ref, cand = _tokens(reference), _tokens(candidate)
    if not ref or not cand:
        return 0.0
    lcs = lcs_length(ref, cand)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


def rouge_drop(reference_summary, original_summary, adversarial_summary) -> Optional[float]:
    """ROUGE-L F1 drop in percent, clamped to [0, 100]; None when the
    original summary scores zero."""
    r_orig = rouge_l_f1(reference_summary, original_summary)
    if r_orig == 0:
        return None
    r_adv = rouge_l_f1(reference_summary, adversarial_summary)
    return min(100.0, max(0.0, 100.0 * (r_orig - r_adv) / r_orig))


@dataclass
class AttackReport:
    task_metrics: list
    mean_similarity: Optional[float]
    total_queries: int
    eval_queries: int
    config_digest: str
    seed: int
    n_texts: int = 0
    n_adversarial: int = 0
    notes: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def metric(self, task_id: str) -> dict:
        for m in self.task_metrics:
            if m["task_id"] == task_id:
                return m
        raise KeyError(task_id)

    @property
    def mean_asr(self) -> Optional[float]:
        vals = [m["value"] for m in self.task_metrics if m["metric"] == "asr"]
        return sum(vals) / len(vals) if vals else None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["schema_version", "config_digest", "seed", "task_id", "kind", "metric", "value",
                    "n", "mean_similarity", "total_queries", "eval_queries"])
        for m in self.task_metrics:
            w.writerow([self.schema_version, self.config_digest, self.seed, m["task_id"], m["kind"],
                        m["metric"], "" if m["value"] is None else repr(m["value"]), m["n"],
                        "" if self.mean_similarity is None else repr(self.mean_similarity),
                        self.total_queries, self.eval_queries])
        return buf.getvalue()


def evaluate_responses(tasks: Sequence[TaskSpec], original_responses: Sequence[VictimResponse],
                       adversarial_responses: Sequence[Optional[VictimResponse]],
                       references: Optional[dict] = None) -> list:
    """Per-task metrics from victim responses.  A ``None`` adversarial
    response is a failed attack: label unchanged, translation and summary
    identical to the original."""
    out = []
    n = len(original_responses)
    for t in tasks:
        origs = [r.get(t.task_id) for r in original_responses]
        advs = [None if r is None else r.get(t.task_id) for r in adversarial_responses]
        if t.kind == "classification":
            out.append({"task_id": t.task_id, "kind": t.kind, "metric": "asr",
                        "value": asr_from_labels(origs, advs), "n": n})
        elif t.kind == "translation":
            scores = [bleu(o, o if a is None else a) for o, a in zip(origs, advs)]
            out.append({"task_id": t.task_id, "kind": t.kind, "metric": "bleu",
                        "value": sum(scores) / n if n else None, "n": n,
                        "aggregation": "mean of sentence BLEU"})
        else:
            refs = (references or {}).get(t.task_id) or origs
            drops = [rouge_drop(ref, o, o if a is None else a) for ref, o, a in zip(refs, origs, advs)]
            drops = [d for d in drops if d is not None]
            out.append({"task_id": t.task_id, "kind": t.kind, "metric": "rdp",
                        "value": sum(drops) / len(drops) if drops else None, "n": len(drops)})
    return out


def evaluate_victim(victim: Victim, originals: Sequence, adversarials: Sequence,
                    eval_ledger: QueryLedger):
    """Query the victim on each original and each existing adversarial text."""
    orig_resp = [query(victim, o, eval_ledger) for o in originals]
    adv_resp = [None if a is None else query(victim, a, eval_ledger) for a in adversarials]
    return orig_resp, adv_resp


def build_report(tasks, original_responses, adversarial_responses, similarities: Sequence[float],
                 attack_ledger: QueryLedger, eval_ledger: QueryLedger, config_digest: str,
                 seed: int, notes: Optional[dict] = None, references: Optional[dict] = None) -> AttackReport:
    metrics = evaluate_responses(tasks, original_responses, adversarial_responses, references)
    sims = [s for s in similarities if s is not None]
    return AttackReport(
        task_metrics=metrics,
        mean_similarity=sum(sims) / len(sims) if sims else None,
        total_queries=attack_ledger.total_queries,
        eval_queries=eval_ledger.total_queries,
        config_digest=config_digest,
        seed=seed,
        n_texts=len(original_responses),
        n_adversarial=sum(r is not None for r in adversarial_responses),
        notes=dict(notes or {}),
    )
