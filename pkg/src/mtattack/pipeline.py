"""End-to-end attack, evaluation and ablation runs.

A run queries the victim once per auxiliary text and never again during
crafting.  Victim calls made to measure the result go to a separate
evaluation ledger.
"""

from __future__ import annotations

import copy
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .attacks import METHOD_ORDER, AdversarialCandidate, AttackConstraints, NoFlip, run_methods
from .clustering import assign_deep_labels, cluster
from .config import digest as config_digest
from .config import load_config
from .ensemble import EnsembleConfig, SelectionResult, select_final, train_ensemble
from .errors import ConfigError
from .metrics import AttackReport, build_report
from .representation import (CachedEmbedder, HashedNgramEmbedder, OneHotEmbedder, RemoteEmbedder,
                             build_joint)
from .substitute import SubstituteModel, TrainingConfig, train
from .text import as_text
from .toy import builtin_victim, read_jsonl, toy_corpus, write_jsonl
from .victims import QueryLedger, RemoteVictim, RetryPolicy, query

log = logging.getLogger(__name__)

METHOD_SETS = {1: ["textbugger"], 2: ["hotflip", "textbugger"], 3: ["hotflip", "fd", "textbugger"]}
ABLATION_AXES = ("clusters", "methods", "embedder", "clustering", "queries")
ABLATION_DEFAULTS = {
    "clusters": [2, 3, 4],
    "methods": [1, 3],
    "embedder": ["hashed-ngram", "one-hot"],
    "clustering": ["spectral", "kmeans"],
    "queries": [10, 50, 100],
}


def make_victim(spec: dict):
    if "builtin" in spec:
        return builtin_victim(spec["builtin"])
    return RemoteVictim(spec["url"], timeout=float(spec.get("timeout", 10.0)),
                        retry_policy=RetryPolicy(int(spec.get("retries", 2)), float(spec.get("backoff", 0.0))),
                        max_in_flight=int(spec.get("max_in_flight", 4)))


def make_embedder(spec: dict, corpus=()):
    backend = spec.get("backend", "hashed-ngram")
    if backend == "hashed-ngram":
        return CachedEmbedder(HashedNgramEmbedder(int(spec.get("dim", 256))))
    if backend == "one-hot":
        return CachedEmbedder(OneHotEmbedder.from_texts(corpus))
    if backend == "remote":
        return RemoteEmbedder(spec["url"], spec.get("dim"))
    raise ConfigError(f"unknown embedder backend {backend!r}")


def training_config(cfg: dict, seed: int) -> TrainingConfig:
    known = {f.name for f in fields(TrainingConfig)}
    extra = set(cfg["training"]) - known
    if extra:
        raise ConfigError(f"unknown training keys {sorted(extra)}")
    return TrainingConfig(**{**cfg["training"], "seed": seed})


def load_texts(cfg: dict) -> list[dict]:
    if cfg["victim_texts_path"]:
        return read_jsonl(cfg["victim_texts_path"])
    tc = cfg["toy_corpus"]
    return toy_corpus(int(tc["n"]), int(tc["seed"]))


def load_auxiliary(cfg: dict, victim_rows: list[dict]) -> list[dict]:
    size = int(cfg["auxiliary_size"])
    if cfg["auxiliary_path"]:
        rows = read_jsonl(cfg["auxiliary_path"])
    else:
        if len(victim_rows) < size:
            log.warning("only %d victim texts available for %d auxiliary slots", len(victim_rows), size)
        rows = victim_rows
    return rows[:size]


@dataclass
class TextResult:
    id: str
    original: str
    outcomes: list
    selection: SelectionResult


@dataclass
class RunResult:
    config: dict
    digest: str
    labels: np.ndarray
    primary: SubstituteModel
    ensemble: list
    results: list
    attack_ledger: QueryLedger
    eval_ledger: Optional[QueryLedger] = None
    report: Optional[AttackReport] = None
    victim_flips: dict = field(default_factory=dict)


def _attack_one(row, methods, primary, ensemble, constraints, sim_embedder) -> TextResult:
    text = as_text(row["text"])
    outcomes = run_methods(methods, primary, text, constraints, sim_embedder)
    cands = [c for c in outcomes if isinstance(c, AdversarialCandidate)
             and c.flipped_primary and c.similarity >= constraints.epsilon]
    sel = select_final(primary, ensemble, text, cands)
    return TextResult(row["id"], text.raw, outcomes, sel)


def run_attack(cfg: dict, write: bool = True) -> RunResult:
    seed = int(cfg["seed"])
    dig = config_digest(cfg)
    victim = make_victim(cfg["victim"])
    tasks = victim.declare_tasks()
    victim_rows = load_texts(cfg)
    aux_rows = load_auxiliary(cfg, victim_rows)
    budget = cfg["budget"] if cfg["budget"] is not None else len(aux_rows)
    ledger = QueryLedger(budget=int(budget), name="attack")

    # step 1: one victim query per auxiliary text, then joint representations
    aux_texts = [as_text(r["text"]) for r in aux_rows]
    responses = [query(victim, t, ledger) for t in aux_texts]
    corpus = aux_texts + [o for r in responses for o in r.texts]
    embedder = make_embedder(cfg["embedder"], corpus)
    joints = [build_joint(embedder, t, r) for t, r in zip(aux_texts, responses)]

    cl = cfg["clustering"]
    n_neighbors = min(int(cl["n_neighbors"]), len(joints) - 1)
    if n_neighbors < int(cl["n_neighbors"]):
        log.warning("n_neighbors reduced to %d for %d auxiliary texts", n_neighbors, len(joints))
    assignment = cluster(joints, cl["method"], int(cl["k"]), seed, n_neighbors)
    dataset = assign_deep_labels(assignment, aux_texts)

    # step 2: primary substitute on all pairs, ensemble on bootstrap samples
    primary = train(dataset, training_config(cfg, seed))
    ens_cfg = EnsembleConfig(int(cfg["ensemble"]["w"]), float(cfg["ensemble"]["sample_fraction"]), seed + 1)
    ensemble = train_ensemble(dataset, ens_cfg, training_config(cfg, seed))

    # step 3: candidates from the substitute only, then transferability selection
    a = cfg["attack"]
    constraints = AttackConstraints(float(a["epsilon"]), float(a["max_edit_ratio"]),
                                    int(a["max_substitute_evals"]))
    sim_embedder = make_embedder(cfg["similarity"], corpus)
    methods = list(a["methods"])
    work = lambda row: _attack_one(row, methods, primary, ensemble, constraints, sim_embedder)
    workers = int(cfg.get("workers", 1))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, victim_rows))
    else:
        results = [work(r) for r in victim_rows]

    run = RunResult(cfg, dig, assignment.labels, primary, ensemble, results, ledger)
    if cfg.get("evaluate", True):
        evaluate_run(run, victim, tasks)
    if write:
        write_artifacts(run, Path(cfg["output_dir"]))
    return run


def evaluate_run(run: RunResult, victim, tasks) -> AttackReport:
    """Query the victim on originals and every surviving candidate.

    Per-candidate victim outcomes feed the independence and transfer-rate
    analyses; the chosen candidates feed the report metrics.
    """
    eval_ledger = QueryLedger(name="evaluation")
    watched = [t.task_id for t in tasks if t.kind == "classification"] or [t.task_id for t in tasks]
    orig_resps, adv_resps, sims = [], [], []
    transfer: dict[int, list] = {}
    flips: dict[str, list] = {}
    for res in run.results:
        base = query(victim, res.original, eval_ledger)
        orig_resps.append(base)
        sel = res.selection
        chosen_resp = None
        for j, c in enumerate([c for c in res.outcomes if _is_candidate(c, run)]):
            resp = query(victim, c.text, eval_ledger)
            flipped = any(resp.get(t) != base.get(t) for t in watched)
            flips.setdefault(res.id, []).append((c.method_id, flipped))
            k = int(sel.scores[j])
            row = transfer.setdefault(k, [0, 0])
            row[0] += 1
            row[1] += int(flipped)
            if sel.h == j:
                chosen_resp = resp
        adv_resps.append(chosen_resp)
        sims.append(None if sel.chosen is None else sel.chosen.similarity)
    notes = {
        "substitute_architecture": "embedding -> dense(tanh) per token -> mean -> dense -> sigmoid",
        "bleu": "sentence BLEU-4, epsilon floor 1e-9, mean over texts",
        "rouge": "ROUGE-L F1",
    }
    report = build_report(tasks, orig_resps, adv_resps, sims, run.attack_ledger, eval_ledger,
                          run.digest, int(run.config["seed"]), notes)
    methods = list(run.config["attack"]["methods"])
    report.extra = {
        "methods": methods,
        "candidate_coverage": [sum(_is_candidate(c, run) for c in r.outcomes) for r in run.results],
        "cluster_sizes": np.bincount(run.labels, minlength=2).tolist(),
        "primary_train_mse": run.primary.train_mse,
        "analysis": {
            "transfer_rate": [{"k": k, "n": n, "victim_flips": f, "rate": f / n}
                              for k, (n, f) in sorted(transfer.items())],
        },
    }
    run.eval_ledger = eval_ledger
    run.report = report
    run.victim_flips = flips
    return report


def _is_candidate(c, run: RunResult) -> bool:
    eps = float(run.config["attack"]["epsilon"])
    return isinstance(c, AdversarialCandidate) and c.flipped_primary and c.similarity >= eps


def _outcome_dict(c, flipped_lookup) -> dict:
    if isinstance(c, NoFlip):
        return {"method_id": c.method_id, "status": "noflip", "reason": c.reason, "n_evals": c.n_evals}
    d = c.to_dict()
    d["status"] = "candidate"
    d["victim_flipped"] = flipped_lookup.get(c.method_id)
    return d


def write_artifacts(run: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    models = out / "models"
    models.mkdir(exist_ok=True)
    run.primary.save(models / "primary.json")
    for k, m in enumerate(run.ensemble):
        m.save(models / f"ensemble_{k}.json")
    stamp = {"config_digest": run.digest, "seed": int(run.config["seed"])}
    with (out / "candidates.jsonl").open("w", encoding="utf-8") as f:
        for r in run.results:
            lookup = {}
            for mid, fl in run.victim_flips.get(r.id, []):
                lookup[mid] = fl
            f.write(json.dumps({**stamp, "id": r.id, "original": r.original,
                                "outcomes": [_outcome_dict(c, lookup) for c in r.outcomes]},
                               ensure_ascii=False) + "\n")
    with (out / "selections.jsonl").open("w", encoding="utf-8") as f:
        for r in run.results:
            f.write(json.dumps({**stamp, "id": r.id, "original": r.original,
                                **r.selection.to_dict()}, ensure_ascii=False) + "\n")
    manifest = {**stamp, "schema_version": 1, "attack_total_queries": run.attack_ledger.total_queries,
                "config": run.config}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    if run.report is not None:
        d = run.report.to_dict()
        d["created_at"] = datetime.now(timezone.utc).isoformat()
        (out / "report.json").write_text(json.dumps(d, indent=2, sort_keys=True), encoding="utf-8")
        (out / "report.csv").write_text(run.report.to_csv(), encoding="utf-8")


def evaluate_selections(cfg: dict, selections_path) -> AttackReport:
    """Re-measure a stored attack on the victim (evaluation ledger only)."""
    dig = config_digest(cfg)
    path = Path(selections_path)
    rows = read_selection_rows(path)
    for r in rows:
        if r["config_digest"] != dig:
            raise ConfigError(f"selections digest {r['config_digest']} does not match config digest {dig}")
    victim = make_victim(cfg["victim"])
    tasks = victim.declare_tasks()
    eval_ledger = QueryLedger(name="evaluation")
    originals = [r["original"] for r in rows]
    chosen = [None if r["chosen"] is None else r["chosen"]["text"] for r in rows]
    orig_resps = [query(victim, o, eval_ledger) for o in originals]
    adv_resps = [None if c is None else query(victim, c, eval_ledger) for c in chosen]
    sims = [None if r["chosen"] is None else r["chosen"]["similarity"] for r in rows]
    attack_ledger = QueryLedger(name="attack")
    manifest = path.parent / "manifest.json"
    if manifest.exists():
        attack_ledger._total = int(json.loads(manifest.read_text())["attack_total_queries"])
    return build_report(tasks, orig_resps, adv_resps, sims, attack_ledger, eval_ledger, dig,
                        int(cfg["seed"]), {"source": str(path)})


def read_selection_rows(path: Path) -> list[dict]:
    required = {"config_digest", "seed", "id", "original", "chosen"}
    rows = []
    with path.open(encoding="utf-8") as f:
        for i, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{i}: invalid JSON") from exc
            if not isinstance(obj, dict) or not required <= set(obj):
                raise ConfigError(f"{path}:{i}: selection row misses {sorted(required - set(obj or {}))}")
            rows.append(obj)
    return rows


def ablation_config(cfg: dict, axis: str, value) -> dict:
    c = copy.deepcopy(cfg)
    if axis == "clusters":
        c["clustering"]["k"] = int(value)
    elif axis == "methods":
        try:
            c["attack"]["methods"] = METHOD_SETS[int(value)]
        except KeyError:
            raise ConfigError(f"methods axis takes {sorted(METHOD_SETS)}") from None
    elif axis == "embedder":
        c["embedder"] = {"backend": str(value), "dim": cfg["embedder"].get("dim", 256)}
    elif axis == "clustering":
        c["clustering"]["method"] = str(value)
    elif axis == "queries":
        c["auxiliary_size"] = int(value)
        c["budget"] = None
    else:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {list(ABLATION_AXES)}")
    return c


def run_ablation(cfg: dict, axis: str, values=None, write: bool = True) -> list[dict]:
    """Re-run the pipeline per axis value with shared seeds and data."""
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {list(ABLATION_AXES)}")
    values = list(values if values is not None else ABLATION_DEFAULTS[axis])
    base_out = Path(cfg["output_dir"])
    rows = []
    for v in values:
        c = ablation_config(cfg, axis, v)
        c["output_dir"] = str(base_out / f"{axis}={v}")
        c["evaluate"] = True
        run = run_attack(c, write=write)
        rep = run.report
        row = {"axis": axis, "value": v, "total_queries": rep.total_queries,
               "mean_asr": rep.mean_asr, "mean_similarity": rep.mean_similarity,
               "n_adversarial": rep.n_adversarial}
        for m in rep.task_metrics:
            row[f"{m['metric']}:{m['task_id']}"] = m["value"]
        rows.append(row)
    return rows
