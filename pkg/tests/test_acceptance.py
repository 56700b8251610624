"""Acceptance gate: twelve end-to-end criteria, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines show up in the
terminal output) or directly with ``python3 tests/test_acceptance.py``.
Thresholds here are the gate; a criterion that misses them fails.
"""

import json
import math
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import marker_corpus  # noqa: E402
from synthetic import blobs, brute_force_select, gradient_check, purity, rings, selection_fixture  # noqa: E402

from mtattack.analysis import EventSimConfig, independence_table, is_monotone, simulate_union_prob  # noqa: E402
from mtattack.cli import main  # noqa: E402
from mtattack.clustering import kmeans_binary, spectral_binary  # noqa: E402
from mtattack.config import load_config  # noqa: E402
from mtattack.ensemble import select_final  # noqa: E402
from mtattack.metrics import bleu  # noqa: E402
from mtattack.pipeline import make_embedder, run_attack  # noqa: E402
from mtattack.representation import embed  # noqa: E402
from mtattack.substitute import TrainingConfig, train  # noqa: E402
from mtattack.text import cosine_similarity  # noqa: E402

SEED = 7


@lru_cache(maxsize=None)
def toy_run(methods=("hotflip", "fd", "textbugger"), w=6, k=2, evaluate=True):
    """Seeded 200-text toy run with 100 auxiliary texts, cached per setting."""
    cfg = load_config(overrides={"seed": SEED, "attack.methods": list(methods), "ensemble.w": w,
                                 "clustering.k": k, "evaluate": evaluate})
    return run_attack(cfg, write=False)


def report(number, ok, detail):
    line = f"[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}"
    capman = _capture_manager[0]
    if capman is not None:
        with capman.global_and_fixture_disabled():
            print(line)
    else:
        print(line)
    assert ok, line


_capture_manager = [None]


@pytest.fixture(autouse=True)
def _terminal(request):
    _capture_manager[0] = request.config.pluginmanager.getplugin("capturemanager")
    yield


def test_01_union_probability_monotone():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad, n = [], 0
    for i in range(20):
        u = int(rng.integers(1, 6))
        probs = tuple(float(p) for p in rng.uniform(0.05, 0.6, size=u))
        for mode, rho in (("independent", 0.0), ("shared-latent", 0.9)):
            est = simulate_union_prob(EventSimConfig(probs, 100_000, mode, rho, seed=i))
            n += 1
            if not is_monotone(est, n_se=2.0):
                bad.append((i, mode))
    elapsed = time.perf_counter() - t0
    report(1, not bad and elapsed < 10,
           f"{n - len(bad)}/{n} sweeps monotone within 2 SE, {elapsed:.2f}s (limit 10s)")


def test_02_independence_table():
    rng = np.random.default_rng(11)
    sets = {f"m{i}": set(np.flatnonzero(rng.random(2000) < 0.5).tolist()) for i in range(5)}
    t = independence_table(sets, range(2000))
    avg = t["average_abs_deviation"]
    report(2, len(t["rows"]) == 10 and avg < 0.03, f"mean |P(A)P(B)-P(AB)| = {avg:.4f} over {len(t['rows'])} pairs (< 0.03)")


def test_03_query_budget():
    totals = {}
    for methods in (("textbugger",), ("hotflip", "fd", "textbugger")):
        for w in (1, 6):
            run = toy_run(methods, w) if (len(methods) == 3 and w == 6) else toy_run(methods, w, evaluate=False)
            totals[(len(methods), w)] = run.attack_ledger.total_queries
    ok = all(v == 100 for v in totals.values())
    report(3, ok, "attack-ledger totals " + ", ".join(f"l={l},w={w}: {v}" for (l, w), v in sorted(totals.items())))


def test_04_similarity_constraint():
    run = toy_run()
    sim_embedder = make_embedder(run.config["similarity"])
    chosen = [(r.original, r.selection.chosen) for r in run.results if r.selection.chosen is not None]
    violations = [c for o, c in chosen
                  if cosine_similarity(embed(sim_embedder, o), embed(sim_embedder, c.text)) < 0.8]
    report(4, bool(chosen) and not violations,
           f"{len(chosen)} selected examples over {len(run.results)} texts, {len(violations)} below 0.8")


def test_05_method_count_trend():
    full, single = toy_run(), toy_run(("textbugger",))
    asr_full, asr_single = full.report.mean_asr, single.report.mean_asr
    u_full = {r.id: len(r.selection.scores) for r in full.results}
    u_single = {r.id: len(r.selection.scores) for r in single.results}
    pointwise = all(u_full[i] >= u_single[i] for i in u_single)
    report(5, asr_full >= asr_single and pointwise,
           f"ASR 3 methods {asr_full:.1f}% vs textbugger {asr_single:.1f}% (delta {asr_full - asr_single:+.1f}), "
           f"coverage pointwise >= : {pointwise}")


def test_06_cluster_count_trend():
    asr = {k: toy_run(k=k).report.mean_asr for k in (2, 3, 4)}
    ok = asr[2] >= max(asr[3], asr[4]) - 5.0
    report(6, ok, "ASR by k: " + ", ".join(f"k={k}: {v:.1f}%" for k, v in asr.items()) + " (k=2 within 5 pts of best)")


def test_07_selection_matches_oracle():
    mismatches = 0
    for seed in range(100):
        primary, models, original, cands = selection_fixture(seed)
        got = select_final(primary, models, original, cands).h
        again = select_final(primary, models, original, cands).h
        mismatches += got != brute_force_select(primary, models, original, cands) or got != again
    report(7, mismatches == 0, f"{100 - mismatches}/100 fixtures match the exhaustive argmax")


def test_08_gradients():
    data = marker_corpus()
    model = train(data, TrainingConfig(seed=0))
    errors = gradient_check(model, [t for t, _ in data], n_probes=100, seed=8)
    report(8, errors.max() < 1e-3, f"max relative error {errors.max():.2e} over 100 probes (< 1e-3)")


BLEU_FIXTURES = [
    ("the cat sat on the mat", "the cat sat on mat", (1 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25 * math.exp(1 - 6 / 5)),
    ("a b c d e f", "a b c d e f", 1.0),
    ("a b c d e f g h", "a b c d", math.exp(1 - 8 / 4)),
    ("the the the the", "the the the the the the the", (4 / 7 * 3 / 6 * 2 / 5 * 1 / 4) ** 0.25),
    ("a b c d e", "a x c d e", (4 / 5 * 2 / 4 * 1 / 3 * 1e-9) ** 0.25),
]


def test_09_bleu_oracle():
    errs = [abs(bleu(r, h) - v) for r, h, v in BLEU_FIXTURES]
    ten = "one two three four five six seven eight nine ten"
    ident, disjoint = bleu(ten, ten), bleu(ten, "alpha beta gamma delta epsilon zeta")
    ok = max(errs) <= 1e-6 and ident == 1.0 and disjoint <= 1e-6
    report(9, ok, f"max fixture error {max(errs):.1e}, identical {ident}, disjoint {disjoint:.1e}")


def test_10_clustering_quality():
    Xb, tb = blobs(seed=0)
    Xr, tr = rings(seed=0)
    km_blobs = purity(kmeans_binary(Xb, seed=0).labels, tb)
    sp_rings = purity(spectral_binary(Xr, seed=0).labels, tr)
    km_rings = purity(kmeans_binary(Xr, seed=0).labels, tr)
    ok = km_blobs >= 0.99 and sp_rings >= 0.95 and km_rings <= 0.7
    report(10, ok, f"k-means blobs {km_blobs:.3f} (>= 0.99), spectral rings {sp_rings:.3f} (>= 0.95), "
                   f"k-means rings {km_rings:.3f} (<= 0.7)")


def test_11_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["attack", "--seed", str(SEED), "--output-dir", str(d)]) for d in dirs]
    same = {}
    for name in ("candidates.jsonl", "selections.jsonl", "report.csv"):
        same[name] = (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    reps = [json.loads((d / "report.json").read_text()) for d in dirs]
    for r in reps:
        r.pop("created_at")
    same["report.json"] = reps[0] == reps[1]
    report(11, codes == [0, 0] and all(same.values()),
           "identical: " + ", ".join(f"{k}={v}" for k, v in same.items()))


def test_12_query_scaling(tmp_path):
    good = total = 0
    per_seed = {}
    for seed in (0, 1, 2):
        out = tmp_path / f"seed{seed}"
        assert main(["ablate", "--axis", "queries", "--values", "10,50,100", "--seed", str(seed),
                     "--output-dir", str(out)]) == 0
        rows = json.loads((out / "ablation_queries.json").read_text())
        asr = [r["mean_asr"] for r in rows]
        per_seed[seed] = asr
        for a, b in zip(asr, asr[1:]):
            total += 1
            good += b >= a
    ok = good * 3 >= total * 2
    report(12, ok, f"{good}/{total} adjacent comparisons non-decreasing (need >= 2/3); ASR at 10/50/100: "
                   + "; ".join(f"seed {s}: " + "/".join(f"{v:.1f}" for v in a) for s, a in per_seed.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
