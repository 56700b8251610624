"""Command line entry point: ``mtattack {attack,evaluate,verify,ablate,toy-data}``.

Exit codes: 0 success, 1 metrics below configured floors, 2 usage or
configuration error, 3 runtime failure.  Errors are printed to stderr as a
single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, plotting
from .config import load_config, parse_value
from .errors import AttackError, ConfigError
from .pipeline import ABLATION_AXES, evaluate_selections, run_ablation, run_attack
from .toy import toy_corpus, write_jsonl

log = logging.getLogger("mtattack")

EXIT_OK, EXIT_DEGRADED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = parse_value(v)
    for flag, key in (("seed", "seed"), ("output_dir", "output_dir"), ("victim_texts", "victim_texts_path"),
                      ("auxiliary", "auxiliary_path"), ("workers", "workers")):
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


def _config(args) -> dict:
    return load_config(args.config, _overrides(args))


def _write_csv(rows, path) -> None:
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _print_table(rows, cols) -> None:
    widths = [max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in cols]
    print("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
    for r in rows:
        print("  ".join(str(r.get(c, "")).ljust(w) for c, w in zip(cols, widths)))


def _fmt(v):
    return "" if v is None else f"{v:.4g}" if isinstance(v, float) else v


def _floors_ok(report, floors: dict) -> bool:
    ok = True
    if "asr" in floors and (report.mean_asr or 0.0) < float(floors["asr"]):
        ok = False
    bleus = [m["value"] for m in report.task_metrics if m["metric"] == "bleu"]
    if "bleu_max" in floors and bleus and sum(bleus) / len(bleus) > float(floors["bleu_max"]):
        ok = False
    return ok


def cmd_attack(args) -> int:
    cfg = _config(args)
    run = run_attack(cfg)
    out = Path(cfg["output_dir"])
    rep = run.report
    if rep is None:
        print(f"attack queries: {run.attack_ledger.total_queries}; artifacts in {out}")
        return EXIT_OK
    table = rep.extra["analysis"]["transfer_rate"]
    if table:
        plotting.plot_transfer_rate(table, out / "transfer_rate.png")
    _print_table([{"task": m["task_id"], "metric": m["metric"], "value": _fmt(m["value"])}
                  for m in rep.task_metrics], ["task", "metric", "value"])
    print(f"adversarial: {rep.n_adversarial}/{rep.n_texts}  mean sim: {_fmt(rep.mean_similarity)}  "
          f"attack queries: {rep.total_queries}  eval queries: {rep.eval_queries}")
    print(f"artifacts: {out}")
    return EXIT_OK if _floors_ok(rep, cfg["metric_floors"]) else EXIT_DEGRADED


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    path = Path(args.adversarials or Path(cfg["output_dir"]) / "selections.jsonl")
    if not path.exists():
        raise ConfigError(f"adversarials file {path} does not exist")
    rep = evaluate_selections(cfg, path)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "eval_report.csv").write_text(rep.to_csv(), encoding="utf-8")
    _print_table([{"task": m["task_id"], "metric": m["metric"], "value": _fmt(m["value"])}
                  for m in rep.task_metrics], ["task", "metric", "value"])
    return EXIT_OK if _floors_ok(rep, cfg["metric_floors"]) else EXIT_DEGRADED


def union_sweeps(vcfg: dict, trials: int, seed: int):
    """The default sweep plus random configurations, in both dependence modes."""
    probs = tuple(float(p) for p in vcfg["probs"])
    rho = float(vcfg["rho"])
    sweeps = [analysis.EventSimConfig(probs, trials, "independent", 0.0, seed),
              analysis.EventSimConfig(probs, trials, "shared-latent", rho, seed)]
    rng = np.random.default_rng(seed)
    for i in range(int(vcfg["random_configs"])):
        u = int(rng.integers(1, 6))
        ps = tuple(float(x) for x in rng.uniform(0.05, 0.6, size=u))
        for mode, r in (("independent", 0.0), ("shared-latent", rho)):
            sweeps.append(analysis.EventSimConfig(ps, trials, mode, r, seed + 1 + i))
    return [analysis.simulate_union_prob(c) for c in sweeps]


def independence_from_run(run_dir: Path) -> dict:
    ids, sets = [], {}
    with (run_dir / "candidates.jsonl").open(encoding="utf-8") as f:
        for line in f:
            row = json.loads(line)
            ids.append(row["id"])
            for o in row["outcomes"]:
                sets.setdefault(o["method_id"], set())
                if o.get("status") == "candidate" and o.get("victim_flipped"):
                    sets[o["method_id"]].add(row["id"])
    return analysis.independence_table(sets, ids)


def cmd_verify(args) -> int:
    cfg = _config(args)
    vcfg = dict(cfg["verify"])
    trials = int(float(args.trials)) if args.trials is not None else int(vcfg["trials"])
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ests = union_sweeps(vcfg, trials, int(cfg["seed"]))
    elapsed = time.perf_counter() - t0
    rows = []
    for i, e in enumerate(ests):
        d = e.to_dict()
        for u, p, s in zip(d["u"], d["estimates"], d["std_errors"]):
            cf = None if d["closed_form"] is None else d["closed_form"][u - 1]
            rows.append({"sweep": i, "dependence": d["dependence"], "rho": d["rho"], "u": u,
                         "estimate": p, "std_error": s, "closed_form": cf})
    monotone = [analysis.is_monotone(e) for e in ests]
    result = {"union_prob": [e.to_dict() for e in ests], "monotone": monotone,
              "all_monotone": all(monotone), "trials": trials}
    _write_csv(rows, out / "verify_union.csv")
    plotting.plot_union_prob(ests[:2], out / "union_prob.png")
    if args.run_dir:
        run_dir = Path(args.run_dir)
        if not (run_dir / "candidates.jsonl").exists():
            raise ConfigError(f"{run_dir} holds no candidates.jsonl")
        table = independence_from_run(run_dir)
        result["independence"] = table
        _write_csv(table["rows"], out / "independence.csv")
        report_path = run_dir / "report.json"
        if report_path.exists():
            rep = json.loads(report_path.read_text())
            rep.setdefault("analysis", {})
            rep["analysis"].update({"union_prob_default": [e.to_dict() for e in ests[:2]],
                                    "independence": table})
            report_path.write_text(json.dumps(rep, indent=2, sort_keys=True))
    (out / "verify.json").write_text(json.dumps(result, indent=2), encoding="utf-8")
    default = ests[0].to_dict()
    _print_table([{"u": u, "estimate": _fmt(p), "closed_form": _fmt(c)}
                  for u, p, c in zip(default["u"], default["estimates"], default["closed_form"])],
                 ["u", "estimate", "closed_form"])
    print(f"{len(ests)} sweeps, all monotone: {all(monotone)}  ({elapsed:.2f}s)")
    if "independence" in result:
        t = result["independence"]
        _print_table([{k: _fmt(v) for k, v in r.items()} for r in t["rows"]],
                     ["method_a", "method_b", "p_a", "p_b", "p_a_times_p_b", "p_ab", "deviation"])
        print(f"average deviation: {t['average_deviation']:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    if args.axis not in ABLATION_AXES:
        raise UsageError(f"unknown axis {args.axis!r}; choose from {list(ABLATION_AXES)}")
    values = None
    if args.values:
        values = [parse_value(v) for v in args.values.split(",")]
    rows = run_ablation(cfg, args.axis, values)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(rows, out / f"ablation_{args.axis}.csv")
    (out / f"ablation_{args.axis}.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    plotting.plot_ablation(rows, args.axis, out / f"ablation_{args.axis}.png")
    cols = list(rows[0]) if rows else []
    _print_table([{k: _fmt(v) for k, v in r.items()} for r in rows], cols)
    return EXIT_OK


def cmd_toy_data(args) -> int:
    rows = toy_corpus(args.n, args.seed)
    write_jsonl(rows, args.out)
    print(f"wrote {len(rows)} texts to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtattack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML/JSON config (default: $MTATTACK_CONFIG)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key, e.g. --set attack.epsilon=0.85")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--victim-texts", dest="victim_texts")
        sp.add_argument("--auxiliary")
        sp.add_argument("--workers", type=int)

    sp = sub.add_parser("attack", help="run the full attack pipeline")
    common(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("evaluate", help="re-measure stored adversarial examples on the victim")
    common(sp)
    sp.add_argument("--adversarials", help="selections.jsonl (default: <output_dir>/selections.jsonl)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("verify", help="union-probability sweeps and the independence table")
    common(sp)
    sp.add_argument("--trials", help="Monte Carlo trials per sweep (e.g. 1e5)")
    sp.add_argument("--run-dir", help="attack output directory for the independence table")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("ablate", help="rerun the pipeline along one axis")
    common(sp)
    sp.add_argument("--axis", required=True)
    sp.add_argument("--values", help="comma-separated axis values")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("toy-data", help="write the synthetic toy corpus as JSONL")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_toy_data)
    return p


def _error(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        return _error("usage", exc, EXIT_USAGE)
    except (AttackError, Exception) as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        return _error("runtime", exc, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
