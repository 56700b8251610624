"""Run configuration: a key/value tree loaded from YAML or JSON.

Schema (all keys optional, defaults shown)::

    seed: 0                      # master seed; every sub-seed derives from it
    victim: {builtin: two-task}  # or {url: http://host:port, timeout: 10, retries: 2}
    victim_texts_path: null      # JSONL {"id", "text"}; null -> toy corpus below
    toy_corpus: {n: 200, seed: 0}
    auxiliary_path: null         # JSONL; null -> first `auxiliary_size` victim texts
    auxiliary_size: 100
    budget: null                 # attack-ledger budget; null -> number of auxiliary texts
    embedder: {backend: hashed-ngram, dim: 256}      # or one-hot, or remote + url
    similarity: {backend: hashed-ngram, dim: 256}    # embedder for the epsilon check
    clustering: {method: spectral, k: 2, n_neighbors: 10}
    training: {lr: 0.006, batch_size: 64, epochs: 5, dropout: 0.4, ...}
    attack: {methods: [hotflip, fd, textbugger], epsilon: 0.8,
             max_edit_ratio: 0.25, max_substitute_evals: 2000}
    ensemble: {w: 6, sample_fraction: 0.8}
    evaluate: true
    metric_floors: {}            # e.g. {asr: 20.0, bleu_max: 0.9}; violation -> exit 1
    output_dir: runs/latest
    workers: 1

``output_dir`` and ``workers`` do not enter the config digest: they change
where and how fast a run happens, never what it computes.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

CONFIG_ENV_VAR = "MTATTACK_CONFIG"
DIGEST_EXCLUDED = ("output_dir", "workers")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "victim": {"builtin": "two-task"},
    "victim_texts_path": None,
    "toy_corpus": {"n": 200, "seed": 0},
    "auxiliary_path": None,
    "auxiliary_size": 100,
    "budget": None,
    "embedder": {"backend": "hashed-ngram", "dim": 256},
    "similarity": {"backend": "hashed-ngram", "dim": 256},
    "clustering": {"method": "spectral", "k": 2, "n_neighbors": 10},
    "training": {"lr": 6e-3, "batch_size": 64, "epochs": 5, "dropout": 0.4,
                 "weight_decay": 0.01, "embed_dim": 64, "hidden_dim": 128},
    "attack": {"methods": ["hotflip", "fd", "textbugger"], "epsilon": 0.8,
               "max_edit_ratio": 0.25, "max_substitute_evals": 2000},
    "ensemble": {"w": 6, "sample_fraction": 0.8},
    "evaluate": True,
    "metric_floors": {},
    "output_dir": "runs/latest",
    "workers": 1,
    "verify": {"probs": [0.3, 0.25, 0.2, 0.15, 0.1], "trials": 100_000, "rho": 0.9,
               "random_configs": 20},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict) and k not in ("victim", "embedder", "similarity", "metric_floors"):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(raw: str):
    """Interpret a ``--set`` value as YAML (numbers, lists, booleans)."""
    return yaml.safe_load(raw)


def apply_override(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    if keys[0] not in DEFAULTS:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> dict:
    """Defaults <- file (``path`` or $MTATTACK_CONFIG) <- dotted overrides."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    data: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {path} does not exist")
        text = p.read_text(encoding="utf-8")
        data = json.loads(text) if p.suffix == ".json" else (yaml.safe_load(text) or {})
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    cfg = _merge(DEFAULTS, data)
    for k, v in (overrides or {}).items():
        apply_override(cfg, k, v)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    v = cfg["victim"]
    if not isinstance(v, dict) or not ("builtin" in v or "url" in v):
        raise ConfigError("victim must name a builtin victim or a url")
    a = cfg["attack"]
    if not 0 < float(a["epsilon"]) <= 1:
        raise ConfigError("attack.epsilon must lie in (0, 1]")
    if not a["methods"]:
        raise ConfigError("attack.methods must not be empty")
    if int(cfg["auxiliary_size"]) < 1:
        raise ConfigError("auxiliary_size must be positive")
    if int(cfg["ensemble"]["w"]) < 1:
        raise ConfigError("ensemble.w must be >= 1")
    for key in ("victim_texts_path", "auxiliary_path"):
        if cfg[key] is not None and not Path(cfg[key]).exists():
            raise ConfigError(f"{key} {cfg[key]} does not exist")


def digest(cfg: dict) -> str:
    core = {k: v for k, v in cfg.items() if k not in DIGEST_EXCLUDED}
    blob = json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
