"""Small differentiable binary classifier trained on cluster labels.

Architecture: token embedding -> dense(tanh) per token -> mean over tokens
-> dense -> sigmoid.  Pooling after the hidden layer keeps per-position input
gradients distinct, which the gradient-guided attacks rank on.  The loss is
squared error between the label and the sigmoid probability.

Everything is float64 numpy with explicit backprop, so a trained model is a
pure function of (data, config, seed).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidDataset
from .text import Text, as_text, token_key

OOV = "<oov>"
FORMAT = "mtattack.substitute"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 6e-3
    batch_size: int = 64
    epochs: int = 5
    dropout: float = 0.4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    embed_dim: int = 64
    hidden_dim: int = 128
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size >= 1 and epochs >= 0 required")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


class SubstituteModel:
    """Parameters: ``E`` (vocab x e), ``W1`` (e x h), ``b1``, ``w2`` (h), ``b2``.

    Row 0 of ``E`` is the OOV embedding; it starts at zero and receives
    gradient only if training text maps to it.
    """

    PARAMS = ("E", "W1", "b1", "w2", "b2")

    def __init__(self, vocab: dict, E, W1, b1, w2, b2, config: TrainingConfig = TrainingConfig()):
        self.vocab = dict(vocab)
        self.E = np.asarray(E, dtype=float)
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.array(b2, dtype=float).reshape(())
        self.config = config
        self.train_mse: Optional[float] = None
        self.n_forward = 0
        self.id_to_token = [None] * len(self.vocab)
        for tok, i in self.vocab.items():
            self.id_to_token[i] = tok

    @classmethod
    def initialize(cls, vocab: dict, cfg: TrainingConfig, rng: np.random.Generator) -> "SubstituteModel":
        e, h = cfg.embed_dim, cfg.hidden_dim
        E = rng.normal(0.0, cfg.init_scale, size=(len(vocab), e))
        E[vocab[OOV]] = 0.0
        W1 = rng.normal(0.0, 1.0 / math.sqrt(e), size=(e, h))
        return cls(vocab, E, W1, np.zeros(h), np.zeros(h), 0.0, cfg)

    # -- lookup ---------------------------------------------------------
    def token_id(self, surface: str) -> int:
        return self.vocab.get(token_key(surface), self.vocab[OOV])

    def ids(self, text) -> np.ndarray:
        return np.array([self.token_id(w) for w in as_text(text).words], dtype=int)

    @property
    def words(self) -> list[str]:
        """In-vocabulary words (OOV excluded), in id order."""
        return [t for t in self.id_to_token if t != OOV]

    # -- forward / backward ---------------------------------------------
    def _forward(self, X: np.ndarray, mask: Optional[np.ndarray] = None):
        H = np.tanh(X @ self.W1 + self.b1)
        m = H.mean(axis=0)
        md = m if mask is None else m * mask
        z = float(md @ self.w2 + self.b2)
        return H, m, md, z, _sigmoid(z)

    def proba_from_embeddings(self, X: np.ndarray) -> float:
        self.n_forward += 1
        return self._forward(X)[-1]

    def predict_proba(self, text) -> float:
        """Probability of label 1 on the deterministic inference path."""
        return self.proba_from_embeddings(self.E[self.ids(text)])

    def predict(self, text) -> int:
        return int(self.predict_proba(text) >= 0.5)

    def loss(self, text, target: int) -> float:
        return (target - self.predict_proba(text)) ** 2

    def _backward(self, ids, X, y, mask=None):
        """Squared-error loss and its gradients for one example."""
        H, m, md, z, p = self._forward(X, mask)
        loss = (y - p) ** 2
        g = -2.0 * (y - p) * p * (1.0 - p)
        dw2 = g * md
        db2 = g
        dm = g * self.w2 if mask is None else g * self.w2 * mask
        dZ = (dm / len(ids))[None, :] * (1.0 - H ** 2)
        dW1 = X.T @ dZ
        db1 = dZ.sum(axis=0)
        dX = dZ @ self.W1.T
        return loss, p, {"dX": dX, "W1": dW1, "b1": db1, "w2": dw2, "b2": db2}

    def input_gradient(self, text, target: Optional[int] = None) -> np.ndarray:
        """d loss / d embedding, one row per token position.

        ``target`` defaults to the model's own predicted label, so the
        gradient points in the label-flipping direction.
        """
        ids = self.ids(text)
        X = self.E[ids]
        if target is None:
            target = int(self._forward(X)[-1] >= 0.5)
        self.n_forward += 1
        return self._backward(ids, X, target)[2]["dX"]

    def loss_delta_estimate(self, text, token_index: int, replacement: str,
                            grad: Optional[np.ndarray] = None) -> float:
        """First-order estimate of the loss change from swapping one token."""
        text = as_text(text)
        if grad is None:
            grad = self.input_gradient(text)
        old = self.token_id(text.words[token_index])
        new = self.token_id(replacement)
        return float(grad[token_index] @ (self.E[new] - self.E[old]))

    # -- persistence ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "vocab": self.id_to_token,
            "shapes": {k: list(np.shape(getattr(self, k))) for k in self.PARAMS},
            "params": {k: np.asarray(getattr(self, k)).ravel().tolist() for k in self.PARAMS},
            "training_config": asdict(self.config),
            "training_config_digest": self.config.digest(),
            "train_mse": self.train_mse,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubstituteModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model container {d.get('format')}/{d.get('version')}")
        cfg = TrainingConfig(**d["training_config"])
        if cfg.digest() != d["training_config_digest"]:
            raise ConfigError("training config digest mismatch")
        vocab = {tok: i for i, tok in enumerate(d["vocab"])}
        params = {k: np.asarray(d["params"][k], dtype=float).reshape(d["shapes"][k])
                  for k in cls.PARAMS}
        m = cls(vocab, config=cfg, **params)
        m.train_mse = d.get("train_mse")
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SubstituteModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_vocab(texts: Sequence[Text]) -> dict:
    vocab = {OOV: 0}
    for t in texts:
        for w in t.words:
            vocab.setdefault(token_key(w), len(vocab))
    return vocab


class _AdamW:
    def __init__(self, params: dict, cfg: TrainingConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1 - c.beta1 ** self.t
        bc2 = 1 - c.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)
            p -= c.lr * (update + c.weight_decay * p)


def fit(dataset: Sequence, cfg: TrainingConfig = TrainingConfig()) -> SubstituteModel:
    """Train without the dataset-size precondition (used by ensemble members)."""
    texts = [as_text(t) for t, _ in dataset]
    labels = np.array([int(y) for _, y in dataset], dtype=float)
    if len(set(labels.tolist())) < 2:
        raise InvalidDataset("training data contains a single label")
    rng = np.random.default_rng(cfg.seed)
    model = SubstituteModel.initialize(build_vocab(texts), cfg, rng)
    all_ids = [model.ids(t) for t in texts]
    params = {k: getattr(model, k) for k in model.PARAMS}
    opt = _AdamW(params, cfg)
    n = len(texts)
    keep = 1.0 - cfg.dropout
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            for i in batch:
                ids = all_ids[i]
                mask = (rng.random(cfg.hidden_dim) < keep) / keep if cfg.dropout > 0 else None
                _, _, g = model._backward(ids, model.E[ids], labels[i], mask)
                np.add.at(grads["E"], ids, g["dX"])
                grads["W1"] += g["W1"]
                grads["b1"] += g["b1"]
                grads["w2"] += g["w2"]
                grads["b2"] += g["b2"]
            for k in grads:
                grads[k] /= len(batch)
            opt.step(params, grads)
    model.train_mse = float(np.mean([(labels[i] - model.proba_from_embeddings(model.E[all_ids[i]])) ** 2
                                     for i in range(n)]))
    model.n_forward = 0
    return model


def train(dataset: Sequence, cfg: TrainingConfig = TrainingConfig()) -> SubstituteModel:
    """Fit a substitute on (text, cluster label) pairs; needs >= 10 pairs
    and both labels."""
    if len(dataset) < 10:
        raise InvalidDataset(f"need at least 10 labelled texts, got {len(dataset)}")
    return fit(dataset, cfg)


def predict_proba(model: SubstituteModel, text) -> float:
    return model.predict_proba(text)


def input_gradient(model: SubstituteModel, text) -> np.ndarray:
    return model.input_gradient(text)


def loss_delta_estimate(model: SubstituteModel, text, token_index: int, replacement: str) -> float:
    return model.loss_delta_estimate(text, token_index, replacement)
