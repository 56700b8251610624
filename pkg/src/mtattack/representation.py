"""Embedders and the joint input/output representation used for clustering."""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EmbedderUnavailable, EmptyText, ProtocolError
from .text import Text, as_text, lexical_embed, token_key
from .victims import VictimResponse


class HashedNgramEmbedder:
    """Default backend: hashed character 3-gram TF vectors."""

    def __init__(self, dim: int = 256):
        if dim < 64:
            raise ConfigError("hashed n-gram embedder needs dim >= 64")
        self.dim = dim

    @property
    def config(self) -> dict:
        return {"backend": "hashed-ngram", "dim": self.dim}

    def embed(self, text: Text) -> np.ndarray:
        return lexical_embed(text, self.dim)


class OneHotEmbedder:
    """Bag-of-words counts over a fixed vocabulary, L2-normalized.

    Texts with no in-vocabulary word map to the zero vector.
    """

    def __init__(self, vocab: Sequence[str]):
        keys = []
        for w in vocab:
            k = token_key(w)
            if k not in keys:
                keys.append(k)
        if not keys:
            raise ConfigError("one-hot embedder needs a non-empty vocabulary")
        self.vocab = keys
        self._index = {k: i for i, k in enumerate(keys)}
        self.dim = len(keys)

    @classmethod
    def from_texts(cls, texts) -> "OneHotEmbedder":
        vocab = sorted({token_key(w) for t in texts for w in as_text(t).words})
        return cls(vocab)

    @property
    def config(self) -> dict:
        return {"backend": "one-hot", "dim": self.dim, "vocab": self.vocab}

    def embed(self, text: Text) -> np.ndarray:
        v = np.zeros(self.dim)
        for w in text.words:
            i = self._index.get(token_key(w))
            if i is not None:
                v[i] += 1.0
        n = np.linalg.norm(v)
        return v / n if n > 0 else v


class RemoteEmbedder:
    """Encoder served over HTTP: POST ``{"texts": [...]}`` returns
    ``{"vectors": [[...], ...], "dim": d}``.

    The dimension is fixed by the first response (or by ``dim``) and every
    later response must agree.  Results are cached per normalized text.
    """

    def __init__(self, endpoint_url: str, dim: Optional[int] = None, timeout: float = 10.0,
                 max_in_flight: int = 4):
        self.endpoint_url = endpoint_url
        self.dim = dim
        self.timeout = timeout
        self.network_calls = 0
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    @property
    def config(self) -> dict:
        return {"backend": "remote", "url": self.endpoint_url, "dim": self.dim}

    def _post(self, texts: list[str]) -> dict:
        req = urllib.request.Request(
            self.endpoint_url, data=json.dumps({"texts": texts}).encode("utf-8"), method="POST")
        req.add_header("Content-Type", "application/json; charset=utf-8")
        with self._slots:
            self.network_calls += 1
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as r:
                    return json.loads(r.read().decode("utf-8"))
            except (urllib.error.URLError, OSError) as exc:
                raise EmbedderUnavailable(f"embed server {self.endpoint_url}: {exc}") from exc
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ProtocolError("embed server returned non-JSON") from exc

    def embed_many(self, texts: Sequence[Text]) -> list[np.ndarray]:
        texts = [as_text(t) for t in texts]
        missing = [t.raw for t in texts if t.raw not in self._cache]
        missing = list(dict.fromkeys(missing))
        if missing:
            body = self._post(missing)
            try:
                vectors = [np.asarray(v, dtype=float) for v in body["vectors"]]
                dim = int(body["dim"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed embed response: {body!r}") from exc
            if len(vectors) != len(missing):
                raise ProtocolError(f"asked for {len(missing)} vectors, got {len(vectors)}")
            with self._lock:
                if self.dim is None:
                    self.dim = dim
                if dim != self.dim or any(v.shape != (self.dim,) for v in vectors):
                    raise ProtocolError(f"embedding dim drifted from {self.dim}")
                if not all(np.all(np.isfinite(v)) for v in vectors):
                    raise ProtocolError("non-finite embedding values")
                for raw, v in zip(missing, vectors):
                    self._cache[raw] = v
        return [self._cache[t.raw] for t in texts]

    def embed(self, text: Text) -> np.ndarray:
        return self.embed_many([text])[0]


class CachedEmbedder:
    """Per-run cache keyed by normalized text in front of any backend."""

    def __init__(self, backend, cache_dim: Optional[int] = None):
        if cache_dim is not None and backend.dim is not None and cache_dim != backend.dim:
            raise ConfigError(f"cached dim {cache_dim} does not match configured dim {backend.dim}")
        self.backend = backend
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    @property
    def dim(self):
        return self.backend.dim

    @property
    def config(self) -> dict:
        return self.backend.config

    def embed(self, text: Text) -> np.ndarray:
        key = text.raw
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = self.backend.embed(text)
        with self._lock:
            self._cache.setdefault(key, v)
        return v


def embed(embedder, text) -> np.ndarray:
    v = np.asarray(embedder.embed(as_text(text)), dtype=float)
    if embedder.dim is not None and v.shape != (embedder.dim,):
        raise ConfigError(f"embedder returned shape {v.shape}, configured dim {embedder.dim}")
    return v


@dataclass(frozen=True)
class JointRepresentation:
    vector: np.ndarray
    n_tasks: int
    segment_dim: int

    def segment(self, i: int) -> np.ndarray:
        d = self.segment_dim
        return self.vector[i * d:(i + 1) * d]


def build_joint(embedder, text, response: VictimResponse) -> JointRepresentation:
    """Concatenate the input embedding with one embedding per task output,
    in the victim's task order."""
    if not response.outputs:
        raise ValueError("victim response has no outputs")
    segments = [embed(embedder, text)]
    for task_id, out in response.outputs:
        if not out.strip():
            raise EmptyText(f"empty output for task {task_id!r}")
        segments.append(embed(embedder, out))
    vec = np.concatenate(segments)
    return JointRepresentation(vec, len(response.outputs), segments[0].shape[0])
