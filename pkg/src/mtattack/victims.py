"""Black-box multi-task victims and strict query accounting.

A victim answers one text with one output per declared task.  One call to
:func:`query` is one query no matter how many tasks the victim runs.
"""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import BudgetExceeded, InvalidVictimConfig, ProtocolError, VictimUnavailable
from .text import Text, as_text, token_key

TASK_KINDS = ("classification", "translation", "summarization")


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    kind: str
    label_space: tuple[str, ...] = ()
    notes: str = ""

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise InvalidVictimConfig(f"unknown task kind {self.kind!r}")
        if self.kind == "classification" and not self.label_space:
            raise InvalidVictimConfig(f"classification task {self.task_id!r} needs labels")


@dataclass(frozen=True)
class VictimResponse:
    outputs: tuple[tuple[str, str], ...]

    def get(self, task_id: str) -> str:
        for tid, out in self.outputs:
            if tid == task_id:
                return out
        raise KeyError(task_id)

    @property
    def texts(self) -> list[str]:
        return [out for _, out in self.outputs]

    def to_dict(self) -> dict:
        return {tid: out for tid, out in self.outputs}


class QueryLedger:
    """Thread-safe victim query counter with an optional hard budget.

    A slot is reserved before transmission and committed afterwards, so the
    budget check happens before anything leaves the process and transport
    failures never count.
    """

    def __init__(self, budget: Optional[int] = None, name: str = "attack"):
        self.budget = budget
        self.name = name
        self._total = 0
        self._pending = 0
        self._lock = threading.Lock()

    @property
    def total_queries(self) -> int:
        return self._total

    def reserve(self) -> None:
        with self._lock:
            if self.budget is not None and self._total + self._pending >= self.budget:
                raise BudgetExceeded(
                    f"{self.name} ledger budget {self.budget} exhausted"
                )
            self._pending += 1

    def commit(self) -> None:
        with self._lock:
            self._pending -= 1
            self._total += 1

    def release(self) -> None:
        with self._lock:
            self._pending -= 1

    def __repr__(self):
        return f"QueryLedger(name={self.name!r}, total={self._total}, budget={self.budget})"


class Victim:
    """Interface: ``declare_tasks()`` and ``respond(text)``."""

    def declare_tasks(self) -> list[TaskSpec]:
        raise NotImplementedError

    def respond(self, text: Text) -> VictimResponse:
        raise NotImplementedError


def declare_tasks(victim: Victim) -> list[TaskSpec]:
    return victim.declare_tasks()


def query(victim: Victim, text, ledger: QueryLedger) -> VictimResponse:
    text = as_text(text)
    ledger.reserve()
    try:
        resp = victim.respond(text)
    except BaseException:
        ledger.release()
        raise
    ledger.commit()
    return resp


# -- built-in toy tasks ------------------------------------------------------

class LexiconClassifier:
    """Label = argmax over labels of lexicon hits; earlier labels win ties."""

    def __init__(self, lexicon: dict, default_label: str):
        if not lexicon or not any(lexicon.values()):
            raise InvalidVictimConfig("lexicon must map at least one label to words")
        self.labels = list(lexicon)
        self.lexicon = {lab: frozenset(token_key(w) for w in words) for lab, words in lexicon.items()}
        self.default_label = default_label

    @property
    def label_space(self) -> tuple[str, ...]:
        labs = list(self.labels)
        if self.default_label not in labs:
            labs.append(self.default_label)
        return tuple(labs)

    def __call__(self, text: Text) -> str:
        keys = [token_key(w) for w in text.words]
        best, best_hits = self.default_label, 0
        for lab in self.labels:
            hits = sum(k in self.lexicon[lab] for k in keys)
            if hits > best_hits:
                best, best_hits = lab, hits
        return best


class DictionaryTranslator:
    """Word-for-word translation; unknown words pass through unchanged."""

    def __init__(self, dictionary: dict):
        self.dictionary = {token_key(k): v for k, v in dictionary.items()}

    def __call__(self, text: Text) -> str:
        return " ".join(self.dictionary.get(token_key(w), w) for w in text.words)


def builtin_lexicon_classifier(lexicon: dict, default_label: str = "neutral") -> LexiconClassifier:
    return LexiconClassifier(lexicon, default_label)


def builtin_dictionary_translator(dictionary: dict) -> DictionaryTranslator:
    return DictionaryTranslator(dictionary)


class ToyVictim(Victim):
    """A multi-task victim assembled from pure per-task functions."""

    def __init__(self, tasks: Sequence[tuple[TaskSpec, Callable[[Text], str]]]):
        ids = [spec.task_id for spec, _ in tasks]
        if not ids:
            raise InvalidVictimConfig("a victim needs at least one task")
        if len(set(ids)) != len(ids):
            raise InvalidVictimConfig(f"duplicate task ids in {ids}")
        self._tasks = list(tasks)

    def declare_tasks(self) -> list[TaskSpec]:
        return [spec for spec, _ in self._tasks]

    def respond(self, text: Text) -> VictimResponse:
        return VictimResponse(tuple((spec.task_id, fn(text)) for spec, fn in self._tasks))


# -- remote victims ------------------------------------------------------------

@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 2
    backoff: float = 0.0


def _http_json(url: str, payload: Optional[dict], timeout: float) -> dict:
    data = None if payload is None else json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="GET" if data is None else "POST")
    req.add_header("Content-Type", "application/json; charset=utf-8")
    with urllib.request.urlopen(req, timeout=timeout) as r:
        body = r.read()
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"non-JSON response from {url}") from exc


class RemoteVictim(Victim):
    """Victim behind the JSON-over-HTTP wire protocol.

    ``GET {url}/tasks`` declares tasks and ``POST {url}/query`` with
    ``{"text": ...}`` answers ``{"outputs": [{"task_id", "text"}, ...]}``.
    """

    def __init__(self, endpoint_url: str, timeout: float = 10.0,
                 retry_policy: RetryPolicy = RetryPolicy(), max_in_flight: int = 4):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.timeout = timeout
        self.retry_policy = retry_policy
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._tasks: Optional[list[TaskSpec]] = None

    def _call(self, path: str, payload: Optional[dict]) -> dict:
        url = self.endpoint_url + path
        attempts = self.retry_policy.retries + 1
        last = None
        with self._slots:
            for i in range(attempts):
                try:
                    return _http_json(url, payload, self.timeout)
                except ProtocolError:
                    raise
                except (urllib.error.URLError, OSError, TimeoutError) as exc:
                    last = exc
                    if i + 1 < attempts and self.retry_policy.backoff:
                        time.sleep(self.retry_policy.backoff * (2 ** i))
        raise VictimUnavailable(f"{url} failed after {attempts} attempts: {last}")

    def declare_tasks(self) -> list[TaskSpec]:
        if self._tasks is None:
            body = self._call("/tasks", None)
            try:
                tasks = [TaskSpec(t["task_id"], t["kind"], tuple(t.get("labels") or ()))
                         for t in body["tasks"]]
            except (KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed task declaration: {body!r}") from exc
            if not tasks:
                raise VictimUnavailable("remote victim declares zero tasks")
            self._tasks = tasks
        return list(self._tasks)

    def respond(self, text: Text) -> VictimResponse:
        tasks = self.declare_tasks()
        body = self._call("/query", {"text": text.raw})
        try:
            outs = [(o["task_id"], o["text"]) for o in body["outputs"]]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed response: {body!r}") from exc
        expected = [t.task_id for t in tasks]
        if [tid for tid, _ in outs] != expected:
            raise ProtocolError(f"expected outputs for {expected}, got {[t for t, _ in outs]}")
        if not all(isinstance(o, str) and o.strip() for _, o in outs):
            raise ProtocolError("empty output text in response")
        return VictimResponse(tuple(outs))


def remote_victim_adapter(endpoint_url: str, timeout: float = 10.0,
                          retry_policy: RetryPolicy = RetryPolicy(), max_in_flight: int = 4) -> RemoteVictim:
    return RemoteVictim(endpoint_url, timeout, retry_policy, max_in_flight)
