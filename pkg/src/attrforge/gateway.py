"""Boundary to model-backed capabilities.

Three capabilities sit behind abstract interfaces: text generation, sequence
log-probability scoring, and NLI entailment. Each has an HTTP JSON client
(:class:`HttpBackend`) and a deterministic in-process mock.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import threading
import time
import urllib.error
import urllib.request
import uuid
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

from .text import content_words

logger = logging.getLogger(__name__)

ROLES = ("generator", "policy_scorer", "reference_scorer", "judge")
DEFAULT_MAX_PREMISE_CHARS = 6000
DEFAULT_JUDGE_THRESHOLD = 0.5

T = TypeVar("T")
R = TypeVar("R")


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    """Connection-level failure; safe to retry."""


class BackendError(GatewayError):
    """The backend answered with an error. Not retried."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    n_samples: int = 1
    temperature: float = 1.0
    top_p: float = 0.95
    max_tokens: int = 512
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class LogprobRequest:
    context: str
    continuation: str

    def __post_init__(self) -> None:
        if not self.continuation.strip():
            raise ValueError("continuation must be non-empty")


@dataclass(frozen=True)
class LogprobResult:
    logprob_sum: float
    token_count: int

    def __post_init__(self) -> None:
        if self.logprob_sum > 0:
            raise ValueError(f"log-probability must be <= 0, got {self.logprob_sum}")
        if self.token_count < 1:
            raise ValueError("token_count must be >= 1")


@dataclass(frozen=True)
class EntailmentVerdict:
    entailed: bool
    score: float


class Generator(ABC):
    def generate(self, req: GenerationRequest) -> list[str]:
        texts = self._generate(req)
        if len(texts) != req.n_samples:
            raise BackendError(f"asked for {req.n_samples} samples, backend returned {len(texts)}")
        return texts

    @abstractmethod
    def _generate(self, req: GenerationRequest) -> list[str]: ...


class Scorer(ABC):
    def logprob(self, req: LogprobRequest) -> LogprobResult:
        return self._logprob(req)

    @abstractmethod
    def _logprob(self, req: LogprobRequest) -> LogprobResult: ...


class Judge(ABC):
    threshold: float = DEFAULT_JUDGE_THRESHOLD
    max_premise_chars: int = DEFAULT_MAX_PREMISE_CHARS

    def truncate(self, premise: str) -> str:
        return premise[: self.max_premise_chars]

    def entail(self, premise: str, hypothesis: str) -> EntailmentVerdict:
        if not premise.strip():
            raise ValueError("premise must be non-empty")
        if not hypothesis.strip():
            raise ValueError("hypothesis must be non-empty")
        score = float(self._score(self.truncate(premise), hypothesis))
        return EntailmentVerdict(entailed=score >= self.threshold, score=score)

    @abstractmethod
    def _score(self, premise: str, hypothesis: str) -> float: ...


def retry(fn: Callable[[], T], attempts: int = 3, backoff: float = 0.2) -> T:
    """Call ``fn``, retrying only on :class:`TransportError` with exponential backoff."""
    for i in range(attempts):
        try:
            return fn()
        except TransportError as e:
            if i == attempts - 1:
                raise
            delay = backoff * (2**i)
            logger.warning("transport failure (%s); retry %d/%d in %.2fs", e, i + 1, attempts - 1, delay)
            time.sleep(delay)
    raise AssertionError("unreachable")


class HttpBackend(Generator, Scorer, Judge):
    """JSON-over-HTTP client for one backend role."""

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 0.2,
        threshold: float = DEFAULT_JUDGE_THRESHOLD,
        max_premise_chars: int = DEFAULT_MAX_PREMISE_CHARS,
    ):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.threshold = threshold
        self.max_premise_chars = max_premise_chars

    def __repr__(self) -> str:
        return f"HttpBackend({self.base_url!r})"

    def _post_once(self, path: str, payload: dict, request_id: str) -> dict:
        body = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json", "X-Request-Id": request_id}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.base_url + path, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as e:
            try:
                msg = json.loads(e.read().decode("utf-8")).get("error", str(e))
            except (ValueError, AttributeError):
                msg = str(e)
            raise BackendError(msg, status=e.code) from e
        except (urllib.error.URLError, ConnectionError, TimeoutError, OSError) as e:
            raise TransportError(f"{self.base_url}{path}: {e}") from e
        except ValueError as e:
            raise BackendError(f"malformed JSON from {path}: {e}") from e
        return data

    def _post(self, path: str, payload: dict) -> dict:
        request_id = uuid.uuid4().hex
        return retry(lambda: self._post_once(path, payload, request_id), self.attempts, self.backoff)

    def _generate(self, req: GenerationRequest) -> list[str]:
        payload = {
            "prompt": req.prompt,
            "n": req.n_samples,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            payload["seed"] = req.seed
        data = self._post("/v1/generate", payload)
        try:
            return [str(t) for t in data["texts"]]
        except (KeyError, TypeError) as e:
            raise BackendError(f"bad /v1/generate response: {data!r}") from e

    def _logprob(self, req: LogprobRequest) -> LogprobResult:
        data = self._post("/v1/logprob", {"context": req.context, "continuation": req.continuation})
        try:
            return LogprobResult(float(data["logprob_sum"]), int(data["token_count"]))
        except (KeyError, TypeError, ValueError) as e:
            raise BackendError(f"bad /v1/logprob response: {data!r}") from e

    def _score(self, premise: str, hypothesis: str) -> float:
        data = self._post("/v1/entail", {"premise": premise, "hypothesis": hypothesis})
        try:
            return float(data["score"])
        except (KeyError, TypeError, ValueError) as e:
            raise BackendError(f"bad /v1/entail response: {data!r}") from e


# --------------------------------------------------------------------------
# mocks


def _digest(*parts: object) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


Responder = Callable[[str, random.Random], str]


class MockGenerator(Generator):
    """Deterministic generator.

    Prompts found in ``table`` (keyed by the prompt text or its sha256) return
    their canned texts, cycled to ``n_samples``. Anything else goes to
    ``responder(prompt, rng)`` with one rng per sample, seeded from
    ``(salt, request seed, sample index, prompt)``.
    """

    def __init__(
        self,
        table: Mapping[str, Sequence[str]] | None = None,
        responder: Responder | None = None,
        salt: str = "",
    ):
        self.table = dict(table or {})
        self.responder = responder
        self.salt = salt

    def _generate(self, req: GenerationRequest) -> list[str]:
        canned = self.table.get(req.prompt) or self.table.get(prompt_hash(req.prompt))
        if canned is not None:
            if not canned:
                raise BackendError("empty mock entry")
            return [canned[i % len(canned)] for i in range(req.n_samples)]
        if self.responder is None:
            raise BackendError(f"no mock entry for prompt {prompt_hash(req.prompt)[:12]}")
        return [
            self.responder(req.prompt, random.Random(_digest(self.salt, req.seed, i, req.prompt)))
            for i in range(req.n_samples)
        ]


_DOC_LINE_RE = re.compile(r"^Document \[(\d+)\]\(Title: (.*?)\): (.*)$", re.M)


def context_documents(context: str) -> list[tuple[int, str, str]]:
    """``(index, title, body)`` for every rendered document line in ``context``."""
    return [(int(k), t, b) for k, t, b in _DOC_LINE_RE.findall(context)]


def distractor_penalty(context: str, continuation: str) -> float:
    """Fraction of context documents sharing no content word with ``continuation``."""
    docs = context_documents(context)
    if not docs:
        return 0.0
    words = set(content_words(continuation))
    off = sum(1 for _, t, b in docs if not words & set(content_words(f"{t} {b}")))
    return off / len(docs)


class MockScorer(Scorer):
    """``logprob = -tokens * (1 + distractor_penalty) * scale``.

    Tokens are whitespace-separated words of the continuation. ``scale``
    lets two mock roles (policy vs. reference) disagree in a controlled way.
    """

    def __init__(self, scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale

    def _logprob(self, req: LogprobRequest) -> LogprobResult:
        n = len(req.continuation.split())
        pen = distractor_penalty(req.context, req.continuation)
        return LogprobResult(logprob_sum=-n * (1.0 + pen) * self.scale, token_count=n)


class MockJudge(Judge):
    """Entailed iff every content word of the hypothesis occurs in the premise."""

    def __init__(self, threshold: float = DEFAULT_JUDGE_THRESHOLD, max_premise_chars: int = DEFAULT_MAX_PREMISE_CHARS):
        self.threshold = threshold
        self.max_premise_chars = max_premise_chars

    def _score(self, premise: str, hypothesis: str) -> float:
        return 1.0 if set(content_words(hypothesis)) <= set(content_words(premise)) else 0.0


@dataclass
class Gateway:
    """Backends bound to the four pipeline roles."""

    generator: Generator
    policy_scorer: Scorer
    reference_scorer: Scorer
    judge: Judge
    parallelism: int = 1

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        return parallel_map(fn, items, self.parallelism)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], parallelism: int = 1) -> list[R]:
    """Order-preserving map, concurrent up to ``parallelism`` threads."""
    items = list(items)
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# wire-protocol server, for exercising HttpBackend against any local backend


def make_server(
    generator: Generator | None = None,
    scorer: Scorer | None = None,
    judge: Judge | None = None,
    host: str = "127.0.0.1",
    port: int = 0,
    token: str | None = None,
) -> ThreadingHTTPServer:
    """Serve the given backends over the JSON wire protocol.

    Call ``serve_forever`` (or use :func:`start_server`) to run it.
    """

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # noqa: D401
            logger.debug(fmt, *args)

        def _reply(self, status: int, obj: dict) -> None:
            body = json.dumps(obj).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            rid = self.headers.get("X-Request-Id")
            if rid:
                self.send_header("X-Request-Id", rid)
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            if token and self.headers.get("Authorization") != f"Bearer {token}":
                return self._reply(401, {"error": "unauthorized"})
            try:
                n = int(self.headers.get("Content-Length", 0))
                req = json.loads(self.rfile.read(n).decode("utf-8"))
                if self.path == "/v1/generate" and generator is not None:
                    texts = generator.generate(
                        GenerationRequest(
                            prompt=req["prompt"],
                            n_samples=int(req["n"]),
                            temperature=float(req.get("temperature", 1.0)),
                            top_p=float(req.get("top_p", 0.95)),
                            max_tokens=int(req.get("max_tokens", 512)),
                            seed=req.get("seed"),
                        )
                    )
                    return self._reply(200, {"texts": texts})
                if self.path == "/v1/logprob" and scorer is not None:
                    r = scorer.logprob(LogprobRequest(req["context"], req["continuation"]))
                    return self._reply(200, {"logprob_sum": r.logprob_sum, "token_count": r.token_count})
                if self.path == "/v1/entail" and judge is not None:
                    v = judge.entail(req["premise"], req["hypothesis"])
                    return self._reply(200, {"entailed": v.entailed, "score": v.score})
                return self._reply(404, {"error": f"no handler for {self.path}"})
            except (KeyError, ValueError, TypeError) as e:
                return self._reply(400, {"error": str(e)})
            except GatewayError as e:
                return self._reply(502, {"error": str(e)})

    return ThreadingHTTPServer((host, port), Handler)


def start_server(**kwargs) -> tuple[ThreadingHTTPServer, str]:
    """Start :func:`make_server` on a daemon thread; returns ``(server, base_url)``."""
    server = make_server(**kwargs)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, port = server.server_address[:2]
    return server, f"http://{host}:{port}"
