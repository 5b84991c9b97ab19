"""Uniform access to chat-completion and text-embedding backends.

Two implementations share one duck-typed surface (``chat(prompt, tier)`` and
``embed(texts)``): an HTTP gateway speaking the common chat/embeddings wire
shape, and a deterministic scripted stub for offline tests. Embedding vectors
are always L2-normalized by the gateway.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

logger = logging.getLogger(__name__)

TIER_LIGHT = "light"
TIER_STRONG = "strong"


class GatewayError(Exception):
    """Transport or protocol failure after retries are exhausted."""

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class UnscriptedPromptError(GatewayError):
    """The stub received a prompt no script rule covers."""


@dataclass
class GatewayConfig:
    chat_endpoint: str = ""
    embed_endpoint: str = ""
    model_light: str = "light-model"
    model_strong: str = "strong-model"
    embed_model: str = "embed-model"
    api_key_env: str = "CONCERNMAP_API_KEY"
    temperature: float = 0.0
    max_retries: int = 2
    rate_limit: float = 0.0  # requests per second; 0 disables limiting
    cache_dir: str | None = None
    timeout: float = 60.0
    embed_char_budget: int = 8000

    def __post_init__(self) -> None:
        if self.temperature != 0.0:
            raise ValueError("temperature is fixed to 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class TokenBucket:
    """Simple token bucket; acquire() blocks until a token is available."""

    def __init__(self, rate: float):
        self.rate = rate
        self.capacity = max(rate, 1.0)
        self.tokens = self.capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


class ResponseCache:
    """One file per prompt hash; writes are atomic (write-temp-then-rename)."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(tier: str, model: str, prompt: str) -> str:
        return hashlib.sha256(f"{tier}\n{model}\n{prompt}".encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        path = self.directory / key
        if path.is_file():
            return path.read_text("utf-8")
        return None

    def put(self, key: str, response: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(response)
            os.replace(tmp, self.directory / key)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise GatewayError("embedding backend returned a zero vector")
    return vectors / norms


def _truncate_for_embedding(texts: list[str], budget: int) -> list[str]:
    out = []
    for text in texts:
        if budget and len(text) > budget:
            logger.warning("embedding text truncated from %d to %d chars", len(text), budget)
            text = text[:budget]
        out.append(text)
    return out


class HttpGateway:
    """Chat/embeddings over HTTP in the widely adopted request shape."""

    def __init__(self, config: GatewayConfig):
        if not config.chat_endpoint or not config.embed_endpoint:
            raise ValueError("chat_endpoint and embed_endpoint are required")
        self.config = config
        self.bucket = TokenBucket(config.rate_limit)
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _model_for(self, tier: str) -> str:
        return self.config.model_strong if tier == TIER_STRONG else self.config.model_light

    def _post(self, url: str, payload: dict) -> dict:
        last_status, last_body = None, None
        attempts = 1 + self.config.max_retries
        for attempt in range(attempts):
            self.bucket.acquire()
            try:
                resp = requests.post(url, json=payload, headers=self._headers(),
                                     timeout=self.config.timeout)
                if resp.status_code == 200:
                    return resp.json()
                last_status, last_body = resp.status_code, resp.text
            except requests.RequestException as exc:
                last_status, last_body = None, str(exc)
            if attempt + 1 < attempts:
                time.sleep(min(2.0, 0.25 * 2**attempt))
        raise GatewayError(
            f"request to {url} failed after {attempts} attempt(s)",
            status=last_status,
            body=last_body,
        )

    def chat(self, prompt: str, tier: str = TIER_LIGHT) -> str:
        model = self._model_for(tier)
        key = ResponseCache.key(tier, model, prompt)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        data = self._post(
            self.config.chat_endpoint,
            {
                "model": model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.config.temperature,
            },
        )
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {exc}", body=json.dumps(data)[:500])
        if self.cache is not None:
            self.cache.put(key, text)
        return text

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("embed() requires a nonempty list of texts")
        texts = _truncate_for_embedding(texts, self.config.embed_char_budget)
        data = self._post(
            self.config.embed_endpoint,
            {"model": self.config.embed_model, "input": texts},
        )
        try:
            rows = [item["embedding"] for item in data["data"]]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embeddings response: {exc}", body=json.dumps(data)[:500])
        if len(rows) != len(texts):
            raise GatewayError(f"expected {len(texts)} embeddings, got {len(rows)}")
        lengths = {len(r) for r in rows}
        if len(lengths) != 1:
            raise GatewayError(f"embedding dimension mismatch across batch: {sorted(lengths)}")
        return _normalize_rows(np.asarray(rows, dtype=np.float64))


@dataclass
class StubRule:
    contains: tuple[str, ...] = ()
    response: str | None = None
    responder: str | None = None


@dataclass
class StubScript:
    exact: dict[str, str] = field(default_factory=dict)
    rules: list[StubRule] = field(default_factory=list)
    embedding_overrides: dict[str, list[float]] = field(default_factory=dict)
    embed_dim: int = 32


def load_stub_script(path: str | Path) -> StubScript:
    data = json.loads(Path(path).read_text("utf-8"))
    rules = [
        StubRule(
            contains=tuple(rule.get("contains", [])),
            response=rule.get("response"),
            responder=rule.get("responder"),
        )
        for rule in data.get("rules", [])
    ]
    return StubScript(
        exact=dict(data.get("exact", {})),
        rules=rules,
        embedding_overrides=dict(data.get("embeddings", {})),
        embed_dim=int(data.get("dim", 32)),
    )


def hash_embedding(text: str, dim: int = 32) -> np.ndarray:
    """Deterministic pseudo-random unit vector derived from the text."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


# --- built-in stub responders -------------------------------------------------

_TERM_SLOT_RE = re.compile(r"^Term: (.+)$", re.MULTILINE)
_FENCE_RE = re.compile(r"```\n(.*?)```", re.DOTALL)
_RECORD_LINE_RE = re.compile(r"^\[(\d+)\] term: (.+)$", re.MULTILINE)
_CANDIDATE_LINE_RE = re.compile(r"^\[(\d+)\] related_term: ", re.MULTILINE)
_SUMMARY_SLOT_RE = re.compile(r"^Function (.+):$", re.MULTILINE)


def _respond_echo_explanation(prompt: str) -> str:
    term = _TERM_SLOT_RE.search(prompt)
    fence = _FENCE_RE.search(prompt)
    if not term or not fence:
        raise UnscriptedPromptError("echo_explanation: prompt has no term/source slots")
    lemma = term.group(1).strip()
    source_lines = [line for line in fence.group(1).splitlines() if line.strip()]
    snippet = source_lines[0] if source_lines else ""
    return (
        f"REASONING: scripted echo for {lemma}\n"
        f"NAME: {lemma}\n"
        f"DEFINITION: A {lemma} handled by this code.\n"
        f"FUNCTIONALITY: Maintains the {lemma} state within this function.\n"
        f"SNIPPET:\n{snippet}\n"
    )


def _respond_cluster_all(prompt: str) -> str:
    records = _RECORD_LINE_RE.findall(prompt)
    if not records:
        raise UnscriptedPromptError("cluster_all: prompt lists no records")
    indices = ", ".join(index for index, _ in records)
    terms = sorted({term.strip() for _, term in records})
    first = records[0][1].strip()
    return (
        f"CONCERN: {first}\n"
        f"SUMMARY: Functionality related to {', '.join(terms)}.\n"
        f"RECORDS: {indices}\n"
    )


def _respond_identity_ranking(prompt: str) -> str:
    indices = _CANDIDATE_LINE_RE.findall(prompt)
    if not indices:
        raise UnscriptedPromptError("identity_ranking: prompt lists no candidates")
    return "RANKING: " + ", ".join(indices)


def _respond_echo_summary(prompt: str) -> str:
    slot = _SUMMARY_SLOT_RE.search(prompt)
    if not slot:
        raise UnscriptedPromptError("echo_summary: prompt has no function slot")
    return f"Summary of the behavior of {slot.group(1).strip()}."


_RESPONDERS = {
    "echo_explanation": _respond_echo_explanation,
    "cluster_all": _respond_cluster_all,
    "identity_ranking": _respond_identity_ranking,
    "echo_summary": _respond_echo_summary,
}


class StubGateway:
    """Deterministic scripted gateway for offline tests.

    Chat prompts are answered from the exact map first, then from substring
    rules (all ``contains`` needles must appear); a rule may instead name a
    built-in deterministic responder. Unmatched prompts raise
    :class:`UnscriptedPromptError` so test scripts stay exhaustive.
    """

    def __init__(self, script: StubScript | None = None, embed_char_budget: int = 8000):
        self.script = script or StubScript()
        self.embed_char_budget = embed_char_budget
        self.chat_calls: list[tuple[str, str]] = []
        self._override_vectors = {
            text: np.asarray(vec, dtype=np.float64)
            for text, vec in self.script.embedding_overrides.items()
        }

    def chat(self, prompt: str, tier: str = TIER_LIGHT) -> str:
        self.chat_calls.append((tier, prompt))
        if prompt in self.script.exact:
            return self.script.exact[prompt]
        for rule in self.script.rules:
            if all(needle in prompt for needle in rule.contains):
                if rule.responder is not None:
                    return _RESPONDERS[rule.responder](prompt)
                if rule.response is not None:
                    return rule.response
        raise UnscriptedPromptError(f"unscripted prompt: {prompt[:120]!r}...")

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise ValueError("embed() requires a nonempty list of texts")
        texts = _truncate_for_embedding(texts, self.embed_char_budget)
        dim = self.script.embed_dim
        for vec in self._override_vectors.values():
            dim = vec.shape[0]
            break
        rows = []
        for text in texts:
            if text in self._override_vectors:
                rows.append(self._override_vectors[text])
            else:
                rows.append(hash_embedding(text, dim))
        lengths = {r.shape[0] for r in rows}
        if len(lengths) != 1:
            raise GatewayError(f"embedding dimension mismatch across batch: {sorted(lengths)}")
        return _normalize_rows(np.stack(rows))
