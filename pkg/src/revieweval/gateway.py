"""Single gateway through which every model interaction flows.

The gateway pairs a backend (live HTTP, scripted lookup, or transcript
replay) with a transcript recorder. Pipelines never talk to a provider
directly: they build a :class:`ChatRequest` against a bundled template
and hand it to :meth:`Gateway.complete`, or embed raw texts through
:meth:`Gateway.embed`. Each call is appended to the active transcript,
so a recorded run can be replayed bit-for-bit later.

Requests are identified by a fingerprint: a SHA-256 over the template
id and the variables serialized with sorted keys. Scripted backends
look responses up by fingerprint; replay backends verify that the call
order matches the recording fingerprint by fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol, Sequence

from . import templates
from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    EmptyText,
    FingerprintMismatch,
    RateLimited,
    ScriptMiss,
    TranscriptExhausted,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "REVIEWEVAL_API_KEY"


def _canonical(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def chat_fingerprint(template_id: str, variables: dict[str, str]) -> str:
    payload = {"kind": "chat", "template_id": template_id, "variables": variables}
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def embed_fingerprint(texts: Sequence[str]) -> str:
    payload = {"kind": "embed", "texts": list(texts)}
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


@dataclass(frozen=True)
class ChatRequest:
    """One templated chat call.

    Args:
        template_id: id of a bundled prompt template.
        variables: placeholder bindings; part of the fingerprint.
        temperature: sampling temperature, 0 for deterministic runs.
        max_output_tokens: completion budget passed to live backends.
    """

    template_id: str
    variables: dict[str, str]
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    @property
    def fingerprint(self) -> str:
        return chat_fingerprint(self.template_id, self.variables)

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "variables": dict(self.variables),
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    usage: TokenUsage
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "backend_id": self.backend_id,
            "usage": self.usage.to_dict(),
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    """A fixed-dimension embedding; values must be finite."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("embedding must have at least one component")
        for v in self.values:
            if not math.isfinite(v):
                raise ValueError("embedding components must be finite")

    @property
    def dim(self) -> int:
        return len(self.values)


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine of the angle between two vectors.

    Either vector having zero norm yields 0.0. Identical vectors yield
    exactly 1.0; the general formula can land one ulp away from 1, which
    would break downstream equality guarantees.
    """
    if len(a) != len(b):
        raise DimensionMismatch(f"cosine over dims {len(a)} and {len(b)}")
    if tuple(a) == tuple(b):
        if not any(a):
            return 0.0
        return 1.0
    dot = 0.0
    norm_a = 0.0
    norm_b = 0.0
    for x, y in zip(a, b):
        dot += x * y
        norm_a += x * x
        norm_b += y * y
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    value = dot / math.sqrt(norm_a * norm_b)
    return max(-1.0, min(1.0, value))


def hashed_embedding(text: str, dim: int) -> EmbeddingVector:
    """Deterministic pseudo-embedding derived from a SHA-256 of the text.

    Used by scripted backends so fixtures do not need one canned vector
    per chunk. The construction is a pure function of (text, dim) and
    therefore identical on every platform.
    """
    values = []
    for i in range(dim):
        digest = hashlib.sha256(f"{text}\x1f{i}".encode("utf-8")).digest()
        component = int.from_bytes(digest[:8], "big") / 2**64
        values.append(component * 2.0 - 1.0)
    return EmbeddingVector(tuple(values))


class Backend(Protocol):
    backend_id: str

    def complete(self, request: ChatRequest) -> ChatResponse: ...

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


# --- scripted backend ---------------------------------------------------------


@dataclass
class ScriptTable:
    """Canned responses for a fully offline run.

    ``chat`` maps request fingerprints to response payloads. Embeddings
    are keyed by exact text, with an optional hashed fallback (see
    :func:`hashed_embedding`) for texts the script does not pin down.
    """

    chat: dict[str, dict]
    embeddings: dict[str, tuple[float, ...]] = field(default_factory=dict)
    hashed_dim: int | None = None

    @classmethod
    def from_dict(cls, payload: dict) -> "ScriptTable":
        chat: dict[str, dict] = {}
        for entry in payload.get("chat", []):
            fingerprint = chat_fingerprint(entry["template_id"], entry["variables"])
            if fingerprint in chat:
                raise ValueError(
                    f"duplicate script entry for template {entry['template_id']!r}"
                )
            chat[fingerprint] = {
                "text": entry["response"],
                "truncated": bool(entry.get("truncated", False)),
            }
        embeddings = {
            text: tuple(float(v) for v in vector)
            for text, vector in payload.get("embeddings", {}).items()
        }
        hashed = payload.get("hashed_embeddings")
        hashed_dim = int(hashed["dim"]) if hashed else None
        return cls(chat=chat, embeddings=embeddings, hashed_dim=hashed_dim)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptTable":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


class ScriptedBackend:
    """Pure lookup backend: no network, no state, no randomness."""

    backend_id = "scripted"

    def __init__(self, script: ScriptTable):
        self.script = script

    def complete(self, request: ChatRequest) -> ChatResponse:
        entry = self.script.chat.get(request.fingerprint)
        if entry is None:
            raise ScriptMiss(
                f"no scripted response for template {request.template_id!r} "
                f"with variables {sorted(request.variables)}"
            )
        prompt_tokens = sum(len(v.split()) for v in request.variables.values())
        return ChatResponse(
            text=entry["text"],
            backend_id=self.backend_id,
            usage=TokenUsage(prompt_tokens, len(entry["text"].split())),
            truncated=entry.get("truncated", False),
        )

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        vectors = []
        for text in texts:
            canned = self.script.embeddings.get(text)
            if canned is not None:
                vectors.append(EmbeddingVector(canned))
            elif self.script.hashed_dim is not None:
                vectors.append(hashed_embedding(text, self.script.hashed_dim))
            else:
                raise ScriptMiss(f"no scripted embedding for text {text[:60]!r}")
        return vectors


class CallableBackend:
    """Backend driven by a plain function, for tests and fixture authoring."""

    backend_id = "callable"

    def __init__(self, fn: Callable[[ChatRequest], str], embed_dim: int = 16):
        self.fn = fn
        self.embed_dim = embed_dim

    def complete(self, request: ChatRequest) -> ChatResponse:
        text = self.fn(request)
        prompt_tokens = sum(len(v.split()) for v in request.variables.values())
        return ChatResponse(
            text=text,
            backend_id=self.backend_id,
            usage=TokenUsage(prompt_tokens, len(text.split())),
        )

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [hashed_embedding(text, self.embed_dim) for text in texts]


# --- live backend --------------------------------------------------------------


@dataclass
class LiveConfig:
    base_url: str
    model: str
    embed_model: str
    api_key: str | None = None
    timeout: float = 60.0
    max_attempts: int = 3
    backoff_seconds: float = 0.5


class LiveBackend:
    """Chat-completions style HTTP backend with retry and backoff."""

    backend_id = "live"

    def __init__(self, config: LiveConfig):
        self.config = config

    def _api_key(self) -> str:
        key = self.config.api_key or os.environ.get(API_KEY_ENV, "")
        if not key:
            raise BackendUnavailable(f"no API key; set {API_KEY_ENV}")
        return key

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        url = self.config.base_url.rstrip("/") + path
        headers = {"Authorization": f"Bearer {self._api_key()}"}
        last_error: Exception | None = None
        rate_limited = False
        for attempt in range(self.config.max_attempts):
            if attempt:
                time.sleep(self.config.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    url, json=payload, headers=headers, timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("request to %s failed: %s", url, exc)
                continue
            if response.status_code == 429:
                rate_limited = True
                last_error = RuntimeError("rate limited")
                logger.warning("rate limited by %s, attempt %d", url, attempt + 1)
                continue
            if response.status_code >= 500:
                last_error = RuntimeError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendUnavailable(
                    f"{url} returned {response.status_code}: {response.text[:200]}"
                )
            return response.json()
        if rate_limited:
            raise RateLimited(f"{url} kept rate limiting") from last_error
        raise BackendUnavailable(f"{url} unreachable: {last_error}") from last_error

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = templates.render(request.template_id, request.variables)
        body = self._post(
            "/chat/completions",
            {
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_output_tokens,
            },
        )
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed completion payload: {body}") from exc
        if not text:
            raise BackendUnavailable("backend returned empty completion text")
        usage = body.get("usage", {})
        return ChatResponse(
            text=text,
            backend_id=self.backend_id,
            usage=TokenUsage(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            ),
            truncated=choice.get("finish_reason") == "length",
        )

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        body = self._post(
            "/embeddings",
            {"model": self.config.embed_model, "input": list(texts)},
        )
        try:
            rows = sorted(body["data"], key=lambda row: row["index"])
            return [
                EmbeddingVector(tuple(float(v) for v in row["embedding"]))
                for row in rows
            ]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable(f"malformed embedding payload: {body}") from exc


# --- transcript and replay ------------------------------------------------------


@dataclass(frozen=True)
class TranscriptRecord:
    kind: str  # "chat" or "embed"
    fingerprint: str
    request: dict
    response: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "request": self.request,
            "response": self.response,
        }


class Transcript:
    """Ordered record of every gateway call, persisted as JSON lines."""

    def __init__(self, records: Iterable[TranscriptRecord] = ()):
        self._records: list[TranscriptRecord] = list(records)
        self._lock = threading.Lock()

    def append(self, record: TranscriptRecord) -> None:
        with self._lock:
            self._records.append(record)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TranscriptRecord]:
        return iter(list(self._records))

    @property
    def records(self) -> tuple[TranscriptRecord, ...]:
        return tuple(self._records)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for record in self._records:
                handle.write(_canonical(record.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        records = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                payload = json.loads(line)
                records.append(
                    TranscriptRecord(
                        kind=payload["kind"],
                        fingerprint=payload["fingerprint"],
                        request=payload["request"],
                        response=payload["response"],
                    )
                )
        return cls(records)


class ReplayBackend:
    """Serves a recorded transcript back in order, verifying fingerprints."""

    backend_id = "replay"

    def __init__(self, transcript: Transcript):
        self._records = list(transcript.records)
        self._position = 0
        self._lock = threading.Lock()

    def _next(self, kind: str, fingerprint: str) -> TranscriptRecord:
        with self._lock:
            if self._position >= len(self._records):
                raise TranscriptExhausted(
                    f"transcript has {len(self._records)} records, "
                    f"call {self._position + 1} requested"
                )
            record = self._records[self._position]
            if record.kind != kind or record.fingerprint != fingerprint:
                raise FingerprintMismatch(
                    f"call {self._position + 1} expected {record.kind} "
                    f"{record.fingerprint[:12]}, got {kind} {fingerprint[:12]}"
                )
            self._position += 1
            return record

    def complete(self, request: ChatRequest) -> ChatResponse:
        record = self._next("chat", request.fingerprint)
        payload = record.response
        usage = payload.get("usage", {})
        # reproduce the recorded response verbatim, original backend_id
        # included, so a replayed transcript is byte-identical
        return ChatResponse(
            text=payload["text"],
            backend_id=payload.get("backend_id", self.backend_id),
            usage=TokenUsage(
                int(usage.get("prompt_tokens", 0)),
                int(usage.get("completion_tokens", 0)),
            ),
            truncated=bool(payload.get("truncated", False)),
        )

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        record = self._next("embed", embed_fingerprint(texts))
        return [
            EmbeddingVector(tuple(float(v) for v in vector))
            for vector in record.response["vectors"]
        ]


def replay_backend(transcript: Transcript) -> ReplayBackend:
    """Build a backend that replays ``transcript`` call for call."""
    return ReplayBackend(transcript)


# --- gateway --------------------------------------------------------------------


class Gateway:
    """Backend plus transcript recorder; the only entry point pipelines use."""

    def __init__(self, backend: Backend, transcript: Transcript | None = None):
        self.backend = backend
        self.transcript = transcript if transcript is not None else Transcript()
        self._embed_dim: int | None = None
        self._dim_lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        templates.validate_variables(request.template_id, request.variables)
        response = self.backend.complete(request)
        self.transcript.append(
            TranscriptRecord(
                kind="chat",
                fingerprint=request.fingerprint,
                request=request.to_dict(),
                response=response.to_dict(),
            )
        )
        return response

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        texts = list(texts)
        if not texts:
            return []
        for text in texts:
            if not text or not text.strip():
                raise EmptyText("cannot embed empty text")
        vectors = self.backend.embed(texts)
        if len(vectors) != len(texts):
            raise DimensionMismatch(
                f"backend returned {len(vectors)} vectors for {len(texts)} texts"
            )
        dims = {vector.dim for vector in vectors}
        if len(dims) != 1:
            raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
        dim = dims.pop()
        with self._dim_lock:
            if self._embed_dim is None:
                self._embed_dim = dim
            elif self._embed_dim != dim:
                raise DimensionMismatch(
                    f"embedding dimension changed from {self._embed_dim} to {dim}"
                )
        self.transcript.append(
            TranscriptRecord(
                kind="embed",
                fingerprint=embed_fingerprint(texts),
                request={"texts": texts},
                response={"vectors": [list(v.values) for v in vectors], "dim": dim},
            )
        )
        return vectors
