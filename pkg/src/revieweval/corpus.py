"""Token-window corpus store for retrieval over a paper.

Documents are split into overlapping parent sections, and each parent
into overlapping child chunks. Children carry embeddings and are the
unit of similarity search; parents are the unit of context handed to
prompts. A token is a whitespace-delimited word under the default
tokenizer; callers may plug in their own tokenizer.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    EmbeddingFailure,
    EmptyDocument,
    EmptyIndex,
    GatewayFailure,
    OrphanChunk,
)
from .gateway import Gateway, cosine_similarity

Tokenizer = Callable[[str], list[str]]

DEFAULT_CHILD_TOKENS = 1000
DEFAULT_PARENT_TOKENS = 4000
DEFAULT_OVERLAP_FRACTION = 0.10


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class ChunkConfig:
    """Window sizes in tokens and the overlap between consecutive windows."""

    child_tokens: int = DEFAULT_CHILD_TOKENS
    parent_tokens: int = DEFAULT_PARENT_TOKENS
    overlap_fraction: float = DEFAULT_OVERLAP_FRACTION

    def __post_init__(self) -> None:
        if self.child_tokens <= 0:
            raise ValueError("child_tokens must be positive")
        if self.child_tokens > self.parent_tokens:
            raise ValueError("child_tokens must not exceed parent_tokens")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "child_tokens": self.child_tokens,
            "parent_tokens": self.parent_tokens,
            "overlap_fraction": self.overlap_fraction,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ChunkConfig":
        return cls(
            child_tokens=int(payload["child_tokens"]),
            parent_tokens=int(payload["parent_tokens"]),
            overlap_fraction=float(payload["overlap_fraction"]),
        )


def overlap_tokens(window: int, overlap_fraction: float) -> int:
    return math.floor(overlap_fraction * window)


def window_stride(window: int, overlap_fraction: float) -> int:
    return window - overlap_tokens(window, overlap_fraction)


def span_count(length: int, window: int, stride: int) -> int:
    """Closed-form number of windows covering ``length`` tokens."""
    if length <= window:
        return 1
    return math.ceil((length - window) / stride) + 1


def cut_spans(length: int, window: int, overlap_fraction: float) -> list[tuple[int, int]]:
    """Half-open token spans tiling ``[0, length)``.

    Consecutive spans share exactly ``floor(overlap_fraction * window)``
    tokens; only the final span may be shorter than the window.
    """
    if length <= 0:
        return []
    stride = window_stride(window, overlap_fraction)
    count = span_count(length, window, stride)
    return [(i * stride, min(i * stride + window, length)) for i in range(count)]


@dataclass(frozen=True)
class ParentSection:
    id: str
    text: str
    token_span: tuple[int, int]


@dataclass(frozen=True)
class ChildChunk:
    id: str
    parent_id: str
    text: str
    token_span: tuple[int, int]
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class SearchHit:
    chunk: ChildChunk
    score: float


@dataclass
class CorpusIndex:
    """All chunks of one document plus lookup tables."""

    document_id: str
    config: ChunkConfig
    parents: list[ParentSection]
    children: list[ChildChunk]
    _parents_by_id: dict[str, ParentSection] = field(init=False, repr=False)
    _children_by_id: dict[str, ChildChunk] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._parents_by_id = {p.id: p for p in self.parents}
        self._children_by_id = {c.id: c for c in self.children}

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "config": self.config.to_dict(),
            "parents": [
                {"id": p.id, "text": p.text, "token_span": list(p.token_span)}
                for p in self.parents
            ],
            "children": [
                {
                    "id": c.id,
                    "parent_id": c.parent_id,
                    "text": c.text,
                    "token_span": list(c.token_span),
                    "embedding": list(c.embedding),
                }
                for c in self.children
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CorpusIndex":
        return cls(
            document_id=payload["document_id"],
            config=ChunkConfig.from_dict(payload["config"]),
            parents=[
                ParentSection(
                    id=p["id"], text=p["text"], token_span=tuple(p["token_span"])
                )
                for p in payload["parents"]
            ],
            children=[
                ChildChunk(
                    id=c["id"],
                    parent_id=c["parent_id"],
                    text=c["text"],
                    token_span=tuple(c["token_span"]),
                    embedding=tuple(float(v) for v in c["embedding"]),
                )
                for c in payload["children"]
            ],
        )


def plan_chunks(
    length: int, config: ChunkConfig
) -> list[tuple[tuple[int, int], list[tuple[int, int]]]]:
    """Parent spans with their child spans, all in document token offsets.

    Children are cut inside each parent's span, so a child never crosses
    a parent boundary. Pure span arithmetic; no text involved.
    """
    plan = []
    for parent_start, parent_end in cut_spans(
        length, config.parent_tokens, config.overlap_fraction
    ):
        child_spans = [
            (parent_start + start, parent_start + end)
            for start, end in cut_spans(
                parent_end - parent_start, config.child_tokens, config.overlap_fraction
            )
        ]
        plan.append(((parent_start, parent_end), child_spans))
    return plan


def ingest(
    document: str,
    gateway: Gateway,
    config: ChunkConfig | None = None,
    document_id: str | None = None,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> CorpusIndex:
    """Chunk and embed a document into a searchable index.

    Args:
        document: raw document text (plain text or markdown).
        gateway: embedding provider; every child text goes through it.
        config: window sizes, defaults to 1000/4000 tokens, 10% overlap.
        document_id: stable id baked into chunk ids; defaults to a
            content hash so re-ingesting the same text is reproducible.
        tokenizer: splits text into tokens; whitespace words by default.

    Raises:
        EmptyDocument: the document has no tokens.
        EmbeddingFailure: the gateway could not embed the chunks.
    """
    config = config or ChunkConfig()
    tokens = tokenizer(document)
    if not tokens:
        raise EmptyDocument("document normalizes to zero tokens")
    if document_id is None:
        document_id = hashlib.sha256(document.encode("utf-8")).hexdigest()[:12]

    parents: list[ParentSection] = []
    children: list[ChildChunk] = []
    child_index = 0
    for parent_number, (parent_span, child_spans) in enumerate(
        plan_chunks(len(tokens), config)
    ):
        parent = ParentSection(
            id=f"{document_id}:p{parent_number:06d}",
            text=" ".join(tokens[parent_span[0] : parent_span[1]]),
            token_span=parent_span,
        )
        parents.append(parent)
        for span in child_spans:
            children.append(
                ChildChunk(
                    id=f"{document_id}:c{child_index:06d}",
                    parent_id=parent.id,
                    text=" ".join(tokens[span[0] : span[1]]),
                    token_span=span,
                    embedding=(),
                )
            )
            child_index += 1

    try:
        vectors = gateway.embed([child.text for child in children])
    except GatewayFailure as exc:
        raise EmbeddingFailure(f"chunk embedding failed: {exc}") from exc
    children = [
        replace(child, embedding=vector.values)
        for child, vector in zip(children, vectors)
    ]
    return CorpusIndex(
        document_id=document_id, config=config, parents=parents, children=children
    )


def search(index: CorpusIndex, query: str, k: int, gateway: Gateway) -> list[SearchHit]:
    """Top-k children by cosine similarity to the query, descending.

    Ties break by ascending chunk id. Requesting more hits than the
    index holds returns every chunk ranked.
    """
    if not index.children:
        raise EmptyIndex(f"index {index.document_id!r} has no chunks")
    if k <= 0:
        raise ValueError("k must be positive")
    [query_vector] = gateway.embed([query])
    scored = [
        SearchHit(chunk=child, score=cosine_similarity(query_vector.values, child.embedding))
        for child in index.children
    ]
    scored.sort(key=lambda hit: (-hit.score, hit.chunk.id))
    return scored[:k]


def parent_of(index: CorpusIndex, chunk: ChildChunk) -> ParentSection:
    """Resolve a chunk's parent section within its own index."""
    stored = index._children_by_id.get(chunk.id)
    if stored is None or stored != chunk:
        raise OrphanChunk(f"chunk {chunk.id!r} does not belong to this index")
    parent = index._parents_by_id.get(chunk.parent_id)
    if parent is None:
        raise OrphanChunk(f"chunk {chunk.id!r} names missing parent {chunk.parent_id!r}")
    return parent


def save_index(index: CorpusIndex, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(index.to_dict(), handle, sort_keys=True)
        handle.write("\n")


def load_index(path: str | Path) -> CorpusIndex:
    with open(path, encoding="utf-8") as handle:
        return CorpusIndex.from_dict(json.load(handle))
