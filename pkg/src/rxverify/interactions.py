"""Drug-interaction triplet store with embedding-based retrieval.

Triplets (head, relation, tail) load from JSON, get embedded as rendered
text, and are retrieved by exact top-k cosine similarity over the whole
index — the corpus is small enough that a flat exhaustive scan is both
simplest and provably correct.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmbedderUnavailable,
    EmptyIndex,
    ParseError,
    ZeroVector,
)

logger = logging.getLogger(__name__)

DEFAULT_DIM = 64
DEFAULT_SEED = 7
DEFAULT_TOP_K = 3

_INTERACTION_RELATIONS = {"INTERACTS_WITH"}


class Severity(Enum):
    MINOR = "Minor"
    MODERATE = "Moderate"
    MAJOR = "Major"


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str
    severity: Severity | None = None
    description: str | None = None

    def __post_init__(self):
        if not (self.head and self.relation and self.tail):
            raise ValueError("head, relation and tail must be non-empty")
        if self.severity is not None and self.relation not in _INTERACTION_RELATIONS:
            raise ValueError(f"severity is only valid on interaction relations, got {self.relation!r}")


def render_triplet(triplet: Triplet) -> str:
    """Canonical one-line rendering: "head | relation | tail [| severity]"."""
    parts = [triplet.head, triplet.relation, triplet.tail]
    if triplet.severity is not None:
        parts.append(triplet.severity.value)
    return " | ".join(parts)


def load_interactions(path: str | Path) -> list[Triplet]:
    """Load a JSON list of triplet rows; rows must have head/relation/tail."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: top level must be a list of triplet rows")
    triplets = []
    for i, row in enumerate(raw):
        if not isinstance(row, dict):
            raise ParseError(f"{path}: row {i} must be an object")
        try:
            severity = Severity(row["severity"]) if row.get("severity") else None
            triplets.append(
                Triplet(
                    head=row["head"],
                    relation=row["relation"],
                    tail=row["tail"],
                    severity=severity,
                    description=row.get("description"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: row {i}: {exc}") from exc
    return triplets


class Embedder(Protocol):  # pragma: no cover - structural type only
    dim: int

    def embed(self, text: str) -> np.ndarray:
        ...


class StubEmbedder:
    """Deterministic local embedder: seeded feature hashing of character
    trigrams, L2-normalized.  Stable across processes and platforms."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.dim = dim
        self._key = seed.to_bytes(8, "little", signed=True)

    def _ngrams(self, text: str) -> list[str]:
        padded = f"^{text.lower()}$"
        if len(padded) < 3:
            return [padded]
        return [padded[i : i + 3] for i in range(len(padded) - 2)]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in self._ngrams(text):
            digest = hashlib.blake2b(gram.encode("utf-8"), key=self._key, digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            sign = 1.0 if value & 1 else -1.0
            vec[(value >> 1) % self.dim] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # Theoretically possible for adversarial inputs; keep it defined.
            vec[0] = 1.0
            return vec
        return vec / norm


class RemoteEmbedder:
    """Embedder backed by an injected callable; failures surface as
    EmbedderUnavailable so callers can fall back or abort cleanly."""

    def __init__(self, send: Callable[[str], Sequence[float]], dim: int):
        self.dim = dim
        self._send = send

    def embed(self, text: str) -> np.ndarray:
        try:
            values = self._send(text)
        except Exception as exc:
            raise EmbedderUnavailable(f"remote embedder failed: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise EmbedderUnavailable(f"remote embedder returned shape {vec.shape}, wanted ({self.dim},)")
        return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVector("cosine similarity is undefined for zero vectors")
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass
class InteractionIndex:
    triplets: list[Triplet]
    matrix: np.ndarray  # one unit row per triplet, load order
    embedder: Embedder

    def __len__(self) -> int:
        return len(self.triplets)


def build_index(triplets: list[Triplet], embedder: Embedder | None = None) -> InteractionIndex:
    embedder = embedder or StubEmbedder()
    if not triplets:
        raise EmptyIndex("no triplets to index")
    matrix = np.vstack([embedder.embed(render_triplet(t)) for t in triplets])
    return InteractionIndex(triplets=list(triplets), matrix=matrix, embedder=embedder)


def retrieve(query: str, index: InteractionIndex, k: int = DEFAULT_TOP_K) -> list[tuple[Triplet, float]]:
    """Exact top-k by cosine similarity; ties break by triplet position."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if not index.triplets:
        raise EmptyIndex("retrieval over an empty index")
    qvec = index.embedder.embed(query)
    if qvec.shape != (index.matrix.shape[1],):
        raise DimensionMismatch(
            f"query dimension {qvec.shape} does not match index {index.matrix.shape[1]}"
        )
    norm = np.linalg.norm(qvec)
    if norm == 0.0:
        raise ZeroVector("query embedded to a zero vector")
    scores = index.matrix @ (qvec / norm)
    order = sorted(range(len(index.triplets)), key=lambda i: (-scores[i], i))
    return [(index.triplets[i], float(scores[i])) for i in order[:k]]


def summarize(triplets: Sequence[Triplet], gateway) -> str:
    """Condense retrieved triplets via the gateway.

    The facts are rendered one per line as "head relation tail (severity)";
    the offline stub returns them verbatim, in input order.
    """
    lines = []
    for t in triplets:
        line = f"{t.head} {t.relation} {t.tail}"
        if t.severity is not None:
            line += f" ({t.severity.value})"
        lines.append(line)
    facts = "\n".join(lines)
    return gateway.complete_template("interaction_summary", {"facts": facts}).text
