"""Document retrieval: chunking, embedding, cosine ranking, cited answers.

An index is built once from a set of documents and is immutable afterwards, so
it can be shared between sessions without locking. Chunks carry their source
offset, which lets the original document order be reconstructed. Vectors are
stored unit-normalised; persistence splits the index into a JSON file with the
chunk texts and a raw little-endian float32 block with the vectors.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import RegistryError, ValidationError
from .llm import ChatMessage, ChatProvider, strip_terminate
from .prompts import load_prompt

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_OVERLAP = 200
DEFAULT_K = 5


class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


@dataclass
class RagChunk:
    doc_id: str
    offset: int
    text: str
    vector: np.ndarray

    @property
    def chunk_id(self) -> str:
        return f"{self.doc_id}:{self.offset}"


@dataclass
class RagIndex:
    id: str
    chunks: list[RagChunk]
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP
    k: int = DEFAULT_K


@dataclass
class ScoredChunk:
    chunk: RagChunk
    score: float

    @property
    def chunk_id(self) -> str:
        return self.chunk.chunk_id


@dataclass
class RagAnswer:
    text: str
    citations: list[ScoredChunk] = field(default_factory=list)


def chunk_text(text: str, size: int = DEFAULT_CHUNK_SIZE, overlap: int = DEFAULT_OVERLAP) -> list[tuple[int, str]]:
    """Split ``text`` into (offset, chunk) windows of ``size`` characters.

    Consecutive windows share ``overlap`` characters; the final window may be
    shorter. Offsets are character positions into the source text, so sorting
    by offset reproduces the document.
    """
    if size <= 0 or overlap < 0 or overlap >= size:
        raise ValidationError("chunking requires size > 0 and 0 <= overlap < size")
    step = size - overlap
    out = []
    for start in range(0, len(text), step):
        piece = text[start : start + size]
        if piece:
            out.append((start, piece))
        if start + size >= len(text):
            break
    return out


def _index_id(documents: Sequence[tuple[str, str]]) -> str:
    h = hashlib.sha256()
    for doc_id, text in documents:
        h.update(doc_id.encode("utf-8"))
        h.update(b"\x00")
        h.update(text.encode("utf-8"))
        h.update(b"\x00")
    return "rag-" + h.hexdigest()[:12]


class RagStore:
    """Holds named immutable indexes and answers questions against them."""

    def __init__(
        self,
        embedder: Embedder,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        overlap: int = DEFAULT_OVERLAP,
        k: int = DEFAULT_K,
    ):
        self.embedder = embedder
        self.chunk_size = chunk_size
        self.overlap = overlap
        self.k = k
        self._indexes: dict[str, RagIndex] = {}

    def ingest(self, documents: Mapping[str, str] | Sequence[tuple[str, str]]) -> str:
        """Chunk, embed and store ``documents``; returns the new index id.

        The id is a content hash, so re-ingesting the same corpus reuses the
        existing index instead of duplicating it.
        """
        pairs = list(documents.items()) if isinstance(documents, Mapping) else list(documents)
        if not pairs:
            raise ValidationError("cannot ingest an empty document set")
        for doc_id, text in pairs:
            if not doc_id or not isinstance(text, str) or not text.strip():
                raise ValidationError(f"document {doc_id!r} is empty")
        index_id = _index_id(pairs)
        if index_id in self._indexes:
            return index_id
        flat: list[tuple[str, int, str]] = []
        for doc_id, text in pairs:
            for offset, piece in chunk_text(text, self.chunk_size, self.overlap):
                flat.append((doc_id, offset, piece))
        vectors = self.embedder.embed([piece for _, _, piece in flat])
        chunks = [
            RagChunk(doc_id=d, offset=o, text=t, vector=v)
            for (d, o, t), v in zip(flat, vectors)
        ]
        self._indexes[index_id] = RagIndex(
            id=index_id, chunks=chunks, chunk_size=self.chunk_size, overlap=self.overlap, k=self.k
        )
        return index_id

    def get(self, index_id: str) -> RagIndex:
        try:
            return self._indexes[index_id]
        except KeyError:
            raise RegistryError(f"unknown retrieval index: {index_id!r}") from None

    def add(self, index: RagIndex) -> None:
        self._indexes[index.id] = index

    def drop(self, index_id: str) -> None:
        self.get(index_id)
        del self._indexes[index_id]

    def ids(self) -> list[str]:
        return sorted(self._indexes)

    def query(self, index_id: str, question: str, k: int | None = None) -> list[ScoredChunk]:
        """Rank chunks of ``index_id`` by cosine similarity to ``question``."""
        if not question or not question.strip():
            raise ValidationError("question must be non-empty")
        index = self.get(index_id)
        (qvec,) = self.embedder.embed([question])
        scored = [
            ScoredChunk(chunk=c, score=float(np.dot(c.vector, qvec))) for c in index.chunks
        ]
        scored.sort(key=lambda s: (-s.score, s.chunk.doc_id, s.chunk.offset))
        top = k if k is not None else index.k
        if top <= 0:
            raise ValidationError("k must be positive")
        return scored[:top]

    def answer(
        self, index_id: str, question: str, provider: ChatProvider, k: int | None = None
    ) -> RagAnswer:
        """Answer ``question`` from the top-k chunks via the chat provider."""
        citations = self.query(index_id, question, k=k)
        lines = ["Retrieved passages:"]
        for i, sc in enumerate(citations, start=1):
            lines.append(f"[{i}] ({sc.chunk_id}) {sc.chunk.text}")
        lines.append("")
        lines.append(f"Question: {question}")
        turn = provider.chat(
            [
                ChatMessage(role="system", content=load_prompt("rag_agent")),
                ChatMessage(role="user", content="\n".join(lines)),
            ]
        )
        return RagAnswer(text=strip_terminate(turn.text or ""), citations=citations)


def save_index(index: RagIndex, base_path: str | Path) -> tuple[Path, Path]:
    """Persist ``index`` as ``{base}.json`` plus ``{base}.vec``.

    The JSON file holds chunk texts and parameters; the .vec file is the
    row-major float32 little-endian matrix of chunk vectors.
    """
    base = Path(base_path)
    json_path = base.with_suffix(".json")
    vec_path = base.with_suffix(".vec")
    if index.chunks:
        matrix = np.stack([c.vector for c in index.chunks]).astype("<f4")
        dim = matrix.shape[1]
    else:
        matrix = np.zeros((0, 0), dtype="<f4")
        dim = 0
    doc = {
        "id": index.id,
        "chunk_size": index.chunk_size,
        "overlap": index.overlap,
        "k": index.k,
        "dim": dim,
        "vector_file": vec_path.name,
        "chunks": [
            {"doc_id": c.doc_id, "offset": c.offset, "text": c.text} for c in index.chunks
        ],
    }
    json_path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    vec_path.write_bytes(matrix.tobytes())
    return json_path, vec_path


def load_index(json_path: str | Path) -> RagIndex:
    """Load an index saved by :func:`save_index`.

    Vectors are widened back to float64 and renormalised, restoring the
    unit-norm invariant that float32 storage slightly blurs.
    """
    path = Path(json_path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot load retrieval index {path}: {exc}") from exc
    vec_path = path.parent / doc["vector_file"]
    dim = int(doc["dim"])
    raw = np.frombuffer(vec_path.read_bytes(), dtype="<f4")
    metas = doc["chunks"]
    if dim > 0 and raw.size != len(metas) * dim:
        raise ValidationError(
            f"vector block of {path} has {raw.size} floats, expected {len(metas) * dim}"
        )
    matrix = raw.reshape(len(metas), dim).astype(np.float64) if dim > 0 else None
    chunks = []
    for i, meta in enumerate(metas):
        vec = matrix[i]
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValidationError(f"chunk {i} of {path} has a zero vector")
        chunks.append(
            RagChunk(
                doc_id=str(meta["doc_id"]),
                offset=int(meta["offset"]),
                text=str(meta["text"]),
                vector=vec / norm,
            )
        )
    return RagIndex(
        id=str(doc["id"]),
        chunks=chunks,
        chunk_size=int(doc["chunk_size"]),
        overlap=int(doc["overlap"]),
        k=int(doc["k"]),
    )
