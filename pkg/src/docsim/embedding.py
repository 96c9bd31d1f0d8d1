"""Per-sentence embeddings: provider contract, deterministic hash provider, persistent stores."""

from __future__ import annotations

import hashlib
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Protocol, runtime_checkable

import numpy as np

from .corpus import Corpus

STORE_MAGIC = b"SDRE"
STORE_VERSION = 1
_CLS_MAGIC = b"CLSV"


class StoreError(Exception):
    """Base error for unreadable or invalid embedding stores."""


class TruncatedStoreError(StoreError):
    """The store file ends before the declared payload is complete."""


class UnknownStoreVersionError(StoreError):
    """The store declares a version this reader does not understand."""


class DimensionMismatchError(StoreError):
    """Vector dimensions disagree, either inside a store or with the caller's expectation."""


class ShapeMismatchError(ValueError):
    """An EmbeddedCorpus is not structure-isomorphic to the corpus it is paired with."""


class EmbeddingError(RuntimeError):
    """A provider failed on a specific sentence; message carries its coordinates."""


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int
    concurrency_safe: bool

    def embed(self, text: str) -> np.ndarray: ...


def mean_pool(vectors: Iterable[np.ndarray]) -> np.ndarray:
    """Component-wise arithmetic mean of equal-dimension vectors, accumulated in float64."""
    stack = [np.asarray(v) for v in vectors]
    if not stack:
        raise ValueError("mean_pool requires at least one vector")
    d = stack[0].shape[-1]
    for v in stack:
        if v.shape != (d,):
            raise ValueError(f"mean_pool dimension mismatch: {v.shape} vs ({d},)")
    return np.mean(np.stack(stack).astype(np.float64), axis=0).astype(np.float32)


def _token_unit_vector(token: str, dimension: int, seed: int) -> np.ndarray:
    key = struct.pack("<q", seed)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    vec = rng.standard_normal(dimension)
    return vec / np.linalg.norm(vec)


def hash_embed(text: str, dimension: int, seed: int = 0) -> np.ndarray:
    """Deterministic sentence embedding: mean of hashed unit token vectors, L2-normalized.

    Depends only on (text, dimension, seed); identical across runs and platforms.
    """
    if dimension < 2:
        raise ValueError("hash_embed requires dimension >= 2")
    tokens = text.split()
    if not tokens:
        raise ValueError("hash_embed requires non-empty text")
    acc = np.zeros(dimension, dtype=np.float64)
    for token in tokens:
        acc += _token_unit_vector(token, dimension, seed)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm < 1e-12:
        raise ValueError("degenerate sentence: token vectors cancel out")
    return (acc / norm).astype(np.float32)


class HashEmbedder:
    """Test-grade provider mapping text to stable pseudo-random unit vectors."""

    concurrency_safe = True

    def __init__(self, dimension: int, seed: int = 0):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension
        self.seed = seed
        self._token_cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ValueError("cannot embed empty text")
        acc = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            vec = self._token_cache.get(token)
            if vec is None:
                vec = _token_unit_vector(token, self.dimension, self.seed)
                self._token_cache[token] = vec
            acc += vec
        acc /= len(tokens)
        norm = np.linalg.norm(acc)
        if norm < 1e-12:
            raise ValueError("degenerate sentence: token vectors cancel out")
        return (acc / norm).astype(np.float32)


@dataclass
class EmbeddedCorpus:
    """Per-sentence vectors preserving document/paragraph structure.

    ``docs`` maps document id to one (sentence_count, dimension) float32 array
    per paragraph, in document order. ``cls`` optionally carries one
    document-level classifier-token vector per document.
    """

    dimension: int
    docs: dict[str, tuple[np.ndarray, ...]]
    cls: dict[str, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not self.docs:
            raise ValueError("EmbeddedCorpus must contain at least one document")
        for doc_id, paragraphs in self.docs.items():
            for p_idx, arr in enumerate(paragraphs):
                if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != self.dimension:
                    raise DimensionMismatchError(
                        f"document {doc_id!r} paragraph {p_idx}: shape {arr.shape} "
                        f"does not match dimension {self.dimension}"
                    )
                if not np.isfinite(arr).all():
                    raise ValueError(f"document {doc_id!r} paragraph {p_idx}: non-finite vector")
                arr.setflags(write=False)
        if self.cls is not None:
            if set(self.cls) != set(self.docs):
                raise ShapeMismatchError("cls vectors must cover exactly the stored documents")
            for doc_id, vec in self.cls.items():
                if vec.shape != (self.dimension,):
                    raise DimensionMismatchError(f"cls vector for {doc_id!r} has shape {vec.shape}")
                if not np.isfinite(vec).all():
                    raise ValueError(f"cls vector for {doc_id!r} is non-finite")
                vec.setflags(write=False)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def document(self, doc_id: str) -> tuple[np.ndarray, ...]:
        return self.docs[doc_id]

    def sentence_count(self, doc_id: str) -> int:
        return sum(arr.shape[0] for arr in self.docs[doc_id])

    def validate_against(self, corpus: Corpus) -> None:
        """Enforce shape isomorphism with a parsed corpus."""
        corpus_ids = set(corpus.ids)
        stored_ids = set(self.docs)
        if corpus_ids != stored_ids:
            missing = sorted(corpus_ids - stored_ids)
            extra = sorted(stored_ids - corpus_ids)
            raise ShapeMismatchError(
                f"document id mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}"
            )
        for doc in corpus.documents:
            stored = self.docs[doc.id]
            want = doc.sentence_counts()
            got = tuple(arr.shape[0] for arr in stored)
            if want != got:
                raise ShapeMismatchError(
                    f"document {doc.id!r}: corpus sentence counts {want} vs stored {got}"
                )


def embed_corpus(provider: EmbeddingProvider, corpus: Corpus, workers: int = 1) -> EmbeddedCorpus:
    """Embed every sentence exactly once, preserving structure.

    Providers that declare ``concurrency_safe`` may be invoked from a pool of
    worker threads; unsafe providers are always called sequentially. Results
    are identical either way.
    """
    tasks: list[tuple[str, int, int, str]] = []
    for doc in corpus.documents:
        for paragraph in doc.paragraphs:
            for sentence in paragraph.sentences:
                tasks.append((doc.id, paragraph.index_in_document, sentence.index_in_paragraph, sentence.text))

    def run(task: tuple[str, int, int, str]) -> np.ndarray:
        doc_id, p_idx, s_idx, text = task
        try:
            vec = np.asarray(provider.embed(text), dtype=np.float32)
        except Exception as exc:
            raise EmbeddingError(
                f"provider failed on document {doc_id!r}, paragraph {p_idx}, sentence {s_idx}: {exc}"
            ) from exc
        if vec.shape != (provider.dimension,):
            raise EmbeddingError(
                f"provider returned shape {vec.shape} for document {doc_id!r}, "
                f"paragraph {p_idx}, sentence {s_idx}"
            )
        return vec

    if workers > 1 and getattr(provider, "concurrency_safe", False):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(run, tasks))
    else:
        vectors = [run(t) for t in tasks]

    docs: dict[str, tuple[np.ndarray, ...]] = {}
    cursor = 0
    for doc in corpus.documents:
        paragraphs = []
        for paragraph in doc.paragraphs:
            n = len(paragraph.sentences)
            paragraphs.append(np.stack(vectors[cursor : cursor + n]))
            cursor += n
        docs[doc.id] = tuple(paragraphs)
    return EmbeddedCorpus(dimension=provider.dimension, docs=docs)


class _Reader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise TruncatedStoreError(
                f"needed {n} bytes at offset {self._pos}, only {len(self._data) - self._pos} left"
            )
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def floats(self, count: int) -> np.ndarray:
        raw = self.take(count * 4)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    @property
    def exhausted(self) -> bool:
        return self._pos == len(self._data)


def save_embeddings(ec: EmbeddedCorpus, path: str | Path) -> None:
    """Write the binary store: SDRE header, per-document structure, float32 payloads."""
    parts: list[bytes] = [STORE_MAGIC, struct.pack("<HII", STORE_VERSION, ec.dimension, len(ec.docs))]
    for doc_id, paragraphs in ec.docs.items():
        encoded = doc_id.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", len(paragraphs)))
        for arr in paragraphs:
            parts.append(struct.pack("<I", arr.shape[0]))
        for arr in paragraphs:
            if not np.isfinite(arr).all():
                raise ValueError(f"refusing to save non-finite vectors for document {doc_id!r}")
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if ec.cls is not None:
        parts.append(_CLS_MAGIC)
        for doc_id in ec.docs:
            vec = ec.cls[doc_id]
            if not np.isfinite(vec).all():
                raise ValueError(f"refusing to save non-finite cls vector for document {doc_id!r}")
            parts.append(np.ascontiguousarray(vec, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def _load_binary(data: bytes) -> EmbeddedCorpus:
    reader = _Reader(data)
    magic = reader.take(4)
    if magic != STORE_MAGIC:
        raise StoreError(f"bad magic {magic!r}: not an embedding store")
    version = reader.u16()
    if version != STORE_VERSION:
        raise UnknownStoreVersionError(f"unsupported store version {version}")
    dimension = reader.u32()
    if dimension < 1:
        raise StoreError("store declares a zero dimension")
    doc_count = reader.u32()
    docs: dict[str, tuple[np.ndarray, ...]] = {}
    for _ in range(doc_count):
        id_len = reader.u32()
        doc_id = reader.take(id_len).decode("utf-8")
        if doc_id in docs:
            raise StoreError(f"duplicate document id {doc_id!r} in store")
        para_count = reader.u32()
        if para_count < 1:
            raise StoreError(f"document {doc_id!r} has no paragraphs")
        counts = [reader.u32() for _ in range(para_count)]
        paragraphs = []
        for count in counts:
            if count < 1:
                raise StoreError(f"document {doc_id!r} has an empty paragraph")
            paragraphs.append(reader.floats(count * dimension).reshape(count, dimension))
        docs[doc_id] = tuple(paragraphs)
    cls: dict[str, np.ndarray] | None = None
    if not reader.exhausted:
        marker = reader.take(4)
        if marker != _CLS_MAGIC:
            raise StoreError(f"unexpected trailing section {marker!r}")
        cls = {doc_id: reader.floats(dimension) for doc_id in docs}
        if not reader.exhausted:
            raise StoreError("unexpected data after cls section")
    if not docs:
        raise StoreError("store contains no documents")
    try:
        return EmbeddedCorpus(dimension=dimension, docs=docs, cls=cls)
    except ValueError as exc:
        raise StoreError(str(exc)) from exc


def _load_jsonl(text: str) -> EmbeddedCorpus:
    docs: dict[str, tuple[np.ndarray, ...]] = {}
    cls: dict[str, np.ndarray] = {}
    dimension: int | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StoreError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        doc_id = record.get("id")
        paragraphs_raw = record.get("paragraphs")
        if not isinstance(doc_id, str) or not isinstance(paragraphs_raw, list):
            raise StoreError(f"line {lineno}: expected 'id' and 'paragraphs'")
        if doc_id in docs:
            raise StoreError(f"line {lineno}: duplicate document id {doc_id!r}")
        paragraphs = []
        for p in paragraphs_raw:
            arr = np.asarray(p, dtype=np.float32)
            if arr.ndim != 2:
                raise StoreError(f"line {lineno}: paragraph is not a list of vectors")
            if dimension is None:
                dimension = int(arr.shape[1])
            if arr.shape[1] != dimension:
                raise DimensionMismatchError(
                    f"line {lineno}: vector dimension {arr.shape[1]} vs store dimension {dimension}"
                )
            paragraphs.append(arr)
        docs[doc_id] = tuple(paragraphs)
        if "cls" in record and record["cls"] is not None:
            cls[doc_id] = np.asarray(record["cls"], dtype=np.float32)
    if not docs or dimension is None:
        raise StoreError("JSONL store contains no documents")
    cls_out: dict[str, np.ndarray] | None = None
    if cls:
        if set(cls) != set(docs):
            raise StoreError("cls vectors present for only some documents")
        cls_out = cls
    try:
        return EmbeddedCorpus(dimension=dimension, docs=docs, cls=cls_out)
    except ValueError as exc:
        raise StoreError(str(exc)) from exc


def load_embeddings(path: str | Path, expect_dimension: int | None = None) -> EmbeddedCorpus:
    """Load a binary (SDRE) or JSONL debug store, validating payload integrity."""
    data = Path(path).read_bytes()
    if data[:4] == STORE_MAGIC:
        ec = _load_binary(data)
    else:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreError("file is neither a binary store nor UTF-8 JSONL") from exc
        ec = _load_jsonl(text)
    if expect_dimension is not None and ec.dimension != expect_dimension:
        raise DimensionMismatchError(
            f"store dimension {ec.dimension} does not match expected {expect_dimension}"
        )
    return ec


def save_embeddings_jsonl(ec: EmbeddedCorpus, target: str | Path | IO[str]) -> None:
    """Write the JSONL debug form of a store (vectors as decimal arrays)."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            save_embeddings_jsonl(ec, fh)
        return
    for doc_id, paragraphs in ec.docs.items():
        record: dict = {
            "id": doc_id,
            "paragraphs": [[[float(x) for x in row] for row in arr] for arr in paragraphs],
        }
        if ec.cls is not None:
            record["cls"] = [float(x) for x in ec.cls[doc_id]]
        target.write(json.dumps(record) + "\n")
