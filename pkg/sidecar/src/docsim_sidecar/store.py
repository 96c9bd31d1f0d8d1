"""Writer for the engine's binary embedding store.

Layout (all integers little-endian): magic "SDRE", version u16, dimension
u32, document count u32; per document a u32-length-prefixed UTF-8 id, u32
paragraph count, u32 sentence count per paragraph, then the float32 sentence
vectors in order. An optional trailing "CLSV" section carries one vector per
document. The engine is the source of truth for this format; its loader
validates everything written here.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDRE"
VERSION = 1
CLS_MAGIC = b"CLSV"


def write_store(
    path: str | Path,
    dimension: int,
    docs: dict[str, list[np.ndarray]],
    cls: dict[str, np.ndarray] | None = None,
) -> None:
    parts = [MAGIC, struct.pack("<HII", VERSION, dimension, len(docs))]
    for doc_id, paragraphs in docs.items():
        encoded = doc_id.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", len(paragraphs)))
        for arr in paragraphs:
            if arr.ndim != 2 or arr.shape[1] != dimension:
                raise ValueError(f"document {doc_id!r}: bad paragraph shape {arr.shape}")
            parts.append(struct.pack("<I", arr.shape[0]))
        for arr in paragraphs:
            if not np.isfinite(arr).all():
                raise ValueError(f"document {doc_id!r}: non-finite embedding")
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if cls is not None:
        parts.append(CLS_MAGIC)
        for doc_id in docs:
            vec = cls[doc_id]
            if vec.shape != (dimension,):
                raise ValueError(f"document {doc_id!r}: bad cls shape {vec.shape}")
            if not np.isfinite(vec).all():
                raise ValueError(f"document {doc_id!r}: non-finite cls vector")
            parts.append(np.ascontiguousarray(vec, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))
