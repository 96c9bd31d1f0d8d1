from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import pytest

from docsim.corpus import parse_corpus
from docsim.embedding import EmbeddedCorpus

FIXTURES = Path(__file__).parent / "fixtures"


def random_embedded(
    rng: np.random.Generator,
    n_docs: int | None = None,
    max_paragraphs: int = 3,
    max_sentences: int = 4,
    dim: int | None = None,
) -> EmbeddedCorpus:
    """Random gaussian float32 corpus within the reference-check size bounds."""
    if n_docs is None:
        n_docs = int(rng.integers(2, 6))
    if dim is None:
        dim = int(rng.integers(2, 9))
    docs = {}
    for d in range(n_docs):
        paragraphs = []
        for _ in range(int(rng.integers(1, max_paragraphs + 1))):
            n_sent = int(rng.integers(1, max_sentences + 1))
            paragraphs.append(rng.standard_normal((n_sent, dim)).astype(np.float32))
        docs[f"doc{d:02d}"] = tuple(paragraphs)
    return EmbeddedCorpus(dimension=dim, docs=docs)


def embedded_to_plain(ec: EmbeddedCorpus) -> dict[str, list[list[list[float]]]]:
    return {
        doc_id: [[list(map(float, row)) for row in arr] for arr in paragraphs]
        for doc_id, paragraphs in ec.docs.items()
    }


def corpus_from_jsonl(text: str):
    return parse_corpus(io.StringIO(text))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def small_corpus():
    records = "\n".join(
        [
            '{"id": "a", "title": "Alpha", "sections": ["Hello world. Bye now.", "Second block here. It has two sentences."]}',
            '{"id": "b", "title": "Beta", "sections": ["Something else entirely. Quite different text lives here."]}',
            '{"id": "c", "title": "Gamma", "sections": ["Hello world. Bye then.", "Another block of text. Still more words."]}',
        ]
    )
    return corpus_from_jsonl(records + "\n")
