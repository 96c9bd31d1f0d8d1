"""Seeded synthetic corpora: topic-pooled token text with optional boilerplate sections."""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Document, Paragraph, Sentence


def make_topic_corpus(
    n_topics: int = 5,
    docs_per_topic: int = 6,
    paragraphs_per_doc: int = 3,
    sentences_per_paragraph: int = 4,
    tokens_per_sentence: int = 6,
    topic_vocab: int = 40,
    shared_vocab: int = 60,
    shared_fraction: float = 0.3,
    boilerplate_paragraphs: int = 0,
    boilerplate_vocab: int = 40,
    seed: int = 0,
) -> tuple[Corpus, dict[str, list[str]]]:
    """Generate a topical corpus and its same-topic ground truth.

    Each document owns ``paragraphs_per_doc`` paragraphs drawn from its
    topic's token pool, with ``shared_fraction`` of token slots filled from a
    vocabulary common to all topics, plus ``boilerplate_paragraphs`` drawn
    from a pool shared by every document regardless of topic. Sentences are
    well formed (capitalized token first, terminal period) so the corpus
    survives a serialize/parse round trip unchanged.
    """
    if n_topics < 2 or docs_per_topic < 1:
        raise ValueError("need at least 2 topics and 1 document per topic")
    if sentences_per_paragraph < 2:
        raise ValueError("paragraphs need at least 2 sentences for pair sampling")
    rng = np.random.default_rng(seed)

    topic_pools = [
        [f"T{t}w{i}" for i in range(topic_vocab)] for t in range(n_topics)
    ]
    shared_pool = [f"Sh{i}" for i in range(shared_vocab)]
    boiler_pool = [f"Bp{i}" for i in range(boilerplate_vocab)]

    def sentence(pool: list[str], mix_shared: bool) -> str:
        words = []
        for _ in range(tokens_per_sentence):
            if mix_shared and rng.random() < shared_fraction:
                words.append(shared_pool[rng.integers(len(shared_pool))])
            else:
                words.append(pool[rng.integers(len(pool))])
        return " ".join(words) + "."

    def paragraph(pool: list[str], index: int, mix_shared: bool) -> Paragraph:
        sentences = tuple(
            Sentence(sentence(pool, mix_shared), s) for s in range(sentences_per_paragraph)
        )
        return Paragraph(sentences, index)

    documents = []
    gt: dict[str, list[str]] = {}
    ids_by_topic: list[list[str]] = [[] for _ in range(n_topics)]
    for topic in range(n_topics):
        for d in range(docs_per_topic):
            doc_id = f"topic{topic}_doc{d:02d}"
            ids_by_topic[topic].append(doc_id)
            paragraphs = [
                paragraph(topic_pools[topic], i, True) for i in range(paragraphs_per_doc)
            ]
            for b in range(boilerplate_paragraphs):
                paragraphs.append(paragraph(boiler_pool, paragraphs_per_doc + b, False))
            documents.append(
                Document(doc_id, f"Topic {topic} document {d}", tuple(paragraphs))
            )
    for topic in range(n_topics):
        for doc_id in ids_by_topic[topic]:
            gt[doc_id] = [other for other in ids_by_topic[topic] if other != doc_id]
    return Corpus(tuple(documents)), gt
