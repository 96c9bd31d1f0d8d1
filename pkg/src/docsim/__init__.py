"""docsim: rank long documents by semantic similarity via hierarchical per-sentence scoring."""

__version__ = "0.1.0"

from .corpus import Corpus, Document, Paragraph, Sentence, parse_corpus, serialize_corpus
from .embedding import EmbeddedCorpus, HashEmbedder, embed_corpus, load_embeddings, save_embeddings
from .scoring import RankedList, rank
from .training import ContrastiveConfig, ToyModel, train_toy
from .evaluation import GroundTruth, MetricsReport, evaluate

__all__ = [
    "Corpus",
    "Document",
    "Paragraph",
    "Sentence",
    "parse_corpus",
    "serialize_corpus",
    "EmbeddedCorpus",
    "HashEmbedder",
    "embed_corpus",
    "load_embeddings",
    "save_embeddings",
    "RankedList",
    "rank",
    "ContrastiveConfig",
    "ToyModel",
    "train_toy",
    "GroundTruth",
    "MetricsReport",
    "evaluate",
]
