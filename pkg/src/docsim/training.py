"""Self-supervised contrastive training: pair sampling, margin loss, toy embedding model.

Positive pairs are two distinct sentences from the same paragraph; negative
pairs come from two different documents. The toy model is a trainable
bag-of-tokens embedding matrix whose sentence vector is the mean of its
token rows, optimized with plain SGD on the contrastive term.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .embedding import EmbeddedCorpus, load_embeddings, save_embeddings
from .scoring import cosine


class SamplingError(ValueError):
    """The corpus cannot supply the requested pair type."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite; message carries the step index."""


@dataclass(frozen=True)
class SentenceRef:
    doc_id: str
    paragraph: int
    sentence: int


@dataclass(frozen=True)
class SentencePair:
    p: SentenceRef
    q: SentenceRef
    y: int  # 1 = same paragraph, 0 = different documents


@dataclass
class ContrastiveConfig:
    margin: float = 1.0
    learning_rate: float = 0.05
    steps: int = 2000
    seed: int = 0
    dim: int = 16
    intra_probability: float = 0.5
    eval_pairs: int = 128
    eval_every: int = 25

    def __post_init__(self) -> None:
        if not 0.0 < self.margin <= 2.0:
            raise ValueError(f"margin must be in (0, 2], got {self.margin}")
        if self.learning_rate < 0.0:
            raise ValueError("learning rate must be non-negative")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not 0.0 <= self.intra_probability <= 1.0:
            raise ValueError("intra_probability must be in [0, 1]")


class PairSampler:
    """Samples sentence pairs: intra (same paragraph) with a coin flip, else inter."""

    def __init__(self, corpus: Corpus, p_intra: float = 0.5):
        self.p_intra = p_intra
        self._multi: list[tuple[str, int, int]] = []  # (doc_id, paragraph, sentence_count)
        self._doc_sentences: list[tuple[str, list[tuple[int, int]]]] = []
        for doc in corpus.documents:
            flat: list[tuple[int, int]] = []
            for paragraph in doc.paragraphs:
                n = len(paragraph.sentences)
                if n >= 2:
                    self._multi.append((doc.id, paragraph.index_in_document, n))
                flat.extend((paragraph.index_in_document, s) for s in range(n))
            self._doc_sentences.append((doc.id, flat))
        if p_intra > 0.0 and not self._multi:
            raise SamplingError("no paragraph with at least 2 sentences: intra sampling impossible")
        if p_intra < 1.0 and len(self._doc_sentences) < 2:
            raise SamplingError("inter sampling requires at least 2 documents")

    def sample(self, rng: np.random.Generator) -> SentencePair:
        if rng.random() < self.p_intra:
            return self.sample_intra(rng)
        return self.sample_inter(rng)

    def sample_intra(self, rng: np.random.Generator) -> SentencePair:
        if not self._multi:
            raise SamplingError("no paragraph with at least 2 sentences: intra sampling impossible")
        doc_id, p_idx, n = self._multi[rng.integers(len(self._multi))]
        first = int(rng.integers(n))
        second = int(rng.integers(n - 1))
        if second >= first:
            second += 1
        return SentencePair(
            p=SentenceRef(doc_id, p_idx, first),
            q=SentenceRef(doc_id, p_idx, second),
            y=1,
        )

    def sample_inter(self, rng: np.random.Generator) -> SentencePair:
        if len(self._doc_sentences) < 2:
            raise SamplingError("inter sampling requires at least 2 documents")
        d1 = int(rng.integers(len(self._doc_sentences)))
        d2 = int(rng.integers(len(self._doc_sentences) - 1))
        if d2 >= d1:
            d2 += 1
        doc1, flat1 = self._doc_sentences[d1]
        doc2, flat2 = self._doc_sentences[d2]
        p1, s1 = flat1[rng.integers(len(flat1))]
        p2, s2 = flat2[rng.integers(len(flat2))]
        return SentencePair(p=SentenceRef(doc1, p1, s1), q=SentenceRef(doc2, p2, s2), y=0)


def sample_pair(corpus: Corpus, rng: np.random.Generator, p_intra: float = 0.5) -> SentencePair:
    """One-shot pair draw; build a PairSampler directly for repeated sampling."""
    return PairSampler(corpus, p_intra=p_intra).sample(rng)


def contrastive_loss(f_p: np.ndarray, f_q: np.ndarray, y: int, margin: float = 1.0) -> float:
    """Margin contrastive loss on the cosine of two sentence vectors.

    Positive pairs (y=1) pay 1 - cos; negative pairs (y=0) pay the amount by
    which their cosine exceeds 1 - margin, and nothing once they fall below it.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    c = cosine(f_p, f_q)
    if y == 1:
        return 1.0 - c
    return max(0.0, c - (1.0 - margin))


def contrastive_grad(
    f_p: np.ndarray, f_q: np.ndarray, y: int, margin: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the contrastive loss w.r.t. both vectors.

    The hinge gradient is defined as zero exactly at the kink.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    p = np.asarray(f_p, dtype=np.float64)
    q = np.asarray(f_q, dtype=np.float64)
    np_norm = np.linalg.norm(p)
    nq_norm = np.linalg.norm(q)
    if np_norm == 0.0 or nq_norm == 0.0:
        raise ValueError("gradient undefined for zero-norm input")
    c = float(p @ q / (np_norm * nq_norm))
    dc_dp = q / (np_norm * nq_norm) - c * p / (np_norm * np_norm)
    dc_dq = p / (np_norm * nq_norm) - c * q / (nq_norm * nq_norm)
    if y == 1:
        return -dc_dp, -dc_dq
    if c - (1.0 - margin) > 0.0:
        return dc_dp, dc_dq
    zero = np.zeros_like(p)
    return zero, zero.copy()


@dataclass
class ToyModel:
    """Trainable token embedding matrix; sentence vector is the mean of token rows."""

    tokens: tuple[str, ...]
    matrix: np.ndarray  # (vocab, dim) float32
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.tokens):
            raise ValueError("matrix rows must match the vocabulary size")
        if not np.isfinite(self.matrix).all():
            raise ValueError("model matrix contains non-finite entries")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    concurrency_safe = True

    def token_rows(self, text: str) -> np.ndarray:
        words = text.split()
        if not words:
            raise ValueError("cannot embed empty text")
        try:
            return np.array([self._index[w] for w in words], dtype=np.intp)
        except KeyError as exc:
            raise KeyError(f"token {exc.args[0]!r} not in model vocabulary") from None

    def embed(self, text: str) -> np.ndarray:
        rows = self.token_rows(text)
        return self.matrix[rows].astype(np.float64).mean(axis=0).astype(np.float32)

    def save(self, store_path: str | Path, vocab_path: str | Path) -> None:
        """Checkpoint: matrix in the embedding-store format plus a vocabulary sidecar."""
        ec = EmbeddedCorpus(
            dimension=self.dimension,
            docs={"__toy_model__": (self.matrix.copy(),)},
        )
        save_embeddings(ec, store_path)
        Path(vocab_path).write_text(
            json.dumps({"tokens": list(self.tokens), "dimension": self.dimension}) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, store_path: str | Path, vocab_path: str | Path) -> "ToyModel":
        ec = load_embeddings(store_path)
        meta = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        tokens = tuple(meta["tokens"])
        (matrix,) = ec.docs["__toy_model__"]
        if matrix.shape != (len(tokens), meta["dimension"]):
            raise ValueError("checkpoint matrix shape does not match vocabulary sidecar")
        return cls(tokens=tokens, matrix=matrix.copy())


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss: float
    mean_intra_cos: float
    mean_inter_cos: float


@dataclass
class TrainResult:
    model: ToyModel
    trace: list[TraceRow]
    config: ContrastiveConfig

    def write_trace_csv(self, target: str | Path) -> None:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "mean_intra_cos", "mean_inter_cos"])
            for row in self.trace:
                writer.writerow([row.step, repr(row.loss), repr(row.mean_intra_cos), repr(row.mean_inter_cos)])


def _sentence_text(corpus: Corpus, ref: SentenceRef) -> str:
    return corpus[ref.doc_id].paragraphs[ref.paragraph].sentences[ref.sentence].text


def build_vocabulary(corpus: Corpus) -> tuple[str, ...]:
    tokens: set[str] = set()
    for doc in corpus.documents:
        for sentence in doc.iter_sentences():
            tokens.update(sentence.text.split())
    return tuple(sorted(tokens))


def train_toy(corpus: Corpus, cfg: ContrastiveConfig) -> TrainResult:
    """Stream sampled pairs through SGD on the contrastive loss.

    Deterministic given cfg.seed. The trace logs per-step loss plus the mean
    cosine of fixed held-out intra and inter pair sets, refreshed every
    ``eval_every`` steps. Raises DivergenceError if the loss turns non-finite.
    """
    train_seq, eval_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng_train = np.random.default_rng(train_seq)
    rng_eval = np.random.default_rng(eval_seq)

    sampler = PairSampler(corpus, p_intra=cfg.intra_probability)
    tokens = build_vocabulary(corpus)
    matrix = rng_train.uniform(-0.5 / cfg.dim, 0.5 / cfg.dim, size=(len(tokens), cfg.dim)).astype(
        np.float32
    )
    model = ToyModel(tokens=tokens, matrix=matrix)

    intra_eval = [sampler.sample_intra(rng_eval) for _ in range(cfg.eval_pairs)]
    inter_eval = (
        [sampler.sample_inter(rng_eval) for _ in range(cfg.eval_pairs)]
        if len(corpus) >= 2
        else []
    )

    def row_indices(ref: SentenceRef) -> np.ndarray:
        return model.token_rows(_sentence_text(corpus, ref))

    def sentence_vec(rows: np.ndarray) -> np.ndarray:
        return matrix[rows].astype(np.float64).mean(axis=0)

    def eval_mean_cos(pairs: list[SentencePair]) -> float:
        if not pairs:
            return float("nan")
        total = 0.0
        for pair in pairs:
            total += cosine(sentence_vec(row_indices(pair.p)), sentence_vec(row_indices(pair.q)))
        return total / len(pairs)

    trace: list[TraceRow] = []
    mean_intra = eval_mean_cos(intra_eval)
    mean_inter = eval_mean_cos(inter_eval)
    for step in range(1, cfg.steps + 1):
        pair = sampler.sample(rng_train)
        rows_p = row_indices(pair.p)
        rows_q = row_indices(pair.q)
        f_p = sentence_vec(rows_p)
        f_q = sentence_vec(rows_q)
        loss = contrastive_loss(f_p, f_q, pair.y, cfg.margin)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at step {step}")
        g_p, g_q = contrastive_grad(f_p, f_q, pair.y, cfg.margin)
        np.subtract.at(matrix, rows_p, (cfg.learning_rate * g_p / len(rows_p)).astype(np.float32))
        np.subtract.at(matrix, rows_q, (cfg.learning_rate * g_q / len(rows_q)).astype(np.float32))
        if step % cfg.eval_every == 0 or step == cfg.steps:
            mean_intra = eval_mean_cos(intra_eval)
            mean_inter = eval_mean_cos(inter_eval)
        trace.append(TraceRow(step=step, loss=loss, mean_intra_cos=mean_intra, mean_inter_cos=mean_inter))
    return TrainResult(model=model, trace=trace, config=cfg)
