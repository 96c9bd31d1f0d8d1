"""Two-stage hierarchical similarity inference and baseline ranking modes.

Stage one scores every paragraph pair by the mean over source sentences of
the best cosine match in the candidate paragraph. Stage two z-scores each
source-paragraph row of the resulting paragraph matrix against all candidates,
then reduces to a total score by the mean of row maxima. Candidates are
ranked by descending total score.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .embedding import EmbeddedCorpus

SIGMA_FLOOR = 1e-12

MODES = ("sdr", "paragraph", "first", "all", "cls")


class ZeroVectorError(ValueError):
    """A vector with zero norm reached a cosine computation."""


class RankingError(ValueError):
    """The ranking request cannot be satisfied (bad source, mode, or corpus size)."""


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity with float64 accumulation, clamped to [-1, 1]."""
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    if a64.shape != b64.shape:
        raise ValueError(f"dimension mismatch: {a64.shape} vs {b64.shape}")
    na = np.linalg.norm(a64)
    nb = np.linalg.norm(b64)
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for zero-norm input")
    return float(np.clip(a64 @ b64 / (na * nb), -1.0, 1.0))


def _unit_rows(arr: np.ndarray, label: str) -> np.ndarray:
    rows = np.asarray(arr, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorError(f"{label}: sentence {int(zero[0])} has zero norm")
    return rows / norms[:, None]


def sentence_sim_matrix(source_paragraph: np.ndarray, candidate_paragraph: np.ndarray) -> np.ndarray:
    """Pairwise sentence cosines for one paragraph pair; entry (k, r) in [-1, 1]."""
    s = _unit_rows(source_paragraph, "source paragraph")
    c = _unit_rows(candidate_paragraph, "candidate paragraph")
    if s.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: {s.shape[1]} vs {c.shape[1]}")
    return np.clip(s @ c.T, -1.0, 1.0)


def paragraph_score(sentence_matrix: np.ndarray) -> float:
    """Mean over source-sentence rows of the best candidate-sentence match."""
    m = np.asarray(sentence_matrix, dtype=np.float64)
    if m.size == 0:
        raise ValueError("sentence similarity matrix is empty")
    return float(m.max(axis=1).mean())


def paragraph_sim_matrix(
    source_doc: Sequence[np.ndarray], candidate_doc: Sequence[np.ndarray]
) -> np.ndarray:
    """Paragraph-pair scores for one document pair; asymmetric in its arguments."""
    if not len(source_doc) or not len(candidate_doc):
        raise ValueError("documents must contain at least one paragraph")
    src = [_unit_rows(p, f"source paragraph {i}") for i, p in enumerate(source_doc)]
    cand = [_unit_rows(p, f"candidate paragraph {j}") for j, p in enumerate(candidate_doc)]
    return _pair_matrix(src, cand)


def _pair_matrix(src_unit: list[np.ndarray], cand_unit: list[np.ndarray]) -> np.ndarray:
    out = np.empty((len(src_unit), len(cand_unit)), dtype=np.float64)
    for i, s in enumerate(src_unit):
        for j, c in enumerate(cand_unit):
            m = np.clip(s @ c.T, -1.0, 1.0)
            out[i, j] = m.max(axis=1).mean()
    return out


@dataclass(frozen=True)
class NormalizationStats:
    """Per source-paragraph-row mean and population standard deviation of pooled scores."""

    mean: np.ndarray
    std: np.ndarray
    pool: str = "cells"


def global_normalize(
    matrices: Mapping[str, np.ndarray], pool: str = "cells"
) -> tuple[dict[str, np.ndarray], NormalizationStats]:
    """Z-score each source row of every paragraph matrix against all candidates.

    ``pool`` selects which values feed the row statistics: every matrix cell
    of the row ("cells", the default) or only each candidate's row maximum
    ("rowmax"). Rows whose pooled standard deviation falls below the floor
    normalize to all zeros.
    """
    if not matrices:
        raise ValueError("global_normalize requires at least one candidate matrix")
    if pool not in ("cells", "rowmax"):
        raise ValueError(f"unknown normalization pool {pool!r}")
    mats = {cid: np.asarray(m, dtype=np.float64) for cid, m in matrices.items()}
    rows = next(iter(mats.values())).shape[0]
    for cid, m in mats.items():
        if m.ndim != 2 or m.shape[0] != rows:
            raise ValueError(f"candidate {cid!r}: expected {rows} source rows, got shape {m.shape}")

    if pool == "cells":
        count = sum(m.shape[1] for m in mats.values())
        mu = np.zeros(rows, dtype=np.float64)
        for m in mats.values():
            mu += m.sum(axis=1)
        mu /= count
        var = np.zeros(rows, dtype=np.float64)
        for m in mats.values():
            var += ((m - mu[:, None]) ** 2).sum(axis=1)
        var /= count
    else:
        maxes = np.stack([m.max(axis=1) for m in mats.values()], axis=1)
        mu = maxes.mean(axis=1)
        var = ((maxes - mu[:, None]) ** 2).mean(axis=1)

    sigma = np.sqrt(var)
    degenerate = sigma < SIGMA_FLOOR
    safe_sigma = np.where(degenerate, 1.0, sigma)
    normalized = {}
    for cid, m in mats.items():
        z = (m - mu[:, None]) / safe_sigma[:, None]
        z[degenerate, :] = 0.0
        normalized[cid] = z
    return normalized, NormalizationStats(mean=mu, std=sigma, pool=pool)


def total_score(paragraph_matrix: np.ndarray) -> float:
    """Mean over source-paragraph rows of the best candidate-paragraph match."""
    m = np.asarray(paragraph_matrix, dtype=np.float64)
    if m.size == 0:
        raise ValueError("paragraph similarity matrix is empty")
    return float(m.max(axis=1).mean())


@dataclass(frozen=True)
class PairExplain:
    """One paragraph pair that contributed to a candidate's score."""

    i: int
    j: int
    raw: float
    normalized: float | None


@dataclass(frozen=True)
class RankEntry:
    id: str
    score: float
    top_pairs: tuple[PairExplain, ...] | None = None


@dataclass(frozen=True)
class RankedList:
    """Candidates ordered by descending score, ties broken by ascending id."""

    source: str
    mode: str
    normalize: bool
    entries: tuple[RankEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ordered_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.entries)


def _document_vector(paragraphs: Sequence[np.ndarray], prefix: int | None = None) -> np.ndarray:
    stacked = np.concatenate([np.asarray(p, dtype=np.float64) for p in paragraphs], axis=0)
    if prefix is not None:
        stacked = stacked[:prefix]
    vec = stacked.mean(axis=0)
    if np.linalg.norm(vec) == 0.0:
        raise ZeroVectorError("document mean vector has zero norm")
    return vec


def _paragraph_means(paragraphs: Sequence[np.ndarray]) -> np.ndarray:
    means = np.stack([np.asarray(p, dtype=np.float64).mean(axis=0) for p in paragraphs])
    norms = np.linalg.norm(means, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorError(f"paragraph {int(zero[0])} mean vector has zero norm")
    return means / norms[:, None]


def _top_pairs(raw: np.ndarray, normalized: np.ndarray | None, limit: int = 3) -> tuple[PairExplain, ...]:
    basis = normalized if normalized is not None else raw
    flat = [(-basis[i, j], i, j) for i in range(basis.shape[0]) for j in range(basis.shape[1])]
    flat.sort()
    pairs = []
    for neg, i, j in flat[:limit]:
        pairs.append(
            PairExplain(
                i=i,
                j=j,
                raw=float(raw[i, j]),
                normalized=float(normalized[i, j]) if normalized is not None else None,
            )
        )
    return tuple(pairs)


def rank(
    source_id: str,
    ec: EmbeddedCorpus,
    mode: str = "sdr",
    normalize: bool = True,
    first_window: int = 16,
    workers: int = 1,
    norm_pool: str = "cells",
    explain: bool = False,
) -> RankedList:
    """Rank every other document against the source.

    Modes: ``sdr`` runs the full sentence-to-paragraph hierarchy with global
    normalization; ``paragraph`` scores paragraph mean vectors directly;
    ``first`` and ``all`` compare document mean vectors over the first
    ``first_window`` sentences or all sentences; ``cls`` compares stored
    per-document classifier vectors. ``normalize=False`` skips the z-scoring
    stage (only meaningful for the matrix modes).
    """
    if mode not in MODES:
        raise RankingError(f"unknown mode {mode!r}; expected one of {MODES}")
    if source_id not in ec:
        raise RankingError(f"unknown source id {source_id!r}")
    candidates = [doc_id for doc_id in ec.docs if doc_id != source_id]
    if not candidates:
        raise RankingError("ranking requires at least one candidate document")
    if first_window < 1:
        raise RankingError("first_window must be >= 1")

    if mode in ("sdr", "paragraph"):
        scores, details = _rank_matrix_mode(
            source_id, ec, candidates, mode, normalize, workers, norm_pool, explain
        )
    else:
        scores = _rank_vector_mode(source_id, ec, candidates, mode, first_window)
        details = {}

    order = sorted(candidates, key=lambda cid: (-scores[cid], cid))
    entries = tuple(
        RankEntry(id=cid, score=scores[cid], top_pairs=details.get(cid)) for cid in order
    )
    return RankedList(source=source_id, mode=mode, normalize=normalize, entries=entries)


def _rank_matrix_mode(
    source_id: str,
    ec: EmbeddedCorpus,
    candidates: list[str],
    mode: str,
    normalize: bool,
    workers: int,
    norm_pool: str,
    explain: bool,
) -> tuple[dict[str, float], dict[str, tuple[PairExplain, ...]]]:
    if mode == "sdr":
        source_units = [
            _unit_rows(p, f"document {source_id!r} paragraph {i}")
            for i, p in enumerate(ec.docs[source_id])
        ]

        def matrix_for(cid: str) -> np.ndarray:
            cand_units = [
                _unit_rows(p, f"document {cid!r} paragraph {j}")
                for j, p in enumerate(ec.docs[cid])
            ]
            return _pair_matrix(source_units, cand_units)

    else:
        source_means = _paragraph_means(ec.docs[source_id])

        def matrix_for(cid: str) -> np.ndarray:
            cand_means = _paragraph_means(ec.docs[cid])
            return np.clip(source_means @ cand_means.T, -1.0, 1.0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            computed = list(pool.map(matrix_for, candidates))
        raw = dict(zip(candidates, computed))
    else:
        raw = {cid: matrix_for(cid) for cid in candidates}

    if normalize:
        normalized, _ = global_normalize(raw, pool=norm_pool)
        scored = normalized
    else:
        normalized = None
        scored = raw

    scores = {cid: total_score(scored[cid]) for cid in candidates}
    details: dict[str, tuple[PairExplain, ...]] = {}
    if explain:
        for cid in candidates:
            details[cid] = _top_pairs(raw[cid], normalized[cid] if normalized else None)
    return scores, details


def _rank_vector_mode(
    source_id: str,
    ec: EmbeddedCorpus,
    candidates: list[str],
    mode: str,
    first_window: int,
) -> dict[str, float]:
    if mode == "cls":
        if ec.cls is None:
            raise RankingError("mode 'cls' requires a store with per-document cls vectors")
        vectors = {doc_id: np.asarray(ec.cls[doc_id], dtype=np.float64) for doc_id in ec.docs}
    elif mode == "first":
        vectors = {
            doc_id: _document_vector(ec.docs[doc_id], prefix=first_window) for doc_id in ec.docs
        }
    else:
        vectors = {doc_id: _document_vector(ec.docs[doc_id]) for doc_id in ec.docs}
    source_vec = vectors[source_id]
    return {cid: cosine(source_vec, vectors[cid]) for cid in candidates}
