"""Retrieval metrics over ranked lists: mean percentile rank, MRR, hit ratio at k."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping, Sequence


class EvalError(ValueError):
    """Ground truth and rankings disagree (missing source, unknown candidate, bad k)."""


@dataclass(frozen=True)
class GroundTruth:
    """Annotated similar candidates per source document."""

    similar: dict[str, frozenset[str]]

    def __post_init__(self) -> None:
        if not self.similar:
            raise EvalError("ground truth is empty")
        for source, candidates in self.similar.items():
            if not candidates:
                raise EvalError(f"source {source!r} has no annotated candidates")
            if source in candidates:
                raise EvalError(f"source {source!r} annotates itself")

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(self.similar)

    @classmethod
    def load(cls, source: str | Path | IO[str]) -> "GroundTruth":
        """Read JSONL lines of {"source": id, "similar": [id, ...]}."""
        if isinstance(source, (str, Path)):
            with open(source, "r", encoding="utf-8") as fh:
                return cls.load(fh)
        similar: dict[str, frozenset[str]] = {}
        for lineno, line in enumerate(source, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            src = record.get("source")
            cands = record.get("similar")
            if not isinstance(src, str) or not isinstance(cands, list):
                raise EvalError(f"line {lineno}: expected 'source' and 'similar'")
            if src in similar:
                raise EvalError(f"line {lineno}: duplicate source {src!r}")
            similar[src] = frozenset(cands)
        return cls(similar)


def percentile_rank(rank: int, n_candidates: int) -> float:
    """Map a 1-based rank onto [0, 1]; the top rank scores 1, the bottom 0."""
    if n_candidates < 2:
        raise EvalError("percentile rank needs at least 2 candidates")
    if not 1 <= rank <= n_candidates:
        raise EvalError(f"rank {rank} outside [1, {n_candidates}]")
    return 1.0 - (rank - 1) / (n_candidates - 1)


def _rank_positions(
    rankings: Mapping[str, Sequence[str]], gt: GroundTruth
) -> dict[str, dict[str, int]]:
    """Per source, 1-based rank of every true candidate; validates coverage."""
    positions: dict[str, dict[str, int]] = {}
    for source, true_ids in gt.similar.items():
        if source not in rankings:
            raise EvalError(f"no ranked list for ground-truth source {source!r}")
        order = list(rankings[source])
        index = {cid: i + 1 for i, cid in enumerate(order)}
        ranks = {}
        for cid in sorted(true_ids):
            if cid not in index:
                raise EvalError(f"ground-truth candidate {cid!r} missing from ranking of {source!r}")
            ranks[cid] = index[cid]
        positions[source] = ranks
    return positions


def mpr(rankings: Mapping[str, Sequence[str]], gt: GroundTruth) -> float:
    """Mean percentile rank over every (source, true candidate) pair."""
    positions = _rank_positions(rankings, gt)
    values = [
        percentile_rank(r, len(rankings[source]))
        for source, ranks in positions.items()
        for r in ranks.values()
    ]
    return sum(values) / len(values)


def mrr(rankings: Mapping[str, Sequence[str]], gt: GroundTruth) -> float:
    """Mean over sources of the reciprocal of the best true candidate's rank."""
    positions = _rank_positions(rankings, gt)
    values = [1.0 / min(ranks.values()) for ranks in positions.values()]
    return sum(values) / len(values)


def hr_at_k(rankings: Mapping[str, Sequence[str]], gt: GroundTruth, k: int) -> float:
    """Mean over sources of the fraction of true candidates inside the top k."""
    if k < 1:
        raise EvalError("k must be >= 1")
    positions = _rank_positions(rankings, gt)
    values = [
        sum(1 for r in ranks.values() if r <= k) / len(ranks) for ranks in positions.values()
    ]
    return sum(values) / len(values)


@dataclass(frozen=True)
class MetricsReport:
    mpr: float
    mrr: float
    hr: dict[int, float]
    per_source: dict[str, dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "aggregate": {
                "mpr": self.mpr,
                "mrr": self.mrr,
                "hr": {str(k): v for k, v in sorted(self.hr.items())},
            },
            "per_source": {
                source: {
                    key: ({str(k): x for k, x in sorted(val.items())} if isinstance(val, dict) else val)
                    for key, val in metrics.items()
                }
                for source, metrics in self.per_source.items()
            },
        }

    def write_json(self, target: str | Path, pretty: bool = False) -> None:
        payload = json.dumps(self.to_dict(), indent=2 if pretty else None, sort_keys=False)
        Path(target).write_text(payload + "\n", encoding="utf-8")


def evaluate(
    rankings: Mapping[str, Sequence[str]], gt: GroundTruth, ks: Sequence[int] = (10, 100)
) -> MetricsReport:
    """All metrics at once, with a per-source breakdown.

    The aggregate MPR pools every (source, true candidate) pair; MRR and
    HR@k average per-source values.
    """
    if not ks or any(k < 1 for k in ks):
        raise EvalError("ks must be a non-empty list of positive integers")
    positions = _rank_positions(rankings, gt)
    per_source: dict[str, dict[str, float]] = {}
    pooled_pr: list[float] = []
    for source, ranks in positions.items():
        n = len(rankings[source])
        prs = [percentile_rank(r, n) for r in ranks.values()]
        pooled_pr.extend(prs)
        per_source[source] = {
            "mpr": sum(prs) / len(prs),
            "mrr": 1.0 / min(ranks.values()),
            "hr": {k: sum(1 for r in ranks.values() if r <= k) / len(ranks) for k in ks},
            "n_true": len(ranks),
        }
    n_sources = len(per_source)
    return MetricsReport(
        mpr=sum(pooled_pr) / len(pooled_pr),
        mrr=sum(m["mrr"] for m in per_source.values()) / n_sources,
        hr={
            k: sum(m["hr"][k] for m in per_source.values()) / n_sources for k in ks
        },
        per_source=per_source,
    )
