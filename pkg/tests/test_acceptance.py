"""Acceptance suite: one test per release criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from docsim.embedding import EmbeddedCorpus, HashEmbedder, embed_corpus
from docsim.evaluation import GroundTruth, evaluate, hr_at_k, mpr, mrr, percentile_rank
from docsim.scoring import rank
from docsim.synthetic import make_topic_corpus
from docsim.training import ContrastiveConfig, contrastive_grad, contrastive_loss, train_toy

from conftest import FIXTURES, embedded_to_plain, random_embedded
from oracle import rank_scores_ref


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {status}{suffix}")
    assert ok, f"{name}: {detail}"


def test_oracle_equivalence_1000_corpora():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ec = random_embedded(rng)
        ids = list(ec.ids)
        source = ids[int(rng.integers(len(ids)))]
        ranked = rank(source, ec, mode="sdr")
        ref = rank_scores_ref(embedded_to_plain(ec), source)
        for entry in ranked.entries:
            worst = max(worst, abs(entry.score - ref[entry.id]))
    elapsed = time.perf_counter() - started
    _report(
        "oracle-equivalence",
        worst < 1e-6 and elapsed < 60.0,
        f"max |engine - reference| = {worst:.2e}, {elapsed:.1f}s for 1000 corpora",
    )


def test_duplicate_ranks_first_200_of_200():
    rng = np.random.default_rng(77)
    hits = 0
    for _ in range(200):
        ec = random_embedded(rng, n_docs=int(rng.integers(3, 6)))
        docs = dict(ec.docs)
        source = list(docs)[int(rng.integers(len(docs)))]
        docs["dup-" + source] = docs[source]
        augmented = EmbeddedCorpus(dimension=ec.dimension, docs=docs)
        ranked = rank(source, augmented, mode="sdr")
        hits += ranked.ordered_ids[0] == "dup-" + source
    _report("duplicate-top-1", hits == 200, f"{hits}/200")


def test_gradient_fidelity_100_points():
    rng = np.random.default_rng(4242)
    h = 1e-4
    margin = 1.0
    passed = 0
    checked = 0
    while checked < 100:
        d = int(rng.integers(2, 9))
        f_p = rng.standard_normal(d)
        f_q = rng.standard_normal(d)
        y = int(rng.integers(2))
        c = float(np.dot(f_p, f_q) / (np.linalg.norm(f_p) * np.linalg.norm(f_q)))
        if abs(c - (1.0 - margin)) <= 1e-3 or abs(c) > 0.99:
            continue
        checked += 1
        g_p, g_q = contrastive_grad(f_p, f_q, y, margin)
        fd_p = np.zeros(d)
        fd_q = np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd_p[i] = (
                contrastive_loss(f_p + e, f_q, y, margin)
                - contrastive_loss(f_p - e, f_q, y, margin)
            ) / (2 * h)
            fd_q[i] = (
                contrastive_loss(f_p, f_q + e, y, margin)
                - contrastive_loss(f_p, f_q - e, y, margin)
            ) / (2 * h)
        fd_norm = np.linalg.norm(fd_p) + np.linalg.norm(fd_q)
        if fd_norm == 0.0:
            passed += np.linalg.norm(g_p) + np.linalg.norm(g_q) == 0.0
        else:
            rel = (np.linalg.norm(g_p - fd_p) + np.linalg.norm(g_q - fd_q)) / fd_norm
            passed += rel <= 1e-4
    _report("gradient-fidelity", passed == 100, f"{passed}/100 points within 1e-4")


def test_metric_correctness_and_null_model():
    exact = (
        percentile_rank(1, 5) == 1.0
        and percentile_rank(5, 5) == 0.0
        and percentile_rank(2, 5) == 0.75
    )

    order = [f"c{i}" for i in range(1, 6)]
    gt_one = GroundTruth({"s": frozenset({order[0], order[4]})})
    exact = exact and mpr({"s": order}, gt_one) == pytest.approx(0.5)

    order8 = [f"c{i}" for i in range(1, 9)]
    gt_mrr = GroundTruth({"s": frozenset({order8[2], order8[6]})})
    exact = exact and mrr({"s": order8}, gt_mrr) == pytest.approx(1 / 3)
    gt_two = GroundTruth({"s1": frozenset({order[0]}), "s2": frozenset({order[3]})})
    exact = exact and mrr({"s1": order, "s2": order}, gt_two) == pytest.approx(0.625)

    order20 = [f"c{i:02d}" for i in range(1, 21)]
    gt_hr = GroundTruth({"s": frozenset({order20[1], order20[8], order20[10], order20[17]})})
    exact = exact and hr_at_k({"s": order20}, gt_hr, 10) == 0.5
    exact = exact and hr_at_k({"s": order20}, gt_hr, 20) == 1.0

    rng = np.random.default_rng(555)
    n = 50
    total = 0.0
    for _ in range(1000):
        ids = [f"c{i:02d}" for i in range(n)]
        true_ids = list(rng.choice(ids, size=5, replace=False))
        rng.shuffle(ids)
        total += mpr({"s": ids}, GroundTruth({"s": frozenset(true_ids)}))
    null_mpr = total / 1000
    _report(
        "metric-correctness",
        exact and abs(null_mpr - 0.5) < 0.05,
        f"hand examples exact, null-model MPR = {null_mpr:.4f}",
    )


def test_toy_training_separability():
    started = time.perf_counter()
    corpus, _ = make_topic_corpus(seed=42)
    cfg = ContrastiveConfig(steps=2000, seed=0, dim=16, eval_pairs=128, eval_every=25)
    result = train_toy(corpus, cfg)
    elapsed = time.perf_counter() - started
    last = result.trace[-1]
    gap = last.mean_intra_cos - last.mean_inter_cos
    _report(
        "toy-training-separability",
        gap >= 0.3 and elapsed < 120.0,
        f"held-out intra-inter cosine gap = {gap:.3f}, {elapsed:.1f}s",
    )


def test_trend_reproduction():
    corpus, gt_map = make_topic_corpus(boilerplate_paragraphs=2, seed=0)
    ec = embed_corpus(HashEmbedder(48, seed=7), corpus)
    gt = GroundTruth({k: frozenset(v) for k, v in gt_map.items()})

    def mpr_for(mode: str, normalize: bool) -> float:
        rankings = {
            src: rank(src, ec, mode=mode, normalize=normalize).ordered_ids for src in gt.sources
        }
        return evaluate(rankings, gt).mpr

    sdr = mpr_for("sdr", True)
    sdr_raw = mpr_for("sdr", False)
    all_mode = mpr_for("all", True)
    _report(
        "trend-reproduction",
        sdr >= all_mode and sdr >= sdr_raw,
        f"MPR sdr={sdr:.4f} >= all={all_mode:.4f}; normalized >= raw={sdr_raw:.4f}",
    )


def test_cmd_rank_worker_determinism(tmp_path):
    corpus = FIXTURES / "corpus.jsonl"
    store = tmp_path / "store.bin"
    reports = []
    env_cmd = [sys.executable, "-m", "docsim.cli"]
    embed = subprocess.run(
        [*env_cmd, "embed", str(corpus), "--dim", "32", "--seed", "5", "--out", str(store)],
        capture_output=True,
    )
    assert embed.returncode == 0, embed.stderr.decode()
    for workers in ("1", "8"):
        out = tmp_path / f"report_w{workers}.jsonl"
        proc = subprocess.run(
            [
                *env_cmd, "rank", str(corpus), str(store),
                "--source", "alpha", "--workers", workers,
                "--out", str(out), "--no-figures",
            ],
            capture_output=True,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        reports.append(out.read_bytes())
    _report(
        "cmd-rank-determinism",
        reports[0] == reports[1],
        f"{len(reports[0])} bytes, identical across --workers 1/8",
    )
