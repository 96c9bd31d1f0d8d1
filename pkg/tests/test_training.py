import io
import math
import warnings

import numpy as np
import pytest

from docsim.corpus import parse_corpus
from docsim.synthetic import make_topic_corpus
from docsim.training import (
    ContrastiveConfig,
    DivergenceError,
    PairSampler,
    SamplingError,
    ToyModel,
    contrastive_grad,
    contrastive_loss,
    sample_pair,
    train_toy,
)

from oracle import contrastive_loss_ref


def _two_doc_corpus():
    records = (
        '{"id":"a", "title":"", "sections":["First sentence here. Second sentence there."]}\n'
        '{"id":"b", "title":"", "sections":["Other text entirely. More of that text."]}\n'
    )
    return parse_corpus(io.StringIO(records))


def _vec_at(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)], dtype=np.float64)


class TestPairSampler:
    def test_intra_fraction_montecarlo(self):
        corpus = _two_doc_corpus()
        sampler = PairSampler(corpus)
        rng = np.random.default_rng(123)
        draws = [sampler.sample(rng) for _ in range(10_000)]
        intra = sum(p.y for p in draws) / len(draws)
        assert abs(intra - 0.5) <= 0.02

    def test_label_consistency(self, small_corpus):
        sampler = PairSampler(small_corpus)
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            pair = sampler.sample(rng)
            if pair.y == 1:
                assert pair.p.doc_id == pair.q.doc_id
                assert pair.p.paragraph == pair.q.paragraph
                assert pair.p.sentence != pair.q.sentence
            else:
                assert pair.p.doc_id != pair.q.doc_id

    def test_same_seed_identical_sequence(self, small_corpus):
        sampler = PairSampler(small_corpus)
        seq1 = [sampler.sample(np.random.default_rng(99)) for _ in range(0)]
        rng1, rng2 = np.random.default_rng(99), np.random.default_rng(99)
        seq1 = [sampler.sample(rng1) for _ in range(500)]
        seq2 = [sampler.sample(rng2) for _ in range(500)]
        assert seq1 == seq2

    def test_no_multi_sentence_paragraph_rejected(self):
        records = (
            '{"id":"a", "title":"", "sections":["Only one."]}\n'
            '{"id":"b", "title":"", "sections":["Also one."]}\n'
        )
        corpus = parse_corpus(io.StringIO(records))
        with pytest.raises(SamplingError, match="intra"):
            PairSampler(corpus)

    def test_inter_needs_two_documents(self):
        corpus = parse_corpus(
            io.StringIO('{"id":"a", "title":"", "sections":["Two here. Sentences now."]}\n')
        )
        with pytest.raises(SamplingError, match="2 documents"):
            PairSampler(corpus, p_intra=0.5)
        PairSampler(corpus, p_intra=1.0)  # intra-only is fine

    def test_one_shot_helper(self, small_corpus):
        pair = sample_pair(small_corpus, np.random.default_rng(1))
        assert pair.y in (0, 1)


class TestContrastiveLoss:
    def test_perfect_positive(self):
        v = np.array([0.3, 0.7, -0.2])
        assert contrastive_loss(v, v, 1) == pytest.approx(0.0, abs=1e-12)

    def test_negative_at_half_cosine_unit_margin(self):
        f_p = _vec_at(0.0)
        f_q = _vec_at(math.pi / 3)  # cosine 0.5
        assert contrastive_loss(f_p, f_q, 0, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_negative_cosine_not_penalized(self):
        f_p = _vec_at(0.0)
        f_q = _vec_at(math.acos(-0.2))
        assert contrastive_loss(f_p, f_q, 0, 1.0) == 0.0

    def test_margin_two_is_standard_cosine_loss(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            f_p = rng.standard_normal(6)
            f_q = rng.standard_normal(6)
            got = contrastive_loss(f_p, f_q, 0, 2.0)
            c = float(np.dot(f_p, f_q) / (np.linalg.norm(f_p) * np.linalg.norm(f_q)))
            assert got == pytest.approx(max(0.0, c + 1.0), abs=1e-12)

    def test_loss_bounds(self):
        rng = np.random.default_rng(18)
        for _ in range(200):
            f_p = rng.standard_normal(4)
            f_q = rng.standard_normal(4)
            m = float(rng.uniform(0.1, 2.0))
            assert 0.0 <= contrastive_loss(f_p, f_q, 1, m) <= 2.0
            assert 0.0 <= contrastive_loss(f_p, f_q, 0, m) <= m + 1e-12

    def test_matches_reference(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            f_p = rng.standard_normal(5)
            f_q = rng.standard_normal(5)
            y = int(rng.integers(2))
            m = float(rng.uniform(0.2, 2.0))
            assert contrastive_loss(f_p, f_q, y, m) == pytest.approx(
                contrastive_loss_ref(f_p, f_q, y, m), abs=1e-12
            )

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.zeros(3), np.ones(3), 1)

    def test_bad_label_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.ones(2), np.ones(2), 2)

    def test_bad_margin_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(np.ones(2), np.ones(2), 0, margin=0.0)


def _fd_grad(f_p, f_q, y, m, h=1e-4):
    gp = np.zeros_like(f_p)
    gq = np.zeros_like(f_q)
    for i in range(len(f_p)):
        e = np.zeros_like(f_p)
        e[i] = h
        gp[i] = (contrastive_loss(f_p + e, f_q, y, m) - contrastive_loss(f_p - e, f_q, y, m)) / (2 * h)
    for i in range(len(f_q)):
        e = np.zeros_like(f_q)
        e[i] = h
        gq[i] = (contrastive_loss(f_p, f_q + e, y, m) - contrastive_loss(f_p, f_q - e, y, m)) / (2 * h)
    return gp, gq


class TestContrastiveGrad:
    def test_inactive_hinge_zero_gradient(self):
        f_p = _vec_at(0.0)
        f_q = _vec_at(math.acos(-0.3))
        gp, gq = contrastive_grad(f_p, f_q, 0, 1.0)
        assert np.all(gp == 0.0) and np.all(gq == 0.0)

    def test_stationary_at_identical_positive(self):
        v = np.array([0.4, -0.2, 0.9])
        gp, gq = contrastive_grad(v, v, 1)
        assert np.allclose(gp, 0.0, atol=1e-15)
        assert np.allclose(gq, 0.0, atol=1e-15)

    def test_finite_difference_agreement(self):
        rng = np.random.default_rng(20)
        checked = 0
        while checked < 100:
            d = int(rng.integers(2, 9))
            f_p = rng.standard_normal(d)
            f_q = rng.standard_normal(d)
            y = int(rng.integers(2))
            m = 1.0
            c = float(np.dot(f_p, f_q) / (np.linalg.norm(f_p) * np.linalg.norm(f_q)))
            if abs(c - (1.0 - m)) <= 1e-3 or abs(c) > 0.99:
                continue
            gp, gq = contrastive_grad(f_p, f_q, y, m)
            fp_fd, fq_fd = _fd_grad(f_p, f_q, y, m)
            denom = max(np.linalg.norm(fp_fd) + np.linalg.norm(fq_fd), 1e-12)
            err = (np.linalg.norm(gp - fp_fd) + np.linalg.norm(gq - fq_fd)) / denom
            if np.linalg.norm(fp_fd) + np.linalg.norm(fq_fd) == 0.0:
                assert np.linalg.norm(gp) + np.linalg.norm(gq) == 0.0
            else:
                assert err <= 1e-4
            checked += 1

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            contrastive_grad(np.zeros(2), np.ones(2), 1)


class TestToyModel:
    def test_sentence_vector_is_token_mean(self):
        model = ToyModel(tokens=("a", "b"), matrix=np.array([[2.0, 0.0], [0.0, 4.0]], dtype=np.float32))
        assert np.allclose(model.embed("a b"), [1.0, 2.0])
        assert np.allclose(model.embed("a a b"), [4.0 / 3.0, 4.0 / 3.0])

    def test_unknown_token_rejected(self):
        model = ToyModel(tokens=("a",), matrix=np.ones((1, 2), dtype=np.float32))
        with pytest.raises(KeyError, match="'zz'"):
            model.embed("zz")

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        model = ToyModel(
            tokens=("alpha", "beta", "gamma"),
            matrix=rng.standard_normal((3, 4)).astype(np.float32),
        )
        store = tmp_path / "model.bin"
        vocab = tmp_path / "vocab.json"
        model.save(store, vocab)
        loaded = ToyModel.load(store, vocab)
        assert loaded.tokens == model.tokens
        assert np.array_equal(loaded.matrix, model.matrix)


class TestTrainToy:
    def test_zero_learning_rate_leaves_model_unchanged(self, small_corpus):
        cfg = ContrastiveConfig(learning_rate=0.0, steps=50, seed=11, dim=8, eval_pairs=16, eval_every=10)
        result = train_toy(small_corpus, cfg)
        init_rng = np.random.default_rng(np.random.SeedSequence(11).spawn(2)[0])
        vocab_size = len(result.model.tokens)
        expected = init_rng.uniform(-0.5 / 8, 0.5 / 8, size=(vocab_size, 8)).astype(np.float32)
        assert np.array_equal(result.model.matrix, expected)
        intra = {row.mean_intra_cos for row in result.trace}
        inter = {row.mean_inter_cos for row in result.trace}
        assert len(intra) == 1 and len(inter) == 1

    def test_same_seed_bit_identical(self, small_corpus):
        cfg = ContrastiveConfig(steps=120, seed=3, dim=8, eval_pairs=8, eval_every=30)
        a = train_toy(small_corpus, cfg)
        b = train_toy(small_corpus, cfg)
        assert np.array_equal(a.model.matrix, b.model.matrix)
        assert a.trace == b.trace

    def test_separability_on_topic_corpus(self):
        corpus, _ = make_topic_corpus(seed=42)
        cfg = ContrastiveConfig(steps=600, seed=0, dim=16, eval_pairs=96, eval_every=50)
        result = train_toy(corpus, cfg)
        last = result.trace[-1]
        assert last.mean_intra_cos - last.mean_inter_cos > 0.1

    def test_intra_only_training_raises_intra_cosine(self):
        corpus, _ = make_topic_corpus(n_topics=3, docs_per_topic=3, seed=7)
        cfg = ContrastiveConfig(
            steps=800, seed=1, dim=16, intra_probability=1.0, eval_pairs=64, eval_every=40
        )
        result = train_toy(corpus, cfg)
        series = [row.mean_intra_cos for row in result.trace if row.step % cfg.eval_every == 0]
        smoothed = [sum(series[i : i + 3]) / 3 for i in range(len(series) - 2)]
        assert smoothed[-1] > smoothed[0]
        for prev, nxt in zip(smoothed, smoothed[1:]):
            assert nxt >= prev - 0.01
        assert result.trace[-1].mean_intra_cos > result.trace[0].mean_intra_cos + 0.2

    def test_divergence_raises_with_step_index(self, small_corpus):
        # the update itself must overflow float32 before the loss can turn non-finite
        cfg = ContrastiveConfig(learning_rate=1e39, steps=200, seed=2, dim=8, eval_pairs=4, eval_every=100)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(DivergenceError, match=r"step \d+"):
                train_toy(small_corpus, cfg)

    def test_trace_csv_write(self, small_corpus, tmp_path):
        cfg = ContrastiveConfig(steps=10, seed=4, dim=4, eval_pairs=4, eval_every=5)
        result = train_toy(small_corpus, cfg)
        path = tmp_path / "trace.csv"
        result.write_trace_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,loss,mean_intra_cos,mean_inter_cos"
        assert len(lines) == 11


class TestConfigValidation:
    def test_margin_range(self):
        with pytest.raises(ValueError):
            ContrastiveConfig(margin=0.0)
        with pytest.raises(ValueError):
            ContrastiveConfig(margin=2.5)
        ContrastiveConfig(margin=2.0)

    def test_negative_lr_rejected(self):
        with pytest.raises(ValueError):
            ContrastiveConfig(learning_rate=-0.1)
