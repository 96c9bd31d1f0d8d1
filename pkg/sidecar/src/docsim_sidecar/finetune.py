"""Continue pre-training a masked-LM backbone with the dual MLM + contrastive objective.

Sentence pairs are drawn from the corpus (same paragraph with probability
0.5, otherwise two different documents), tokenized jointly, masked per the
backbone's convention (15%: 80% mask token, 10% random, 10% unchanged), and
propagated once. The mean-pooled per-sentence states feed a margin
contrastive term; the two loss terms are added with equal weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

from .corpus import SidecarDocument, read_corpus


def contrastive_loss(f_p: torch.Tensor, f_q: torch.Tensor, y: torch.Tensor, margin: float) -> torch.Tensor:
    """Per-pair margin loss on cosine similarity; y=1 pulls together, y=0 pushes below 1-margin."""
    c = torch.nn.functional.cosine_similarity(f_p, f_q, dim=-1)
    positive = 1.0 - c
    negative = torch.clamp(c - (1.0 - margin), min=0.0)
    return torch.where(y.bool(), positive, negative)


@dataclass(frozen=True)
class PairDraw:
    p_text: str
    q_text: str
    y: int


class PairSampler:
    """Same-paragraph positives with probability p_intra, cross-document negatives otherwise."""

    def __init__(self, documents: list[SidecarDocument], p_intra: float = 0.5):
        self.p_intra = p_intra
        self._multi: list[tuple[str, ...]] = []
        self._docs: list[list[str]] = []
        for doc in documents:
            flat: list[str] = []
            for paragraph in doc.paragraphs:
                if len(paragraph) >= 2:
                    self._multi.append(paragraph)
                flat.extend(paragraph)
            self._docs.append(flat)
        if not self._multi:
            raise ValueError("no paragraph with at least 2 sentences: intra sampling impossible")
        if len(self._docs) < 2:
            raise ValueError("inter sampling requires at least 2 documents")

    def sample(self, rng: np.random.Generator) -> PairDraw:
        if rng.random() < self.p_intra:
            paragraph = self._multi[rng.integers(len(self._multi))]
            first = int(rng.integers(len(paragraph)))
            second = int(rng.integers(len(paragraph) - 1))
            if second >= first:
                second += 1
            return PairDraw(paragraph[first], paragraph[second], 1)
        d1 = int(rng.integers(len(self._docs)))
        d2 = int(rng.integers(len(self._docs) - 1))
        if d2 >= d1:
            d2 += 1
        p = self._docs[d1][rng.integers(len(self._docs[d1]))]
        q = self._docs[d2][rng.integers(len(self._docs[d2]))]
        return PairDraw(p, q, 0)


@dataclass
class FinetuneJob:
    corpus_path: Path
    model_name: str = "roberta-base"
    out_dir: Path = Path("checkpoint")
    margin: float = 1.0
    steps: int = 200
    batch_size: int = 8
    learning_rate: float = 5e-4
    mlm_probability: float = 0.15
    train_fraction: float = 0.9
    seed: int = 0
    max_length: int | None = None
    eval_every: int = 50
    eval_pairs: int = 64

    def __post_init__(self) -> None:
        self.corpus_path = Path(self.corpus_path)
        self.out_dir = Path(self.out_dir)
        if not 0.0 < self.margin <= 2.0:
            raise ValueError("margin must be in (0, 2]")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")


@dataclass
class StepRecord:
    step: int
    total: float
    mlm: float
    contrastive: float
    val_mlm_accuracy: float | None = None
    val_cosine_gap: float | None = None


@dataclass
class FinetuneResult:
    records: list[StepRecord]
    checkpoint_dir: Path

    @property
    def initial_total(self) -> float:
        return self.records[0].total

    @property
    def final_total(self) -> float:
        return self.records[-1].total

    def write_trace_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "total", "mlm", "contrastive", "val_mlm_accuracy", "val_cosine_gap"])
            for r in self.records:
                writer.writerow(
                    [
                        r.step,
                        repr(r.total),
                        repr(r.mlm),
                        repr(r.contrastive),
                        "" if r.val_mlm_accuracy is None else repr(r.val_mlm_accuracy),
                        "" if r.val_cosine_gap is None else repr(r.val_cosine_gap),
                    ]
                )


def _mask_tokens(
    input_ids: torch.Tensor,
    eligible: torch.Tensor,
    tokenizer,
    generator: torch.Generator,
    mlm_probability: float,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Backbone-convention masking; guarantees at least one masked position."""
    labels = input_ids.clone()
    probs = torch.full(input_ids.shape, mlm_probability)
    probs[~eligible] = 0.0
    masked = torch.bernoulli(probs, generator=generator).bool()
    if not masked.any():
        flat = torch.nonzero(eligible.reshape(-1)).reshape(-1)
        masked.reshape(-1)[flat[0]] = True
    labels[~masked] = -100
    corrupted = input_ids.clone()
    replace = torch.bernoulli(torch.full(input_ids.shape, 0.8), generator=generator).bool() & masked
    corrupted[replace] = tokenizer.mask_token_id
    randomize = (
        torch.bernoulli(torch.full(input_ids.shape, 0.5), generator=generator).bool()
        & masked
        & ~replace
    )
    random_ids = torch.randint(
        len(tokenizer), input_ids.shape, generator=generator, dtype=input_ids.dtype
    )
    corrupted[randomize] = random_ids[randomize]
    return corrupted, labels


def _encode_pairs(tokenizer, pairs: list[PairDraw], max_length: int):
    enc = tokenizer(
        [p.p_text for p in pairs],
        [p.q_text for p in pairs],
        padding=True,
        truncation=True,
        max_length=max_length,
        return_tensors="pt",
        return_special_tokens_mask=True,
    )
    rows = len(pairs)
    cols = enc["input_ids"].shape[1]
    side_p = torch.zeros((rows, cols), dtype=torch.bool)
    side_q = torch.zeros((rows, cols), dtype=torch.bool)
    for row in range(rows):
        for col, seq in enumerate(enc.sequence_ids(row)):
            if seq == 0:
                side_p[row, col] = True
            elif seq == 1:
                side_q[row, col] = True
    return enc, side_p, side_q


def _pool_sides(hidden: torch.Tensor, side: torch.Tensor) -> torch.Tensor:
    mask = side.unsqueeze(-1).to(hidden.dtype)
    return (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)


def finetune(job: FinetuneJob) -> FinetuneResult:
    """Run the dual-objective continued pre-training; aborts on non-finite loss."""
    torch.manual_seed(job.seed)
    documents = read_corpus(job.corpus_path)
    split = max(1, min(len(documents) - 1, int(round(len(documents) * job.train_fraction))))
    train_docs, val_docs = documents[:split], documents[split:]

    tokenizer = AutoTokenizer.from_pretrained(job.model_name)
    model = AutoModelForMaskedLM.from_pretrained(job.model_name)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=job.learning_rate)
    max_length = job.max_length or tokenizer.model_max_length

    train_seq, eval_seq = np.random.SeedSequence(job.seed).spawn(2)
    rng_train = np.random.default_rng(train_seq)
    rng_eval = np.random.default_rng(eval_seq)
    mask_gen = torch.Generator().manual_seed(job.seed)

    train_sampler = PairSampler(train_docs, p_intra=0.5)
    try:
        val_sampler = PairSampler(val_docs, p_intra=0.5) if val_docs else train_sampler
    except ValueError:
        val_sampler = train_sampler
    val_pairs = [val_sampler.sample(rng_eval) for _ in range(job.eval_pairs)]

    @torch.no_grad()
    def validate() -> tuple[float, float]:
        model.eval()
        enc, side_p, side_q = _encode_pairs(tokenizer, val_pairs, max_length)
        eligible = (enc["special_tokens_mask"] == 0) & (enc["attention_mask"] == 1)
        val_gen = torch.Generator().manual_seed(job.seed + 1)
        corrupted, labels = _mask_tokens(
            enc["input_ids"], eligible, tokenizer, val_gen, job.mlm_probability
        )
        out = model(
            input_ids=corrupted,
            attention_mask=enc["attention_mask"],
            output_hidden_states=True,
        )
        masked_positions = labels != -100
        predictions = out.logits[masked_positions].argmax(dim=-1)
        accuracy = (predictions == labels[masked_positions]).float().mean().item()
        clean = model(
            input_ids=enc["input_ids"],
            attention_mask=enc["attention_mask"],
            output_hidden_states=True,
        ).hidden_states[-1]
        f_p = _pool_sides(clean, side_p)
        f_q = _pool_sides(clean, side_q)
        cos = torch.nn.functional.cosine_similarity(f_p, f_q, dim=-1)
        y = torch.tensor([p.y for p in val_pairs], dtype=torch.bool)
        gap = cos[y].mean().item() - cos[~y].mean().item()
        model.train()
        return accuracy, gap

    records: list[StepRecord] = []
    for step in range(1, job.steps + 1):
        pairs = [train_sampler.sample(rng_train) for _ in range(job.batch_size)]
        enc, side_p, side_q = _encode_pairs(tokenizer, pairs, max_length)
        eligible = (enc["special_tokens_mask"] == 0) & (enc["attention_mask"] == 1)
        corrupted, labels = _mask_tokens(
            enc["input_ids"], eligible, tokenizer, mask_gen, job.mlm_probability
        )
        out = model(
            input_ids=corrupted,
            attention_mask=enc["attention_mask"],
            labels=labels,
            output_hidden_states=True,
        )
        hidden = out.hidden_states[-1]
        f_p = _pool_sides(hidden, side_p)
        f_q = _pool_sides(hidden, side_q)
        y = torch.tensor([p.y for p in pairs])
        c_loss = contrastive_loss(f_p, f_q, y, job.margin).mean()
        total = out.loss + c_loss
        if not torch.isfinite(total):
            raise RuntimeError(f"loss became non-finite at step {step}")
        optimizer.zero_grad()
        total.backward()
        optimizer.step()

        record = StepRecord(
            step=step,
            total=float(total.item()),
            mlm=float(out.loss.item()),
            contrastive=float(c_loss.item()),
        )
        if step % job.eval_every == 0 or step == job.steps:
            accuracy, gap = validate()
            record.val_mlm_accuracy = accuracy
            record.val_cosine_gap = gap
        records.append(record)

    job.out_dir.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(job.out_dir)
    tokenizer.save_pretrained(job.out_dir)
    (job.out_dir / "finetune_config.json").write_text(
        json.dumps(
            {
                "model": job.model_name,
                "margin": job.margin,
                "steps": job.steps,
                "batch_size": job.batch_size,
                "learning_rate": job.learning_rate,
                "mlm_probability": job.mlm_probability,
                "train_fraction": job.train_fraction,
                "seed": job.seed,
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return FinetuneResult(records=records, checkpoint_dir=job.out_dir)
