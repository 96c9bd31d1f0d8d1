"""Export per-sentence transformer embeddings into the engine's store format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

from .corpus import read_corpus
from .store import write_store


@dataclass
class ExportJob:
    corpus_path: Path
    model_name: str = "roberta-base"
    out_path: Path = Path("embeddings.bin")
    batch_size: int = 8
    max_length: int | None = None
    include_cls: bool = True
    manifest_path: Path | None = None

    def __post_init__(self) -> None:
        self.corpus_path = Path(self.corpus_path)
        self.out_path = Path(self.out_path)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _pool_mean(hidden: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
    """Mean of hidden states over kept positions (specials and padding excluded)."""
    mask = keep.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts


@torch.no_grad()
def export_embeddings(job: ExportJob) -> dict:
    """Embed every sentence (mean of last-layer token states, special tokens
    excluded) and write the engine store; returns the manifest.

    Sentences longer than the model's token budget are truncated and listed
    in the manifest.
    """
    documents = read_corpus(job.corpus_path)
    tokenizer = AutoTokenizer.from_pretrained(job.model_name)
    model = AutoModel.from_pretrained(job.model_name)
    model.eval()
    max_length = job.max_length or tokenizer.model_max_length
    dimension = int(model.config.hidden_size)

    tasks: list[tuple[str, int, int, str]] = []
    for doc in documents:
        for p_idx, s_idx, text in doc.sentences():
            tasks.append((doc.id, p_idx, s_idx, text))

    truncated = []
    vectors: list[np.ndarray] = []
    for start in range(0, len(tasks), job.batch_size):
        batch = tasks[start : start + job.batch_size]
        texts = [t[3] for t in batch]
        full_lengths = [len(ids) for ids in tokenizer(texts, add_special_tokens=True)["input_ids"]]
        enc = tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=max_length,
            return_tensors="pt",
            return_special_tokens_mask=True,
        )
        for (doc_id, p_idx, s_idx, _), full in zip(batch, full_lengths):
            if full > max_length:
                truncated.append(
                    {
                        "id": doc_id,
                        "paragraph": p_idx,
                        "sentence": s_idx,
                        "token_count": full,
                        "max_length": max_length,
                    }
                )
        keep = (enc["special_tokens_mask"] == 0) & (enc["attention_mask"] == 1)
        out = model(input_ids=enc["input_ids"], attention_mask=enc["attention_mask"])
        pooled = _pool_mean(out.last_hidden_state, keep)
        vectors.extend(pooled.to(torch.float32).numpy())

    docs_out: dict[str, list[np.ndarray]] = {}
    cursor = 0
    for doc in documents:
        paragraphs = []
        for paragraph in doc.paragraphs:
            n = len(paragraph)
            paragraphs.append(np.stack(vectors[cursor : cursor + n]))
            cursor += n
        docs_out[doc.id] = paragraphs

    cls_out: dict[str, np.ndarray] | None = None
    if job.include_cls:
        cls_out = {}
        for start in range(0, len(documents), job.batch_size):
            chunk = documents[start : start + job.batch_size]
            texts = [" ".join(s for p in doc.paragraphs for s in p) for doc in chunk]
            enc = tokenizer(
                texts, padding=True, truncation=True, max_length=max_length, return_tensors="pt"
            )
            out = model(input_ids=enc["input_ids"], attention_mask=enc["attention_mask"])
            first_token = out.last_hidden_state[:, 0, :].to(torch.float32).numpy()
            for doc, vec in zip(chunk, first_token):
                cls_out[doc.id] = vec

    write_store(job.out_path, dimension, docs_out, cls_out)
    manifest = {
        "model": job.model_name,
        "dimension": dimension,
        "documents": len(documents),
        "sentences": len(tasks),
        "max_length": int(max_length),
        "cls_included": job.include_cls,
        "truncated": truncated,
    }
    if job.manifest_path is not None:
        Path(job.manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
