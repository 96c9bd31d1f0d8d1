from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from tokenizers import Tokenizer, models, pre_tokenizers
from tokenizers.processors import RobertaProcessing
from transformers import PreTrainedTokenizerFast, RobertaConfig, RobertaForMaskedLM

MAX_LEN = 64
HIDDEN = 32


def make_corpus_lines(
    n_topics: int = 5,
    docs_per_topic: int = 4,
    paragraphs: int = 3,
    sentences: int = 3,
    words: int = 6,
    vocab_per_topic: int = 20,
    seed: int = 0,
) -> list[str]:
    """Small topical corpus JSONL; sentences are well formed for the engine's segmenter."""
    rng = np.random.default_rng(seed)
    pools = [[f"T{t}w{i}" for i in range(vocab_per_topic)] for t in range(n_topics)]
    lines = []
    for topic in range(n_topics):
        for d in range(docs_per_topic):
            sections = []
            for _ in range(paragraphs):
                texts = []
                for _ in range(sentences):
                    chosen = [pools[topic][rng.integers(vocab_per_topic)] for _ in range(words)]
                    texts.append(" ".join(chosen) + ".")
                sections.append(" ".join(texts))
            lines.append(
                json.dumps(
                    {"id": f"t{topic}d{d:02d}", "title": f"T{topic} D{d}", "sections": sections}
                )
            )
    return lines


def build_tiny_model(target: Path, corpus_lines: list[str]) -> Path:
    """Randomly initialized word-level masked LM saved locally (no hub access needed)."""
    pre = pre_tokenizers.Whitespace()
    tokens: set[str] = set()
    for line in corpus_lines:
        record = json.loads(line)
        for section in record["sections"]:
            tokens.update(tok for tok, _ in pre.pre_tokenize_str(section))
    specials = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"]
    vocab = {tok: i for i, tok in enumerate(specials + sorted(tokens))}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre
    tok.post_processor = RobertaProcessing(sep=("</s>", vocab["</s>"]), cls=("<s>", vocab["<s>"]))
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="<s>",
        eos_token="</s>",
        unk_token="<unk>",
        pad_token="<pad>",
        mask_token="<mask>",
        cls_token="<s>",
        sep_token="</s>",
        model_max_length=MAX_LEN,
    )
    config = RobertaConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=MAX_LEN + 2,
        type_vocab_size=1,
        bos_token_id=vocab["<s>"],
        pad_token_id=vocab["<pad>"],
        eos_token_id=vocab["</s>"],
    )
    import torch

    torch.manual_seed(1234)
    model = RobertaForMaskedLM(config)
    target.mkdir(parents=True, exist_ok=True)
    fast.save_pretrained(target)
    model.save_pretrained(target)
    return target


@pytest.fixture(scope="session")
def corpus_lines() -> list[str]:
    return make_corpus_lines()


@pytest.fixture(scope="session")
def corpus_path(tmp_path_factory, corpus_lines) -> Path:
    path = tmp_path_factory.mktemp("corpus") / "corpus.jsonl"
    path.write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def tiny_model(tmp_path_factory, corpus_lines) -> Path:
    return build_tiny_model(tmp_path_factory.mktemp("model") / "tiny", corpus_lines)
