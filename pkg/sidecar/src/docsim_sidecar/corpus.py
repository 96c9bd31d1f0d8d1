"""Corpus JSONL reader with the engine's deterministic segmentation rules.

The corpus format carries raw section text, not sentence boundaries, so the
sidecar applies the same rule set the engine uses: paragraphs split on
blank-line runs; sentence boundaries at '.', '!' or '?' followed by
whitespace and an uppercase letter, digit, or opening quote; a fixed
abbreviation list suppresses splits; a trailing unterminated fragment forms
the final sentence.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

_TERMINALS = ".!?"
_OPENING_QUOTES = "\"'“‘«"
_LEADING_PUNCT = "([{" + _OPENING_QUOTES
_ABBREVIATIONS = frozenset(
    a.lower()
    for a in ("Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "etc.", "vs.", "e.g.", "i.e.")
)
_BLANK_RUN = re.compile(r"\n[ \t\r\f\v]*\n\s*")


@dataclass(frozen=True)
class SidecarDocument:
    id: str
    title: str
    paragraphs: tuple[tuple[str, ...], ...]  # paragraph -> sentence texts

    def sentences(self):
        for p_idx, paragraph in enumerate(self.paragraphs):
            for s_idx, text in enumerate(paragraph):
                yield p_idx, s_idx, text


def split_paragraphs(raw: str) -> list[str]:
    return [part.strip() for part in _BLANK_RUN.split(raw) if part.strip()]


def _is_abbreviation(text: str, dot_index: int) -> bool:
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start : dot_index + 1].lstrip(_LEADING_PUNCT)
    return token.lower() in _ABBREVIATIONS


def split_sentences(paragraph: str) -> list[str]:
    text = paragraph.strip()
    if not text:
        return []
    cuts = []
    for idx, ch in enumerate(text):
        if ch not in _TERMINALS:
            continue
        j = idx + 1
        if j >= len(text) or not text[j].isspace():
            continue
        k = j
        while k < len(text) and text[k].isspace():
            k += 1
        if k >= len(text):
            continue
        nxt = text[k]
        if not (nxt.isupper() or nxt.isdigit() or nxt in _OPENING_QUOTES):
            continue
        if ch == "." and _is_abbreviation(text, idx):
            continue
        cuts.append((j, k))
    sentences = []
    begin = 0
    for end, nxt in cuts:
        chunk = " ".join(text[begin:end].split())
        if chunk:
            sentences.append(chunk)
        begin = nxt
    tail = " ".join(text[begin:].split())
    if tail:
        sentences.append(tail)
    return sentences


def read_corpus(path: str | Path) -> list[SidecarDocument]:
    """Parse corpus JSONL; documents without any sentence are skipped."""
    documents = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        doc_id = record.get("id")
        sections = record.get("sections")
        if not isinstance(doc_id, str) or not isinstance(sections, list):
            raise ValueError(f"line {lineno}: expected 'id' and 'sections'")
        doc_id = unicodedata.normalize("NFC", doc_id)
        if doc_id in seen:
            raise ValueError(f"line {lineno}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        paragraphs = []
        for section in sections:
            normalized = unicodedata.normalize("NFC", section)
            for ptext in split_paragraphs(normalized):
                sentences = split_sentences(ptext)
                if sentences:
                    paragraphs.append(tuple(sentences))
        if paragraphs:
            documents.append(
                SidecarDocument(doc_id, record.get("title", ""), tuple(paragraphs))
            )
    if not documents:
        raise ValueError("corpus contains no usable documents")
    return documents
