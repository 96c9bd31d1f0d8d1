"""Hierarchical text model: corpora of documents split into paragraphs and sentences."""

from __future__ import annotations

import json
import re
import unicodedata
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator


class CorpusError(ValueError):
    """Raised for malformed corpus input (bad record, duplicate id, empty corpus)."""


class DroppedDocumentWarning(UserWarning):
    """Emitted when a document is dropped because it has no sentences after segmentation."""


_TERMINALS = ".!?"
_OPENING_QUOTES = "\"'“‘«"
_LEADING_PUNCT = "([{" + _OPENING_QUOTES

# Trailing tokens that end with '.' without ending a sentence.
_ABBREVIATIONS = frozenset(
    a.lower()
    for a in (
        "Mr.",
        "Mrs.",
        "Ms.",
        "Dr.",
        "Prof.",
        "St.",
        "etc.",
        "vs.",
        "e.g.",
        "i.e.",
    )
)

_BLANK_RUN = re.compile(r"\n[ \t\r\f\v]*\n\s*")


@dataclass(frozen=True)
class Sentence:
    """A single sentence; text is trimmed with internal whitespace collapsed."""

    text: str
    index_in_paragraph: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError("sentence text must be non-empty after trimming")


@dataclass(frozen=True)
class Paragraph:
    sentences: tuple[Sentence, ...]
    index_in_document: int

    def __post_init__(self) -> None:
        if not self.sentences:
            raise CorpusError("paragraph must contain at least one sentence")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    paragraphs: tuple[Paragraph, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.paragraphs:
            raise CorpusError(f"document {self.id!r} has no paragraphs")

    def sentence_counts(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.paragraphs)

    def iter_sentences(self) -> Iterator[Sentence]:
        for paragraph in self.paragraphs:
            yield from paragraph.sentences


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    _by_id: dict[str, Document] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.documents:
            raise CorpusError("corpus must contain at least one document")
        by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.id in by_id:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            by_id[doc.id] = doc
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def __getitem__(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise CorpusError(f"unknown document id {doc_id!r}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.documents)


def segment_paragraphs(raw: str) -> list[str]:
    """Split text into paragraphs on runs of one or more blank lines.

    A blank line is a line containing only whitespace. Empty segments are
    dropped; the surviving segments preserve every non-whitespace character
    of the input in order.
    """
    return [part.strip() for part in _BLANK_RUN.split(raw) if part.strip()]


def _is_abbreviation(text: str, dot_index: int) -> bool:
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start : dot_index + 1].lstrip(_LEADING_PUNCT)
    return token.lower() in _ABBREVIATIONS


def segment_sentences(paragraph: str) -> list[Sentence]:
    """Split one paragraph into sentences with a fixed, deterministic rule set.

    A boundary is a '.', '!' or '?' followed by whitespace and then an
    uppercase letter, a digit, or an opening quote. A '.' closing a known
    abbreviation (Mr., Dr., e.g., ...) never ends a sentence. A trailing
    fragment without terminal punctuation becomes the final sentence.
    """
    text = paragraph.strip()
    if not text:
        return []
    cuts: list[tuple[int, int]] = []  # (end of sentence, start of next)
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
    sentences: list[Sentence] = []
    begin = 0
    for end, nxt in cuts:
        chunk = " ".join(text[begin:end].split())
        if chunk:
            sentences.append(Sentence(chunk, len(sentences)))
        begin = nxt
    tail = " ".join(text[begin:].split())
    if tail:
        sentences.append(Sentence(tail, len(sentences)))
    return sentences


def _document_from_sections(doc_id: str, title: str, sections: Iterable[str]) -> Document | None:
    """Build a Document, or None when no section yields a sentence."""
    paragraphs: list[Paragraph] = []
    for section in sections:
        for ptext in segment_paragraphs(section):
            sentences = segment_sentences(ptext)
            if sentences:
                paragraphs.append(Paragraph(tuple(sentences), len(paragraphs)))
    if not paragraphs:
        return None
    return Document(doc_id, title, tuple(paragraphs))


def _nfc(value: str) -> str:
    return unicodedata.normalize("NFC", value)


def _parse_jsonl(stream: Iterable[str]) -> Corpus:
    documents: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"line {lineno}: record must be a JSON object")
        doc_id = record.get("id")
        if not isinstance(doc_id, str) or not doc_id:
            raise CorpusError(f"line {lineno}: missing or invalid 'id'")
        doc_id = _nfc(doc_id)
        sections = record.get("sections")
        if not isinstance(sections, list) or not all(isinstance(s, str) for s in sections):
            raise CorpusError(f"line {lineno}: 'sections' must be a list of strings")
        title = record.get("title", "")
        if not isinstance(title, str):
            raise CorpusError(f"line {lineno}: 'title' must be a string")
        if doc_id in seen:
            raise CorpusError(
                f"line {lineno}: duplicate document id {doc_id!r} (first seen on line {seen[doc_id]})"
            )
        seen[doc_id] = lineno
        doc = _document_from_sections(doc_id, _nfc(title), [_nfc(s) for s in sections])
        if doc is None:
            warnings.warn(
                f"document {doc_id!r} (line {lineno}) dropped: no sentences after segmentation",
                DroppedDocumentWarning,
                stacklevel=3,
            )
            continue
        documents.append(doc)
    if not documents:
        raise CorpusError("corpus is empty after parsing")
    return Corpus(tuple(documents))


def _parse_plaintext_dir(root: Path) -> Corpus:
    paths = sorted(root.glob("*.txt"))
    if not paths:
        raise CorpusError(f"no .txt files found in {root}")
    documents: list[Document] = []
    for path in paths:
        try:
            raw = path.read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            raise CorpusError(f"{path.name}: not valid UTF-8 ({exc.reason})") from exc
        doc_id = _nfc(path.stem)
        doc = _document_from_sections(doc_id, doc_id, [_nfc(raw)])
        if doc is None:
            warnings.warn(
                f"document {doc_id!r} ({path.name}) dropped: no sentences after segmentation",
                DroppedDocumentWarning,
                stacklevel=3,
            )
            continue
        documents.append(doc)
    if not documents:
        raise CorpusError("corpus is empty after parsing")
    return Corpus(tuple(documents))


def parse_corpus(source: str | Path | IO[str], format: str = "jsonl") -> Corpus:
    """Parse a raw collection into a Corpus.

    ``format`` selects the input layout: ``jsonl`` (one document per line,
    {"id", "title", "sections"}) or ``plaintext-dir`` (one .txt file per
    document, file stem as id). Documents without any sentence are dropped
    with a DroppedDocumentWarning.
    """
    if format == "jsonl":
        if isinstance(source, (str, Path)):
            try:
                with open(source, "r", encoding="utf-8") as fh:
                    return _parse_jsonl(fh)
            except UnicodeDecodeError as exc:
                raise CorpusError(f"input is not valid UTF-8 ({exc.reason})") from exc
        return _parse_jsonl(source)
    if format == "plaintext-dir":
        if not isinstance(source, (str, Path)):
            raise CorpusError("plaintext-dir input must be a directory path")
        root = Path(source)
        if not root.is_dir():
            raise CorpusError(f"{root} is not a directory")
        return _parse_plaintext_dir(root)
    raise CorpusError(f"unknown corpus format {format!r}")


def serialize_corpus(corpus: Corpus, target: str | Path | IO[str]) -> None:
    """Write the canonical JSONL form: one section per paragraph."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            serialize_corpus(corpus, fh)
        return
    for doc in corpus.documents:
        record = {
            "id": doc.id,
            "title": doc.title,
            "sections": [" ".join(s.text for s in p.sentences) for p in doc.paragraphs],
        }
        target.write(json.dumps(record, ensure_ascii=False) + "\n")
