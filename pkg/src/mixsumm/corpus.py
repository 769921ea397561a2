"""Documents, summaries, JSONL corpus I/O and label construction."""
from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

from .rouge import rouge_n_tokens, tokenize

SPLITS = ("train", "valid", "test", "synthetic", "unlabeled")
ORIGINS = ("human", "mixsumm", "eda")
MODES = ("line", "punct")
DELIMITERS = {"line": "\n", "punct": " "}

# common abbreviations that end in a period but not a sentence
_ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "e.g", "i.e",
    "no", "fig", "inc", "ltd", "co", "approx", "dept", "est", "mt", "jan", "feb",
    "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "u.s", "a.m", "p.m",
}
_BOUNDARY = re.compile(r"[.!?]+[\"')\]]*\s+")


class CorpusError(ValueError):
    """Malformed corpus input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str

    @property
    def token_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[Sentence, ...]
    text: str
    split: str = "train"
    origin: str = "human"
    alpha: int | None = None
    pair: tuple[int, int] | None = None

    def __post_init__(self):
        if not self.sentences:
            raise CorpusError(f"document {self.id!r} has no sentences")
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}")
        if self.origin not in ORIGINS:
            raise CorpusError(f"unknown origin {self.origin!r}")

    @classmethod
    def from_sentences(cls, id: str, texts: Sequence[str], delimiter: str = " ", **kw) -> "Document":
        sents = tuple(Sentence(i, t) for i, t in enumerate(texts))
        return cls(id=id, sentences=sents, text=delimiter.join(texts), **kw)

    @property
    def token_count(self) -> int:
        return sum(s.token_count for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.sentences]


@dataclass(frozen=True)
class ExtractiveSummary:
    sentence_indices: tuple[int, ...]
    size_target: int

    def __post_init__(self):
        idx = self.sentence_indices
        if self.size_target < 1:
            raise ValueError("size_target must be positive")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing: {idx}")
        if len(idx) > self.size_target:
            raise ValueError(f"{len(idx)} indices exceed size target {self.size_target}")
        if idx and idx[0] < 0:
            raise ValueError("negative sentence index")

    def validate_for(self, doc: Document) -> None:
        if self.sentence_indices and self.sentence_indices[-1] >= len(doc):
            raise ValueError(f"index {self.sentence_indices[-1]} out of range for {doc.id!r} ({len(doc)} sentences)")


@dataclass(frozen=True)
class AbstractiveSummary:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("abstractive summary must be non-empty")


@dataclass(frozen=True)
class LabeledExample:
    document: Document
    extractive: ExtractiveSummary | None = None
    abstractive: AbstractiveSummary | None = None

    def __post_init__(self):
        if self.extractive is None and self.abstractive is None:
            raise CorpusError(f"example {self.document.id!r} has neither summary")
        if self.extractive is not None:
            self.extractive.validate_for(self.document)

    @property
    def id(self) -> str:
        return self.document.id

    def reference_text(self, prefer: str = "extractive") -> str:
        """Reference summary as text; falls back to the other kind when missing."""
        ext = render_extractive(self.document, self.extractive) if self.extractive else None
        abs_ = self.abstractive.text if self.abstractive else None
        if prefer == "abstractive":
            return abs_ or ext
        return ext or abs_


@dataclass(frozen=True)
class Dataset:
    examples: tuple[LabeledExample, ...]
    description: str = ""

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate id {ex.id!r}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def by_split(self, split: str) -> list[LabeledExample]:
        return [ex for ex in self.examples if ex.document.split == split]

    def by_id(self) -> dict[str, LabeledExample]:
        return {ex.id: ex for ex in self.examples}


# --------------------------------------------------------------------- segmentation

def _initial_follows(rest: str) -> bool:
    """True when the text after a single-letter "X." continues a name ("J. R. Tolkien")."""
    nxt = rest.split(None, 1)[0] if rest.strip() else ""
    if re.fullmatch(r"[A-Z]\.", nxt):
        return True
    return bool(nxt[:1].isupper() and not re.search(r"[.!?]", nxt))


def segment(text: str, mode: str = "punct") -> list[Sentence]:
    """Split ``text`` into sentences.

    ``line`` mode treats every non-blank line as a sentence (dialog turns);
    ``punct`` mode splits after ``.``, ``!`` or ``?`` followed by whitespace,
    skipping common abbreviations and single-letter initials.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not text or not text.strip():
        raise CorpusError("cannot segment empty text")
    if mode == "line":
        parts = [ln.strip() for ln in text.splitlines()]
    else:
        parts = []
        start = 0
        for m in _BOUNDARY.finditer(text):
            chunk = text[start:m.end()].strip()
            last = chunk.split()[-1] if chunk.split() else ""
            word = last.rstrip(".!?\"')]").lower()
            if last.endswith(".") and (word in _ABBREVIATIONS or (len(word) == 1 and word.isalpha()
                                                                 and _initial_follows(text[m.end():]))):
                continue
            parts.append(chunk)
            start = m.end()
        parts.append(text[start:].strip())
    return [Sentence(i, t) for i, t in enumerate(p for p in parts if p)]


# --------------------------------------------------------------------- JSONL I/O

def _parse_record(obj, lineno: int, mode: str, require_summary: bool):
    if not isinstance(obj, dict):
        raise CorpusError("record is not a JSON object", lineno)
    for key in ("id", "text"):
        if not isinstance(obj.get(key), str) or not obj[key].strip():
            raise CorpusError(f"missing or empty {key!r}", lineno)
    split = obj.get("split", "train")
    origin = obj.get("origin", "human")
    pair = obj.get("pair")
    try:
        doc = Document(
            id=obj["id"],
            sentences=tuple(segment(obj["text"], mode)),
            text=obj["text"],
            split=split,
            origin=origin,
            alpha=obj.get("alpha"),
            pair=tuple(pair) if pair is not None else None,
        )
    except CorpusError as exc:
        raise CorpusError(str(exc), lineno) from None
    ext = abs_ = None
    if obj.get("ext_indices") is not None:
        idx = obj["ext_indices"]
        if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx):
            raise CorpusError("ext_indices must be a list of integers", lineno)
        try:
            ext = ExtractiveSummary(tuple(idx), max(len(idx), 1))
            ext.validate_for(doc)
        except ValueError as exc:
            raise CorpusError(str(exc), lineno) from None
    if obj.get("abs_summary") is not None:
        if not isinstance(obj["abs_summary"], str) or not obj["abs_summary"].strip():
            raise CorpusError("abs_summary must be a non-empty string", lineno)
        abs_ = AbstractiveSummary(obj["abs_summary"])
    if require_summary and ext is None and abs_ is None:
        raise CorpusError(f"record {obj['id']!r} has neither ext_indices nor abs_summary", lineno)
    return doc, ext, abs_


def _iter_lines(stream: IO | bytes | str):
    if isinstance(stream, (bytes, str)):
        stream = io.BytesIO(stream.encode() if isinstance(stream, str) else stream)
    for lineno, raw in enumerate(stream, start=1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if line.strip():
            yield lineno, line


def _read(stream, format_id: str, mode: str, require_summary: bool):
    if format_id != "jsonl":
        raise CorpusError(f"unsupported corpus format {format_id!r}")
    seen: set[str] = set()
    out = []
    for lineno, line in _iter_lines(stream):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from None
        doc, ext, abs_ = _parse_record(obj, lineno, mode, require_summary)
        if doc.id in seen:
            raise CorpusError(f"duplicate id {doc.id!r}", lineno)
        seen.add(doc.id)
        out.append((doc, ext, abs_))
    if not out:
        raise CorpusError("corpus is empty")
    return out


def ingest(stream: IO | bytes | str, format_id: str = "jsonl", mode: str = "punct",
           description: str = "") -> Dataset:
    """Read a labeled JSONL corpus. Every record needs at least one summary."""
    rows = _read(stream, format_id, mode, require_summary=True)
    return Dataset(tuple(LabeledExample(d, e, a) for d, e, a in rows), description)


def load_documents(stream: IO | bytes | str, format_id: str = "jsonl", mode: str = "punct") -> list[Document]:
    """Read documents, ignoring any labels (used for unlabeled pools)."""
    return [d for d, _, _ in _read(stream, format_id, mode, require_summary=False)]


def load_dataset(path: str | Path, mode: str = "punct", description: str = "") -> Dataset:
    with open(path, "rb") as fh:
        return ingest(fh, "jsonl", mode, description)


def to_record(item: LabeledExample | Document) -> dict:
    if isinstance(item, LabeledExample):
        doc, ext, abs_ = item.document, item.extractive, item.abstractive
    else:
        doc, ext, abs_ = item, None, None
    rec: dict = {"id": doc.id, "text": doc.text}
    if ext is not None:
        rec["ext_indices"] = list(ext.sentence_indices)
    if abs_ is not None:
        rec["abs_summary"] = abs_.text
    rec["split"] = doc.split
    if doc.origin != "human":
        rec["origin"] = doc.origin
    if doc.alpha is not None:
        rec["alpha"] = doc.alpha
    if doc.pair is not None:
        rec["pair"] = list(doc.pair)
    return rec


def dumps_jsonl(items: Iterable[LabeledExample | Document]) -> str:
    return "".join(json.dumps(to_record(it), ensure_ascii=False) + "\n" for it in items)


def write_jsonl(path: str | Path, items: Iterable[LabeledExample | Document]) -> None:
    Path(path).write_text(dumps_jsonl(items), encoding="utf-8")


def with_split(doc: Document, split: str) -> Document:
    return replace(doc, split=split)


# --------------------------------------------------------------------- labels

def render_extractive(doc: Document, summary: ExtractiveSummary | Sequence[int]) -> str:
    idx = summary.sentence_indices if isinstance(summary, ExtractiveSummary) else summary
    return " ".join(doc.sentences[i].text for i in sorted(idx))


def greedy_extractive_oracle(doc: Document, reference: str, p: int) -> ExtractiveSummary:
    """Greedy sentence selection maximizing ROUGE-1 F1 + ROUGE-2 F1 against ``reference``.

    Each step adds the sentence with the largest gain (ties to the lower index)
    and stops at ``p`` sentences or when no sentence improves the score.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    ref = tokenize(reference)
    if not ref:
        raise ValueError("reference summary is empty")
    sent_tokens = [tokenize(s.text) for s in doc.sentences]

    def score(sel: list[int]) -> float:
        cand = [t for i in sorted(sel) for t in sent_tokens[i]]
        return rouge_n_tokens(cand, ref, 1).f1 + rouge_n_tokens(cand, ref, 2).f1

    selected: list[int] = []
    current = 0.0
    while len(selected) < p:
        best_i, best_score = -1, current
        for i in range(len(doc)):
            if i in selected:
                continue
            s = score(selected + [i])
            if s > best_score:
                best_i, best_score = i, s
        if best_i < 0:
            break
        selected.append(best_i)
        current = best_score
    return ExtractiveSummary(tuple(sorted(selected)), p)


def window_indices(n_sentences: int, summary_indices: Iterable[int], l: int) -> list[int]:
    """Sorted union of ``[i - l, i + l]`` windows clipped to the document."""
    if l < 0:
        raise ValueError("l must be >= 0")
    keep: set[int] = set()
    for i in summary_indices:
        if not 0 <= i < n_sentences:
            raise ValueError(f"summary index {i} out of range")
        keep.update(range(max(0, i - l), min(n_sentences, i + l + 1)))
    return sorted(keep)


def truncate_around_summary(doc: Document, extractive_indices: Iterable[int], l: int,
                            delimiter: str = " ") -> Document:
    kept = window_indices(len(doc), extractive_indices, l)
    return Document.from_sentences(doc.id, [doc.sentences[i].text for i in kept], delimiter,
                                   split=doc.split, origin=doc.origin, alpha=doc.alpha, pair=doc.pair)


def sub_document(doc: Document, indices: Sequence[int], id_suffix: str = "", delimiter: str = " ") -> Document:
    """Document made of the given sentences (in the given order), re-indexed from 0."""
    return Document.from_sentences(doc.id + id_suffix, [doc.sentences[i].text for i in indices], delimiter,
                                   split=doc.split, origin=doc.origin)


def ensure_extractive(example: LabeledExample, p: int) -> ExtractiveSummary:
    """The example's extractive label, or a greedy oracle label built from its abstractive one."""
    if example.extractive is not None:
        return example.extractive
    return greedy_extractive_oracle(example.document, example.abstractive.text, p)
