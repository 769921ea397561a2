"""Parsers for the output protocols declared in the prompts."""
from __future__ import annotations

import logging
import re

from ..corpus import Document, segment
from .client import MalformedResponseError
from .prompts import DOC_MARKER

log = logging.getLogger(__name__)

_PROB_LINE = re.compile(
    r"^\W*?(?:(?:line|sentence)\s*(?:id)?\s*#?)?\[?(\d+)\]?\s*[:=\-–>]+\s*\(?\s*(-?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*(%?)",
    re.IGNORECASE,
)
_INT = re.compile(r"-?\d+")


def parse_sentence_probs(text: str, n_sentences: int) -> list[float]:
    """One probability per line ID.

    IDs may come in any order and be surrounded by prose; the first value
    seen for an ID wins. Missing IDs become 0.0 (logged); values are clamped
    to [0, 1]. Raises :class:`MalformedResponseError` if fewer than half the
    IDs can be read.
    """
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    found: dict[int, float] = {}
    for line in text.splitlines():
        m = _PROB_LINE.match(line.strip())
        if not m:
            continue
        idx = int(m.group(1))
        if idx >= n_sentences or idx in found:
            continue
        val = float(m.group(2))
        if m.group(3):
            val /= 100.0
        found[idx] = min(max(val, 0.0), 1.0)
    if 2 * len(found) < n_sentences:
        raise MalformedResponseError(f"parsed {len(found)} of {n_sentences} sentence probabilities")
    missing = [i for i in range(n_sentences) if i not in found]
    if missing:
        log.warning("reply is missing line IDs %s; filled with 0.0", missing)
    return [found.get(i, 0.0) for i in range(n_sentences)]


def parse_generated_documents(text: str, expected_n: int, mode: str = "punct",
                              id_prefix: str = "gen") -> list[Document]:
    """Split a generation reply on marker lines into at most ``expected_n`` documents."""
    if expected_n < 1:
        raise ValueError("expected_n must be >= 1")
    lines = text.splitlines()
    marks = [i for i, ln in enumerate(lines) if ln.strip() == DOC_MARKER]
    blocks = []
    for a, b in zip(marks, marks[1:] + [len(lines)]):
        body = "\n".join(lines[a + 1:b]).strip()
        if body:
            blocks.append(body if mode == "line" else " ".join(body.split()))
    if not blocks:
        raise MalformedResponseError("no delimited documents in generation reply")
    if len(blocks) > expected_n:
        log.info("generation reply has %d documents, keeping the first %d", len(blocks), expected_n)
    docs = []
    for i, body in enumerate(blocks[:expected_n]):
        sents = [s.text for s in segment(body, mode)]
        docs.append(Document.from_sentences(f"{id_prefix}-{i}", sents, "\n" if mode == "line" else " ",
                                            split="synthetic", origin="mixsumm"))
    return docs


def parse_rating(text: str, lo: int, hi: int) -> int:
    """First integer in ``text``; must lie within ``[lo, hi]``."""
    m = _INT.search(text)
    if not m:
        raise MalformedResponseError(f"no integer rating in reply {text[:40]!r}")
    val = int(m.group())
    if not lo <= val <= hi:
        raise MalformedResponseError(f"rating {val} outside [{lo}, {hi}]")
    return val
