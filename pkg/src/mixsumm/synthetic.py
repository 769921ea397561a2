"""Synthetic topical corpora with known extractive labels.

Summary sentences are dense in the document's topic keywords; filler
sentences use generic vocabulary and, with a per-document "distraction"
probability, borrow topic keywords too. Low distraction makes the gold
summary easy to spot, high distraction makes it ambiguous.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .corpus import AbstractiveSummary, Document, ExtractiveSummary, LabeledExample

TOPICS = {
    "energy": ["solar", "turbine", "grid", "battery", "megawatt", "reactor", "utility", "emissions",
               "pipeline", "hydrogen", "coal", "tariff"],
    "health": ["hospital", "vaccine", "clinic", "patients", "nurses", "virus", "surgery", "trial",
               "insurance", "pharmacy", "diagnosis", "therapy"],
    "sports": ["striker", "coach", "league", "championship", "goalkeeper", "stadium", "season", "transfer",
               "playoff", "referee", "tournament", "midfield"],
    "finance": ["bank", "shares", "investors", "inflation", "bonds", "dividend", "merger", "earnings",
                "currency", "lender", "portfolio", "auditors"],
    "science": ["telescope", "galaxy", "enzyme", "fossil", "genome", "laboratory", "particle", "orbit",
                "microbes", "climate", "satellite", "molecule"],
    "travel": ["airline", "passengers", "airport", "hotel", "cruise", "visa", "luggage", "itinerary",
               "railway", "tourists", "ferry", "resort"],
}
VERBS = ["reported", "announced", "confirmed", "delayed", "expanded", "criticised", "approved", "reviewed",
         "unveiled", "questioned"]
_ONSETS = ["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "w"]
_NUCLEI = ["a", "e", "i", "o", "u", "ai", "ou"]
_CODAS = ["n", "r", "l", "s", "t", "m"]
# pseudo-words: large enough that filler terms rarely repeat inside one document
FILLER = [o + n + c + n2 for o in _ONSETS for n in _NUCLEI for c in _CODAS for n2 in ("a", "o")][::3]
PLACES = ["Avalon", "Brixton", "Corvale", "Dunmore", "Elsworth", "Fairhaven", "Glenrock", "Harwick"]


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


def _key_sentence(rng, kws: Sequence[str], key_terms: int = 4) -> str:
    if key_terms >= 4:
        a, b, c, d = rng.choice(kws, 4, replace=False)
        return f"{_cap(a)} {b} in {rng.choice(PLACES)} {rng.choice(VERBS)} new {c} {d} targets."
    words = [str(w) for w in rng.choice(kws, key_terms, replace=False)]
    words += [str(w) for w in rng.choice(FILLER, int(rng.integers(5, 8)))] + [str(rng.choice(VERBS))]
    rng.shuffle(words)
    return _cap(" ".join(words)) + "."


def _filler_sentence(rng, kws: Sequence[str], distract: float) -> str:
    n = int(rng.integers(6, 11))
    words = list(rng.choice(FILLER, n))
    if rng.random() < distract:
        for _ in range(int(rng.integers(1, 3))):
            words[int(rng.integers(n))] = str(rng.choice(kws))
    return _cap(" ".join(words)) + "."


def make_document(rng: np.random.Generator, doc_id: str, topic: str, p: int = 4,
                  n_range: tuple[int, int] = (8, 14), distract: float | None = None,
                  gold: str = "keywords", split: str = "train", key_terms: int = 4) -> LabeledExample:
    """One labeled document.

    ``gold="keywords"``: summary sentences are keyword-dense, at random positions
    (the first sentence is gold half the time).
    Fewer ``key_terms`` (keywords per summary sentence) make summary
    sentences harder to tell from distracted filler.
    ``gold="tail"``: the last ``p`` sentences are the summary and every sentence
    is filler, so only position separates the classes.
    """
    kws = TOPICS[topic]
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    if distract is None:
        distract = float(rng.uniform(0.0, 0.9))
    if gold == "tail":
        idx = list(range(n - p, n))
        sents = [_filler_sentence(rng, kws, 0.0) for _ in range(n)]
    else:
        rest = list(rng.choice(np.arange(1, n), p - 1, replace=False))
        first = 0 if rng.random() < 0.5 else int(rng.choice([i for i in range(1, n) if i not in rest]))
        idx = sorted(int(i) for i in rest + [first])
        sents = [_key_sentence(rng, kws, key_terms) if i in idx else _filler_sentence(rng, kws, distract) for i in range(n)]
    abstract = " ".join(" ".join(sents[i].rstrip(".").split()[:4]) + "." for i in idx)
    doc = Document.from_sentences(doc_id, sents, " ", split=split)
    return LabeledExample(doc, ExtractiveSummary(tuple(idx), p), AbstractiveSummary(abstract))


def make_corpus(n_docs: int, seed: int = 0, p: int = 4, topics: Sequence[str] | None = None,
                gold: str = "keywords", splits: dict[str, int] | None = None,
                n_range: tuple[int, int] = (8, 14), prefix: str = "doc", key_terms: int = 4) -> list[LabeledExample]:
    """``n_docs`` documents cycling through ``topics``; ``splits`` maps split name to count, in order."""
    rng = np.random.default_rng(seed)
    topics = list(topics or TOPICS)
    plan: list[str] = []
    for name, count in (splits or {"train": n_docs}).items():
        plan += [name] * count
    plan += ["train"] * (n_docs - len(plan))
    return [make_document(rng, f"{prefix}-{i:04d}", topics[i % len(topics)], p, n_range, gold=gold,
                          split=plan[i], key_terms=key_terms) for i in range(n_docs)]
