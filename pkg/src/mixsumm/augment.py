"""Synthetic training data: LLM mixup generation + labeling, and the EDA baseline."""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cluster import ClusterPair
from .corpus import (
    AbstractiveSummary,
    Document,
    LabeledExample,
    render_extractive,
)
from .llm import (
    BaseChatClient,
    LLMError,
    MalformedResponseError,
    ask_with_retries,
    build_generation_prompt,
    build_single_group_prompt,
    build_summarize_prompt,
    map_bounded,
    parse_generated_documents,
    parse_sentence_probs,
    sample_alpha,
)
from .teacher import select_top_n

log = logging.getLogger(__name__)


class GenerationStalledError(RuntimeError):
    def __init__(self, produced: int, target: int):
        self.produced = produced
        self.target = target
        super().__init__(f"generation stalled after {produced} of {target} documents")


@dataclass
class SynthesisJob:
    groups: Mapping[int, Sequence[LabeledExample]]
    pairs: Sequence[ClusterPair]
    target_count: int
    p: int = 4
    seed: int = 0
    description: str = ""
    n_new: int = 5
    examples_per_group: int = 5
    mix: bool = True
    mode: str = "punct"
    budget: int | None = None
    retries: int = 2

    def __post_init__(self):
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.mix:
            for pair in self.pairs:
                for c in (pair.a, pair.b):
                    if not self.groups.get(c):
                        raise ValueError(f"cluster {c} has no few-shot examples")


def _norm(text: str) -> str:
    return " ".join(text.lower().split())


def _invocations(job: SynthesisJob):
    """Endless round-robin over cluster pairs (or single clusters without mixup)."""
    units = list(job.pairs) if job.mix else sorted(c for c, ex in job.groups.items() if ex)
    if not units:
        raise ValueError("nothing to generate from: no cluster pairs or groups")
    i = 0
    while True:
        yield units[i % len(units)]
        i += 1


def mixsumm_generate(job: SynthesisJob, client: BaseChatClient) -> list[Document]:
    """Synthesize exactly ``job.target_count`` new documents.

    Each invocation samples a mix ratio, prompts with the pair's few-shot
    examples and parses the delimited reply. Documents that repeat a seed or
    an earlier synthetic document verbatim are discarded.
    """
    rng = np.random.default_rng(job.seed)
    seen = {_norm(ex.document.text) for exs in job.groups.values() for ex in exs}
    units = _invocations(job)
    n_units = len(job.pairs) if job.mix else sum(1 for ex in job.groups.values() if ex)
    out: list[Document] = []
    idle = 0
    delim = "\n" if job.mode == "line" else " "

    def run(item):
        unit, alpha, req = item
        try:
            return ask_with_retries(
                client, req, lambda r: parse_generated_documents(r.text, job.n_new, job.mode), job.retries)
        except (MalformedResponseError, LLMError) as exc:
            log.warning("generation for %s failed: %s", unit, exc)
            return None

    while len(out) < job.target_count:
        n_calls = min(n_units, math.ceil((job.target_count - len(out)) / job.n_new))
        batch = []
        for _ in range(n_calls):
            unit = next(units)
            if job.mix:
                alpha = sample_alpha(rng).alpha
                req = build_generation_prompt(job.description, job.groups[unit.a][:job.examples_per_group],
                                              job.groups[unit.b][:job.examples_per_group], alpha, job.n_new,
                                              job.p, job.budget)
            else:
                alpha = None
                req = build_single_group_prompt(job.description, job.groups[unit][:job.examples_per_group],
                                                job.n_new, job.p, job.budget)
            batch.append((unit, alpha, req))
        for (unit, alpha, _), docs in zip(batch, map_bounded(run, batch, client.max_in_flight)):
            added = 0
            for d in docs or []:
                if len(out) >= job.target_count:
                    break
                key = _norm(d.text)
                if key in seen:
                    log.info("discarding generated document that duplicates an existing one")
                    continue
                seen.add(key)
                pair = (unit.a, unit.b) if job.mix else None
                out.append(Document.from_sentences(
                    f"{'mixsumm' if job.mix else 'nomix'}-{len(out):05d}", d.texts, delim,
                    split="synthetic", origin="mixsumm", alpha=alpha, pair=pair))
                added += 1
            idle = 0 if added else idle + 1
            if idle >= n_units:
                raise GenerationStalledError(len(out), job.target_count)
    return out


def llm_sentence_probs(doc: Document, p: int, client: BaseChatClient, budget: int | None = None,
                       retries: int = 2) -> list[float]:
    """Per-sentence probabilities from the LLM; sentences cut by the budget get 0."""
    req = build_summarize_prompt(doc, p, "extractive", budget)
    n_listed = req.meta["n_listed"]
    probs = ask_with_retries(client, req, lambda r: parse_sentence_probs(r.text, n_listed), retries)
    return list(probs) + [0.0] * (len(doc) - n_listed)


def label_document(doc: Document, p: int, client: BaseChatClient, want_abstractive: bool = False,
                   budget: int | None = None, retries: int = 2) -> LabeledExample:
    """Extractive label from LLM sentence probabilities; optional paraphrase of the extract."""
    ext = select_top_n(llm_sentence_probs(doc, p, client, budget, retries), p)
    abs_ = None
    if want_abstractive:
        resp = client.chat(build_summarize_prompt(render_extractive(doc, ext), p, "abstractive", budget))
        text = resp.text.strip()
        if not text:
            raise MalformedResponseError("empty paraphrase", resp.attempts)
        abs_ = AbstractiveSummary(text)
    return LabeledExample(doc, ext, abs_)


def mixsumm_label(docs: Sequence[Document], p: int, client: BaseChatClient, want_abstractive: bool = False,
                  budget: int | None = None, retries: int = 2) -> list[LabeledExample]:
    """Label every document; failures after the retry budget are dropped and logged."""

    def one(doc):
        try:
            return label_document(doc, p, client, want_abstractive, budget, retries)
        except (MalformedResponseError, LLMError) as exc:
            log.warning("dropping %s: labeling failed (%s)", doc.id, exc)
            return None

    return [ex for ex in map_bounded(one, docs, client.max_in_flight) if ex is not None]


# --------------------------------------------------------------------- EDA

@dataclass
class EdaParams:
    swap_rate: float = 0.1
    delete_rate: float = 0.1
    insert_rate: float = 0.1
    synonym_rate: float = 0.1
    synonym_lexicon: Mapping[str, Sequence[str]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("swap_rate", "delete_rate", "insert_rate", "synonym_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


DEFAULT_LEXICON = Path(__file__).parent / "data" / "synonyms.txt"
_TERMINAL = re.compile(r"^(.*?)([.!?]+[\"')\]]*)$")


def load_lexicon(path: str | Path = DEFAULT_LEXICON) -> dict[str, list[str]]:
    """Two-column text file: ``word synonym`` per line; ``#`` starts a comment."""
    lex: dict[str, list[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        word, syn = line.split(None, 1)
        lex.setdefault(word.lower(), []).append(syn.strip())
    return lex


def _match_case(src: str, word: str) -> str:
    return word[:1].upper() + word[1:] if src[:1].isupper() else word


def eda_sentence(text: str, params: EdaParams, rng: np.random.Generator, vocabulary: Sequence[str]) -> str:
    toks = text.split()
    tail = ""
    if toks:
        m = _TERMINAL.match(toks[-1])
        if m:
            toks[-1], tail = m.group(1), m.group(2)
            if not toks[-1]:
                toks.pop()
    if not toks:
        return text
    original = list(toks)
    if params.synonym_rate:
        for i, t in enumerate(toks):
            core = re.sub(r"\W+", "", t).lower()
            cands = params.synonym_lexicon.get(core)
            if cands and rng.random() < params.synonym_rate:
                toks[i] = _match_case(t, cands[int(rng.integers(len(cands)))])
    if len(toks) >= 2 and rng.random() < params.swap_rate:
        j = int(rng.integers(len(toks) - 1))
        toks[j], toks[j + 1] = toks[j + 1], toks[j]
    if params.delete_rate:
        kept = [t for t in toks if rng.random() >= params.delete_rate]
        toks = kept or [toks[int(rng.integers(len(toks)))]]
    if vocabulary and rng.random() < params.insert_rate:
        toks.insert(int(rng.integers(len(toks) + 1)), vocabulary[int(rng.integers(len(vocabulary)))])
    if toks == original:
        return text
    return " ".join(toks) + tail


def eda_augment(doc: Document, params: EdaParams, rng: np.random.Generator,
                vocabulary: Sequence[str] | None = None, new_id: str | None = None,
                delimiter: str = " ") -> Document:
    """Word-level edits applied independently to every sentence; sentence count is preserved."""
    if vocabulary is None:
        vocabulary = sorted({re.sub(r"\W+", "", t).lower() for t in doc.text.split()} - {""})
    sents = [eda_sentence(s.text, params, rng, vocabulary) for s in doc.sentences]
    text = doc.text if sents == doc.texts else delimiter.join(sents)
    return Document(id=new_id or f"{doc.id}-eda", sentences=tuple(replace(s, text=t) for s, t in zip(doc.sentences, sents)),
                    text=text, split="synthetic", origin="eda")


def eda_augment_example(ex: LabeledExample, params: EdaParams, rng: np.random.Generator,
                        vocabulary: Sequence[str] | None = None, new_id: str | None = None,
                        delimiter: str = " ") -> LabeledExample:
    """EDA copy of a labeled example; sentence-aligned labels carry over unchanged."""
    doc = eda_augment(ex.document, params, rng, vocabulary, new_id, delimiter)
    return LabeledExample(doc, ex.extractive, ex.abstractive)
