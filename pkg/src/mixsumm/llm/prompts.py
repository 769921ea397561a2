"""Prompt builders. All builders are pure functions of their arguments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..corpus import Document, LabeledExample, ensure_extractive, window_indices
from .client import ChatRequest

DOC_MARKER = "@@@ DOCUMENT @@@"
GENERATION_TEMPERATURE = 0.7
LABELING_TEMPERATURE = 0.0
SCALES = {"0-100": (0, 100), "1-10": (1, 10)}
CRITERIA = (
    ("Coverage", "the summary captures the main points of the article"),
    ("Faithfulness", "every statement in the summary is supported by the article"),
    ("Coherence", "the summary reads as a well-organized, logical whole"),
    ("Conciseness", "the summary contains no redundant or unimportant detail"),
)


class PromptBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class MixRatio:
    alpha: int

    def __post_init__(self):
        if not 1 <= self.alpha <= 99:
            raise ValueError(f"alpha must be in [1, 99], got {self.alpha}")


def sample_alpha(rng: np.random.Generator) -> MixRatio:
    return MixRatio(int(rng.integers(1, 100)))


def n_tokens(text: str) -> int:
    return len(text.split())


# --------------------------------------------------------------------- generation

def _example_texts(examples: Sequence[LabeledExample], l: int | None, p: int) -> list[str]:
    out = []
    for ex in examples:
        doc = ex.document
        if l is None:
            out.append(doc.text)
            continue
        keep = window_indices(len(doc), ensure_extractive(ex, p).sentence_indices, l)
        out.append(" ".join(doc.sentences[i].text for i in keep))
    return out


def _render_generation(description: str, groups: list[tuple[str, list[str]]], instruction: str) -> str:
    lines = ["You are helping to build a text summarization dataset.",
             f"Dataset description: {description.strip()}", "",
             "Here are example documents from the dataset, organized by topic group.", ""]
    for name, texts in groups:
        lines.append(f"### {name}")
        for i, text in enumerate(texts, 1):
            lines.append(f"[{name} - Document {i}]")
            lines.append(text.strip())
            lines.append("")
    lines.append(instruction)
    lines.append("")
    lines.append(
        f"Output format: begin every new document with a line containing only {DOC_MARKER} "
        "and write nothing before the first marker line or after the last document."
    )
    return "\n".join(lines)


def _fit_examples(description, groups, instruction, budget, p, max_l, min_l):
    """Pick the largest per-group count, then the widest window, that fits ``budget``.

    Windows narrower than ``min_l`` are tried only once a single example per
    group is left: dropping examples is preferred to gutting them.
    """
    n_max = max(len(ex) for _, ex in groups)
    for n in range(n_max, 0, -1):
        floor = min(min_l, max_l) if n > 1 else 0
        for l in [None] + list(range(max_l, floor - 1, -1)):
            rendered = [(name, _example_texts(ex[:n], l, p)) for name, ex in groups]
            text = _render_generation(description, rendered, instruction)
            if budget is None or n_tokens(text) <= budget:
                return text, {"per_group": n, "window": l, "groups": rendered}
    raise PromptBudgetError(f"generation prompt exceeds the {budget}-token budget even with one example per group")


def build_generation_prompt(description: str, examples_a: Sequence[LabeledExample],
                            examples_b: Sequence[LabeledExample], alpha: int, n_new: int = 5,
                            p: int = 4, budget: int | None = None, max_window: int = 10,
                            max_examples: int = 5, min_window: int = 5) -> ChatRequest:
    """Mixup generation prompt: new documents blending ``alpha``% Group A and ``100-alpha``% Group B topics.

    When the prompt exceeds ``budget`` tokens, examples are cut to windows of
    ``l`` sentences around their summary sentences (largest ``l`` that fits,
    down to ``min_window``); if that is not enough, fewer examples per group
    are used, and with one example left the window may shrink to 0.
    """
    if not examples_a or not examples_b:
        raise ValueError("both example groups must be non-empty")
    if n_new < 1:
        raise ValueError("n_new must be >= 1")
    alpha = MixRatio(alpha).alpha
    instruction = (
        f"Write {n_new} new document{'s' if n_new > 1 else ''} in the same style and of similar length "
        f"as the examples. Each new document must mix topics: about {alpha}% of its content should come "
        f"from the topics of Group A and about {100 - alpha}% from the topics of Group B. "
        "Do not copy sentences from the examples."
    )
    groups = [("Group A", list(examples_a[:max_examples])), ("Group B", list(examples_b[:max_examples]))]
    text, info = _fit_examples(description, groups, instruction, budget, p, max_window, min_window)
    meta = {"task": "generate", "alpha": alpha, "n_new": n_new,
            "group_a": info["groups"][0][1], "group_b": info["groups"][1][1],
            "per_group": info["per_group"], "window": info["window"]}
    return ChatRequest.user(text, temperature=GENERATION_TEMPERATURE, max_tokens=4096, meta=meta)


def build_single_group_prompt(description: str, examples: Sequence[LabeledExample], n_new: int = 5,
                              p: int = 4, budget: int | None = None, max_window: int = 10,
                              max_examples: int = 5, min_window: int = 5) -> ChatRequest:
    """Generation prompt without mixup: one topic group only."""
    if not examples:
        raise ValueError("examples must be non-empty")
    instruction = (
        f"Write {n_new} new document{'s' if n_new > 1 else ''} in the same style and of similar length "
        "as the examples, covering the topics of the group. Do not copy sentences from the examples."
    )
    groups = [("Group A", list(examples[:max_examples]))]
    text, info = _fit_examples(description, groups, instruction, budget, p, max_window, min_window)
    meta = {"task": "generate", "alpha": 100, "n_new": n_new, "group_a": info["groups"][0][1],
            "group_b": [], "per_group": info["per_group"], "window": info["window"]}
    return ChatRequest.user(text, temperature=GENERATION_TEMPERATURE, max_tokens=4096, meta=meta)


# --------------------------------------------------------------------- labeling

def _fit_sentences(doc: Document, overhead: int, budget: int | None) -> int:
    """Number of leading sentences that fit next to ``overhead`` prompt tokens."""
    if budget is None:
        return len(doc)
    used = overhead
    for s in doc.sentences:
        used += s.token_count + 1
        if used > budget:
            return max(s.index, 1)
    return len(doc)


_EXTRACTIVE_HEAD = "Below is a document with one sentence per line. Each line starts with its line ID in brackets."
_EXTRACTIVE_TAIL = (
    "For every line, estimate the probability (a number between 0 and 1) that the sentence belongs in a "
    "{p}-sentence extractive summary of the document. Answer with exactly one line per sentence in the "
    "form \"<line ID>: <probability>\", using the line IDs above, and nothing else."
)


def _numbered(sentences: Sequence[str]) -> str:
    return "\n".join(f"[{i}] {s}" for i, s in enumerate(sentences))


def build_summarize_prompt(doc: Document | str, p: int = 4, mode: str = "extractive",
                           budget: int | None = None) -> ChatRequest:
    """Extractive mode: per-sentence probability request over line IDs.
    Abstractive mode: ``doc`` is the rendered extractive summary to paraphrase.
    """
    if mode == "extractive":
        if not isinstance(doc, Document):
            raise TypeError("extractive mode needs a Document")
        tail = _EXTRACTIVE_TAIL.format(p=p)
        keep = _fit_sentences(doc, n_tokens(_EXTRACTIVE_HEAD) + n_tokens(tail), budget)
        body = _numbered(doc.texts[:keep])
        text = f"{_EXTRACTIVE_HEAD}\n\n{body}\n\n{tail}"
        meta = {"task": "sentence_probs", "doc_id": doc.id, "sentences": doc.texts[:keep],
                "n_sentences": len(doc), "n_listed": keep, "truncated": keep < len(doc), "p": p}
        return ChatRequest.user(text, temperature=LABELING_TEMPERATURE, max_tokens=16 * keep + 64, meta=meta)
    if mode == "abstractive":
        extract = doc.text if isinstance(doc, Document) else doc
        if not extract.strip():
            raise ValueError("nothing to paraphrase")
        doc_id = doc.id if isinstance(doc, Document) else None
        words = extract.split()
        truncated = False
        if budget is not None and len(words) + 60 > budget:
            words, truncated = words[: max(budget - 60, 1)], True
        text = (
            "Rewrite the following extractive summary as a concise, fluent abstractive summary. "
            "Use only information stated in it.\n\n"
            f"Summary to rewrite:\n{' '.join(words)}\n\n"
            "Answer with the rewritten summary only."
        )
        meta = {"task": "abstractive", "doc_id": doc_id, "extract": " ".join(words), "truncated": truncated}
        return ChatRequest.user(text, temperature=LABELING_TEMPERATURE, max_tokens=512, meta=meta)
    raise ValueError(f"mode must be 'extractive' or 'abstractive', got {mode!r}")


def build_kshot_prompt(examples: Sequence[LabeledExample], doc: Document, p: int = 4,
                       budget: int | None = None) -> ChatRequest:
    """In-context baseline: the extractive prompt preceded by ``k`` solved examples."""
    shots = []
    for ex in examples:
        ext = set(ensure_extractive(ex, p).sentence_indices)
        answer = "\n".join(f"{i}: {1.0 if i in ext else 0.0}" for i in range(len(ex.document)))
        shots.append(f"Example document:\n{_numbered(ex.document.texts)}\n\nExample answer:\n{answer}")
    base = build_summarize_prompt(doc, p, "extractive", None if budget is None else budget - sum(n_tokens(s) for s in shots))
    text = "\n\n".join(shots + [base.prompt])
    meta = dict(base.meta, task="sentence_probs", k=len(examples))
    return ChatRequest.user(text, temperature=LABELING_TEMPERATURE, max_tokens=base.max_tokens, meta=meta)


def build_score_prompt(doc: Document, summary: str, scale: str = "0-100", budget: int | None = None,
                       want_top_logprobs: int = 0) -> ChatRequest:
    """Two-part rating prompt: article + summary, then the evaluation criteria."""
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {list(SCALES)}")
    lo, hi = SCALES[scale]
    criteria = "\n".join(f"{i}. {name}: {desc}." for i, (name, desc) in enumerate(CRITERIA, 1))
    instruction = (
        f"Rate the summary with a single integer between {lo} and {hi}, where higher is better. "
        "Your answer must start with the integer and contain nothing else."
    )
    overhead = n_tokens(summary) + n_tokens(criteria) + n_tokens(instruction) + 20
    keep = _fit_sentences(doc, overhead, budget)
    article = " ".join(doc.texts[:keep])
    text = (
        "Part 1: article and summary\n\n"
        f"Article:\n{article}\n\nSummary:\n{summary.strip()}\n\n"
        "Part 2: evaluation criteria\n\n"
        f"Judge the summary on the following criteria:\n{criteria}\n\n{instruction}"
    )
    meta = {"task": "score", "doc_id": doc.id, "article": article, "summary": summary,
            "scale": scale, "truncated": keep < len(doc)}
    return ChatRequest.user(text, temperature=LABELING_TEMPERATURE, max_tokens=8,
                            want_top_logprobs=want_top_logprobs, meta=meta)
