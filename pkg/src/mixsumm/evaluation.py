"""ROUGE / L-Eval evaluation and Table-style reports."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Document, ExtractiveSummary, LabeledExample, render_extractive
from .llm import BaseChatClient, build_score_prompt
from .llm.client import MalformedResponseError
from .rouge import RougeScore, rouge_all, rouge_l, rouge_n  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

METRICS = ("rouge1", "rouge2", "rougeL", "leval")
HEADERS = {"rouge1": "R-1 (%)", "rouge2": "R-2 (%)", "rougeL": "R-L (%)", "leval": "L-Eval (%)"}
# L-Eval lives on a 0-10 scale; reports print it as a percentage
SCALE = {"rouge1": 100.0, "rouge2": 100.0, "rougeL": 100.0, "leval": 10.0}


@dataclass(frozen=True)
class LEvalScore:
    value: float
    rating_mass: tuple[tuple[int, float], ...]


def rating_mass(alternatives: Sequence[tuple[str, float]], lo: int = 1, hi: int = 10) -> dict[int, float]:
    """Probability per integer rating among first-token alternatives; other tokens are ignored."""
    mass: dict[int, float] = {}
    for tok, p in alternatives:
        t = tok.strip()
        if t.isdigit() and lo <= int(t) <= hi:
            mass[int(t)] = mass.get(int(t), 0.0) + p
    return mass


def expected_rating(mass: Mapping[int, float]) -> float:
    """Sum of ``p_r * r``. Ratings absent from ``mass`` count as probability 0 (no renormalization)."""
    return float(sum(p * r for r, p in mass.items()))


def l_eval(article: Document, summary: str, client: BaseChatClient, budget: int | None = None) -> LEvalScore:
    req = build_score_prompt(article, summary, scale="1-10", budget=budget, want_top_logprobs=5)
    resp = client.chat(req)
    mass = rating_mass(resp.first_token_alternatives)
    if not mass:
        raise MalformedResponseError("no integer rating among the first-token alternatives", resp.attempts)
    if 10 not in mass:
        log.debug("rating 10 not among alternatives; expectation covers ratings %s", sorted(mass))
    return LEvalScore(expected_rating(mass), tuple(sorted(mass.items())))


@dataclass(frozen=True)
class EvalRow:
    doc_id: str
    rouge1: float
    rouge2: float
    rougeL: float
    leval: float | None = None


@dataclass
class EvalReport:
    name: str
    rows: list[EvalRow] = field(default_factory=list)
    # per-run aggregate means when several seeds were combined
    runs: list[dict[str, float]] = field(default_factory=list)

    def means(self) -> dict[str, float]:
        out = {}
        for m in METRICS:
            vals = [getattr(r, m) for r in self.rows if getattr(r, m) is not None]
            if vals:
                out[m] = float(np.mean(vals))
        return out

    def summary(self) -> dict[str, tuple[float, float]]:
        """``metric -> (mean, std)`` across runs (std 0 for a single run)."""
        runs = self.runs or [self.means()]
        out = {}
        for m in METRICS:
            vals = [r[m] for r in runs if m in r]
            if vals:
                out[m] = (float(np.mean(vals)), float(np.std(vals)))
        return out

    @classmethod
    def combine(cls, name: str, reports: Sequence["EvalReport"]) -> "EvalReport":
        rows = [r for rep in reports for r in rep.rows]
        return cls(name, rows, [rep.means() for rep in reports])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["doc_id", *METRICS])
        for r in self.rows:
            w.writerow([r.doc_id] + [("" if getattr(r, m) is None else f"{getattr(r, m):.6f}") for m in METRICS])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"schema_version": 1, "name": self.name, "means": self.means(), "runs": self.runs,
                "rows": [r.__dict__ for r in self.rows]}

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(obj["name"], [EvalRow(**r) for r in obj["rows"]], list(obj.get("runs", [])))


def _cell(mean: float, std: float, metric: str, multi: bool) -> str:
    s = SCALE[metric]
    return f"{mean * s:.1f} ({std * s:.1f})" if multi else f"{mean * s:.1f}"


def markdown_table(reports: Sequence[EvalReport]) -> str:
    """Method | R-1 | R-2 | R-L | L-Eval, as percentages; ``mean (std)`` when runs were combined."""
    cols = [m for m in METRICS if any(m in rep.summary() for rep in reports)]
    lines = ["| Method | " + " | ".join(HEADERS[m] for m in cols) + " |",
             "|---|" + "---:|" * len(cols)]
    for rep in reports:
        summ = rep.summary()
        multi = len(rep.runs) > 1
        cells = [_cell(*summ[m], m, multi) if m in summ else "-" for m in cols]
        lines.append(f"| {rep.name} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def predict_summaries(model, docs: Sequence[Document], p: int) -> dict[str, ExtractiveSummary]:
    from .teacher import chunk_and_summarize

    return {d.id: chunk_and_summarize(model, d, p) for d in docs}


def evaluate(model_or_labelset, test: Sequence[LabeledExample], want_leval: bool = False,
             client: BaseChatClient | None = None, p: int = 4, reference: str = "extractive",
             name: str = "model") -> EvalReport:
    """Score a teacher (anything with ``predict``) or a ``doc_id -> summary`` mapping on ``test``.

    Extractive predictions are rendered to text before scoring. References
    use the example's ``reference`` summary kind, falling back to the other.
    """
    if want_leval and client is None:
        raise ValueError("L-Eval needs a chat client")
    if hasattr(model_or_labelset, "predict"):
        preds = predict_summaries(model_or_labelset, [ex.document for ex in test], p)
    else:
        preds = dict(model_or_labelset)
    rows = []
    for ex in test:
        ref = ex.reference_text(reference)
        if not ref:
            raise ValueError(f"test example {ex.id!r} has no reference summary")
        if ex.id not in preds:
            raise KeyError(f"no prediction for test document {ex.id!r}")
        pred = preds[ex.id]
        text = render_extractive(ex.document, pred) if isinstance(pred, ExtractiveSummary) else str(pred)
        sc = rouge_all(text, ref)
        lev = l_eval(ex.document, text, client).value if want_leval else None
        rows.append(EvalRow(ex.id, sc["rouge1"].f1, sc["rouge2"].f1, sc["rougeL"].f1, lev))
    return EvalReport(name, rows)
