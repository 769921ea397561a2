"""Extractive teacher models, pseudo-label confidence and long-document summarization."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import (
    AbstractiveSummary,
    Document,
    ExtractiveSummary,
    LabeledExample,
    ensure_extractive,
    render_extractive,
    sub_document,
)
from .embed import chunk_sentences
from .rouge import rouge_n_tokens, tokenize

log = logging.getLogger(__name__)

FEATURES = ("position", "length", "centrality", "keyword_overlap")
_STOP = frozenset(
    "a an the and or but of to in on at by for with from as is are was were be been it its this that "
    "these those he she we they i you not no do does did have has had will would can could".split()
)


class TeacherModel(Protocol):
    max_tokens: int

    def predict(self, doc: Document) -> np.ndarray:
        """One probability in [0, 1] per sentence of ``doc``."""

    def fit(self, train: Sequence[LabeledExample], valid: Sequence[LabeledExample] = ()) -> "TeacherModel":
        ...


class AbstractiveHead(Protocol):
    def paraphrase(self, extract_text: str) -> AbstractiveSummary:
        ...


class IdentityHead:
    """Returns the extract unchanged; used offline and in tests."""

    def paraphrase(self, extract_text: str) -> AbstractiveSummary:
        return AbstractiveSummary(extract_text)


class LLMAbstractiveHead:
    def __init__(self, client, budget: int | None = None):
        self.client = client
        self.budget = budget

    def paraphrase(self, extract_text: str) -> AbstractiveSummary:
        from .llm import build_summarize_prompt

        resp = self.client.chat(build_summarize_prompt(extract_text, mode="abstractive", budget=self.budget))
        return AbstractiveSummary(resp.text.strip() or extract_text)


@dataclass(frozen=True)
class PseudoLabel:
    document: Document
    extractive: ExtractiveSummary
    probs: tuple[float, ...]
    confidence: float
    teacher_confidence: float
    llm_score: float | None = None
    source: str = "teacher"
    abstractive: AbstractiveSummary | None = None

    def to_example(self) -> LabeledExample:
        return LabeledExample(self.document, self.extractive, self.abstractive)

    @property
    def text(self) -> str:
        return render_extractive(self.document, self.extractive)


# --------------------------------------------------------------------- selection & confidence

def select_top_n(probs: Sequence[float], n: int) -> ExtractiveSummary:
    """Indices of the ``n`` highest probabilities (ties to the lower index), ascending."""
    if n < 1:
        raise ValueError("n must be >= 1")
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    return ExtractiveSummary(tuple(sorted(order[:n])), n)


def confidence(probs: Sequence[float], selected: Sequence[int] | ExtractiveSummary) -> float:
    """Mean predicted probability of the selected sentences."""
    idx = selected.sentence_indices if isinstance(selected, ExtractiveSummary) else tuple(selected)
    if not idx:
        raise ValueError("confidence of an empty selection is undefined")
    return sum(probs[i] for i in idx) / len(idx)


def tsl_confidence(probs: Sequence[float], n_top: int = 4) -> float:
    """Teacher-student-learning confidence: mean agreement between p and top-``n_top`` membership."""
    if n_top < 1:
        raise ValueError("n_top must be >= 1")
    top = set(select_top_n(probs, n_top).sentence_indices)
    vals = [p if i in top else 1.0 - p for i, p in enumerate(probs)]
    return sum(vals) / len(vals)


# --------------------------------------------------------------------- reference teacher

@dataclass
class TeacherConfig:
    features: tuple[str, ...] = FEATURES
    learning_rate: float = 0.1
    epochs: int = 100
    patience: int = 10
    l2: float = 1e-3
    batch_size: int = 256
    summary_size: int = 4
    max_tokens: int = 512
    keywords: int = 10
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.features) - set(FEATURES)
        if unknown:
            raise ValueError(f"unknown features {sorted(unknown)}")
        self.features = tuple(self.features)


def _content(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in _STOP]


def sentence_features(doc: Document, names: Sequence[str] = FEATURES, keywords: int = 10) -> np.ndarray:
    """Feature matrix of shape ``(n_sentences, len(names))``; every value lies in [0, 1]."""
    n = len(doc)
    toks = [_content(s.text) for s in doc.sentences]
    doc_tf = Counter(t for ts in toks for t in ts)
    doc_norm = math.sqrt(sum(v * v for v in doc_tf.values())) or 1.0
    top = {w for w, _ in doc_tf.most_common(keywords)}
    longest = max(s.token_count for s in doc.sentences) or 1
    cols = {
        "position": [i / (n - 1) if n > 1 else 0.0 for i in range(n)],
        "length": [s.token_count / longest for s in doc.sentences],
    }
    cent, kw = [], []
    for ts in toks:
        tf = Counter(ts)
        dot = sum(c * doc_tf[w] for w, c in tf.items())
        norm = math.sqrt(sum(c * c for c in tf.values())) or 1.0
        cent.append(dot / (norm * doc_norm))
        kw.append(len(top & set(ts)) / len(top) if top else 0.0)
    cols["centrality"] = cent
    cols["keyword_overlap"] = kw
    return np.column_stack([cols[name] for name in names]).astype(float)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                           l2: float = 0.0) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy plus ``l2/2 * |w|^2`` and its gradient in ``(w, b)``."""
    z = X @ w + b
    # log(1 + e^z) computed stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    return float(loss), X.T @ r / len(y) + l2 * w, float(r.mean())


class ReferenceTeacher:
    """Logistic sentence scorer over hand-crafted features, trained with Adam.

    Training stops early when validation ROUGE-2 has not improved for
    ``patience`` epochs; the best-scoring weights are kept.
    """

    def __init__(self, config: TeacherConfig | None = None):
        self.config = config or TeacherConfig()
        self.weights = np.zeros(len(self.config.features))
        self.bias = 0.0
        self.loss_history: list[float] = []
        self.valid_history: list[float] = []
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    @property
    def max_tokens(self) -> int:
        return self.config.max_tokens

    def features(self, doc: Document) -> np.ndarray:
        key = (doc.id, doc.text)
        if key not in self._cache:
            self._cache[key] = sentence_features(doc, self.config.features, self.config.keywords)
        return self._cache[key]

    def predict(self, doc: Document) -> np.ndarray:
        return sigmoid(self.features(doc) @ self.weights + self.bias)

    def validation_rouge2(self, examples: Sequence[LabeledExample]) -> float:
        scores = []
        p = self.config.summary_size
        for ex in examples:
            sel = select_top_n(self.predict(ex.document), min(p, len(ex.document)))
            cand = tokenize(render_extractive(ex.document, sel))
            scores.append(rouge_n_tokens(cand, tokenize(ex.reference_text()), 2).f1)
        return float(np.mean(scores)) if scores else 0.0

    def fit(self, train: Sequence[LabeledExample], valid: Sequence[LabeledExample] = ()) -> "ReferenceTeacher":
        cfg = self.config
        if not train:
            raise ValueError("cannot fit a teacher on an empty training set")
        X = np.vstack([self.features(ex.document) for ex in train])
        y = np.concatenate([
            np.isin(np.arange(len(ex.document)), ensure_extractive(ex, cfg.summary_size).sentence_indices)
            for ex in train
        ]).astype(float)
        valid = list(valid) or list(train)
        rng = np.random.default_rng(cfg.seed)
        w = np.zeros(X.shape[1])
        b = 0.0
        m_w, v_w = np.zeros_like(w), np.zeros_like(w)
        m_b = v_b = 0.0
        beta1, beta2, eps = 0.9, 0.99, 1e-8
        step = 0
        best = (-np.inf, w.copy(), b)
        since_best = 0
        self.loss_history, self.valid_history = [], []
        for _ in range(cfg.epochs):
            order = rng.permutation(len(y))
            for start in range(0, len(y), cfg.batch_size):
                batch = order[start:start + cfg.batch_size]
                _, gw, gb = logistic_loss_and_grad(w, b, X[batch], y[batch], cfg.l2)
                step += 1
                m_w = beta1 * m_w + (1 - beta1) * gw
                v_w = beta2 * v_w + (1 - beta2) * gw * gw
                m_b = beta1 * m_b + (1 - beta1) * gb
                v_b = beta2 * v_b + (1 - beta2) * gb * gb
                c1, c2 = 1 - beta1 ** step, 1 - beta2 ** step
                w = w - cfg.learning_rate * (m_w / c1) / (np.sqrt(v_w / c2) + eps)
                b = b - cfg.learning_rate * (m_b / c1) / (math.sqrt(v_b / c2) + eps)
            self.weights, self.bias = w, b
            self.loss_history.append(logistic_loss_and_grad(w, b, X, y, cfg.l2)[0])
            score = self.validation_rouge2(valid)
            self.valid_history.append(score)
            if score > best[0]:
                best, since_best = (score, w.copy(), b), 0
            else:
                since_best += 1
                if since_best > cfg.patience:
                    break
        self.weights, self.bias = best[1], best[2]
        return self

    def to_json(self) -> dict:
        cfg = asdict(self.config)
        cfg["features"] = list(cfg["features"])
        return {
            "schema_version": 1,
            "kind": "reference-logistic",
            "feature_names": list(self.config.features),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "config": cfg,
            "seed": self.config.seed,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def from_json(cls, obj: dict) -> "ReferenceTeacher":
        cfg = dict(obj["config"])
        cfg["features"] = tuple(cfg["features"])
        model = cls(TeacherConfig(**cfg))
        model.weights = np.asarray(obj["weights"], dtype=float)
        model.bias = float(obj["bias"])
        return model

    @classmethod
    def load(cls, path: str | Path) -> "ReferenceTeacher":
        return cls.from_json(json.loads(Path(path).read_text()))


def reference_teacher(config: TeacherConfig | None = None) -> ReferenceTeacher:
    return ReferenceTeacher(config)


# --------------------------------------------------------------------- long documents

def chunk_and_summarize(model: TeacherModel, doc: Document, p: int) -> ExtractiveSummary:
    """Top-``p`` sentences of ``doc`` for a model with a limited token budget.

    Documents over budget are split into sentence-aligned chunks; each chunk
    keeps its ``ceil(p * chunk_len / doc_len)`` best sentences, the survivors
    form a shorter document, and the process repeats until it fits.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    target = min(p, len(doc))
    cand = list(range(len(doc)))
    cur = doc
    while True:
        if cur.token_count <= model.max_tokens:
            sel = select_top_n(model.predict(cur), target)
            return ExtractiveSummary(tuple(cand[i] for i in sel.sentence_indices), p)
        survivors: list[int] = []
        scored: list[tuple[float, int]] = []
        for chunk in chunk_sentences(cur, model.max_tokens):
            quota = math.ceil(p * len(chunk) / len(cur))
            probs = model.predict(sub_document(cur, chunk, "#chunk"))
            scored.extend((float(pr), chunk[i]) for i, pr in enumerate(probs))
            survivors.extend(chunk[i] for i in select_top_n(probs, quota).sentence_indices)
        survivors.sort()
        if len(survivors) >= len(cur):
            log.warning("chunk-and-summarize made no progress on %s (%d sentences); forcing top-%d by chunk scores",
                        doc.id, len(cur), target)
            best = sorted(scored, key=lambda t: (-t[0], t[1]))[:target]
            return ExtractiveSummary(tuple(sorted(cand[i] for _, i in best)), p)
        cand = [cand[i] for i in survivors]
        cur = sub_document(doc, cand, "#reduced")
