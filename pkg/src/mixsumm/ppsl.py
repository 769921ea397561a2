"""Prompt-based pseudo-labeling: teacher -> shortlist -> LLM relabel -> LLM score -> select."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .augment import llm_sentence_probs
from .corpus import AbstractiveSummary, Document, LabeledExample, render_extractive, with_split
from .evaluation import evaluate
from .llm import (
    BaseChatClient,
    LLMError,
    ask_with_retries,
    build_score_prompt,
    build_summarize_prompt,
    map_bounded,
    parse_rating,
)
from .llm.prompts import SCALES
from .rouge import rouge_n
from .seeding import substream
from .teacher import (
    PseudoLabel,
    ReferenceTeacher,
    TeacherConfig,
    TeacherModel,
    chunk_and_summarize,
    confidence,
    select_top_n,
)

log = logging.getLogger(__name__)

STRATEGIES = ("random", "confidence", "confidence_score", "confidence_relabel", "confidence_relabel_score")


@dataclass
class PpslConfig:
    shortlist_size: int = 50
    select_count: int = 5
    n_cycles: int = 50
    strategy: str = "confidence_relabel_score"
    score_scale: str = "0-100"
    seed: int = 0
    p: int = 4
    want_abstractive: bool = False
    retries: int = 2
    budget: int | None = None
    validate_every_cycle: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.select_count > self.shortlist_size:
            raise ValueError("select_count must not exceed shortlist_size")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")
        if self.score_scale not in SCALES:
            raise ValueError(f"score_scale must be one of {list(SCALES)}")

    @property
    def relabel(self) -> bool:
        return "relabel" in self.strategy

    @property
    def score(self) -> bool:
        return self.strategy.endswith("score")


@dataclass
class CycleRecord:
    cycle: int
    strategy: str
    seed: int
    selected_ids: list[str]
    teacher_confidences: list[float]
    llm_scores: list[float | None]
    sources: list[str]
    n_labeled: int
    n_unlabeled: int
    n_dropped: int
    shortlist_ids: list[str] = field(default_factory=list)
    validation: dict[str, float] = field(default_factory=dict)
    pseudo_label_rouge2: float | None = None
    stop_reason: str | None = None


@dataclass
class PpslState:
    cycle: int
    labeled: list[LabeledExample]
    unlabeled: list[Document]
    dropped: list[Document] = field(default_factory=list)
    teacher: TeacherModel | None = None
    history: list[CycleRecord] = field(default_factory=list)


@dataclass
class PpslResult:
    teacher: TeacherModel
    history: list[CycleRecord]
    state: PpslState
    splits_key: str
    stop_reason: str | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(dict(asdict(r), splits_key=self.splits_key)) + "\n" for r in self.history)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())


def read_run_log(path: str | Path) -> list[CycleRecord]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            obj = json.loads(line)
            obj.pop("splits_key", None)
            out.append(CycleRecord(**obj))
    return out


def splits_key(labeled: Sequence[LabeledExample], pool: Sequence[Document], seed: int) -> str:
    blob = json.dumps([sorted(ex.id for ex in labeled), sorted(d.id for d in pool), seed])
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def default_teacher_factory(config: PpslConfig) -> Callable[[], TeacherModel]:
    return lambda: ReferenceTeacher(TeacherConfig(summary_size=config.p, seed=config.seed))


def pseudo_label(teacher: TeacherModel, doc: Document, p: int) -> PseudoLabel:
    ext = chunk_and_summarize(teacher, doc, p)
    probs = tuple(float(x) for x in teacher.predict(doc))
    c = confidence(probs, ext)
    return PseudoLabel(doc, ext, probs, c, c)


def _relabel(pl: PseudoLabel, config: PpslConfig, client: BaseChatClient) -> PseudoLabel:
    probs = llm_sentence_probs(pl.document, config.p, client, config.budget, config.retries)
    ext = select_top_n(probs, config.p)
    abs_ = None
    if config.want_abstractive:
        req = build_summarize_prompt(render_extractive(pl.document, ext), config.p, "abstractive", config.budget)
        text = client.chat(req).text.strip()
        abs_ = AbstractiveSummary(text) if text else None
    return replace(pl, extractive=ext, probs=tuple(probs), confidence=confidence(probs, ext),
                   source="llm", abstractive=abs_)


def _score(pl: PseudoLabel, config: PpslConfig, client: BaseChatClient) -> PseudoLabel:
    lo, hi = SCALES[config.score_scale]
    summary = pl.abstractive.text if pl.abstractive else pl.text
    req = build_score_prompt(pl.document, summary, config.score_scale, config.budget)
    rating = ask_with_retries(client, req, lambda r: parse_rating(r.text, lo, hi), config.retries)
    return replace(pl, llm_score=float(rating))


def _guarded(fn, config, client):
    def run(pl):
        try:
            return fn(pl, config, client)
        except LLMError as exc:
            log.warning("dropping candidate %s: %s", pl.document.id, exc)
            return None
    return run


def run_cycle(state: PpslState, config: PpslConfig, client: BaseChatClient | None,
              teacher_factory: Callable[[], TeacherModel] | None = None,
              valid: Sequence[LabeledExample] = (),
              references: Mapping[str, LabeledExample] | None = None) -> PpslState:
    """One train / pseudo-label / relabel / score / select cycle; returns the next state."""
    if len(state.unlabeled) < config.select_count:
        raise ValueError(f"unlabeled pool has {len(state.unlabeled)} documents, need {config.select_count}")
    if (config.relabel or config.score) and client is None:
        raise ValueError(f"strategy {config.strategy!r} needs an LLM client")
    factory = teacher_factory or default_teacher_factory(config)
    teacher = factory().fit(state.labeled, valid)

    pool = state.unlabeled
    dropped: list[Document] = []
    shortlist_ids: list[str] = []
    if config.strategy == "random":
        rng = substream(config.seed, f"ppsl-random-{state.cycle}")
        picks = sorted(rng.choice(len(pool), size=config.select_count, replace=False))
        chosen = [pseudo_label(teacher, pool[i], config.p) for i in picks]
    else:
        labels = [pseudo_label(teacher, d, config.p) for d in pool]
        shortlist = sorted(labels, key=lambda pl: (-pl.teacher_confidence, pl.document.id))[:config.shortlist_size]
        shortlist_ids = [pl.document.id for pl in shortlist]
        for stage, enabled in ((_relabel, config.relabel), (_score, config.score)):
            if not enabled:
                continue
            results = map_bounded(_guarded(stage, config, client), shortlist, client.max_in_flight)
            dropped += [pl.document for pl, r in zip(shortlist, results) if r is None]
            shortlist = [r for r in results if r is not None]
        if config.score:
            key = lambda pl: (-pl.llm_score, -pl.teacher_confidence, pl.document.id)  # noqa: E731
        else:
            key = lambda pl: (-pl.teacher_confidence, pl.document.id)  # noqa: E731
        chosen = sorted(shortlist, key=key)[:config.select_count]

    chosen_ids = {pl.document.id for pl in chosen}
    gone = chosen_ids | {d.id for d in dropped}
    new_labeled = list(state.labeled) + [
        replace(pl.to_example(), document=with_split(pl.document, "train")) for pl in chosen]
    new_pool = [d for d in pool if d.id not in gone]

    quality = None
    if references:
        scores = [rouge_n(pl.abstractive.text if pl.abstractive else pl.text,
                          references[pl.document.id].reference_text(), 2).f1
                  for pl in chosen if pl.document.id in references]
        quality = float(np.mean(scores)) if scores else None

    validation = {}
    if valid and config.validate_every_cycle:
        validation = evaluate(teacher, valid, p=config.p).means()

    record = CycleRecord(
        cycle=state.cycle + 1,
        strategy=config.strategy,
        seed=config.seed,
        selected_ids=[pl.document.id for pl in chosen],
        teacher_confidences=[pl.teacher_confidence for pl in chosen],
        llm_scores=[pl.llm_score for pl in chosen],
        sources=[pl.source for pl in chosen],
        n_labeled=len(new_labeled),
        n_unlabeled=len(new_pool),
        n_dropped=len(state.dropped) + len(dropped),
        shortlist_ids=shortlist_ids,
        validation=validation,
        pseudo_label_rouge2=quality,
    )
    return PpslState(state.cycle + 1, new_labeled, new_pool, state.dropped + dropped, teacher,
                     state.history + [record])


def run(config: PpslConfig, labeled: Sequence[LabeledExample], unlabeled: Sequence[Document],
        client: BaseChatClient | None, valid: Sequence[LabeledExample] = (),
        references: Mapping[str, LabeledExample] | None = None,
        teacher_factory: Callable[[], TeacherModel] | None = None) -> PpslResult:
    """Repeat cycles ``n_cycles`` times or until the pool cannot supply ``select_count`` documents."""
    factory = teacher_factory or default_teacher_factory(config)
    state = PpslState(0, list(labeled), list(unlabeled))
    stop = None
    for _ in range(config.n_cycles):
        if len(state.unlabeled) < config.select_count:
            stop = f"unlabeled pool exhausted ({len(state.unlabeled)} < {config.select_count}) after cycle {state.cycle}"
            break
        state = run_cycle(state, config, client, factory, valid, references)
        log.info("cycle %d: labeled=%d pool=%d", state.cycle, len(state.labeled), len(state.unlabeled))
    if stop and state.history:
        state.history[-1].stop_reason = stop
    final = factory().fit(state.labeled, valid)
    state.teacher = final
    return PpslResult(final, state.history, state, splits_key(labeled, unlabeled, config.seed), stop)


# --------------------------------------------------------------------- strategy comparison

@dataclass
class StrategyRow:
    strategy: str
    n_cycles: int
    final_labeled: int
    validation: dict[str, float]
    pseudo_label_rouge2: float | None


def strategy_report(histories: Mapping[str, PpslResult]) -> list[StrategyRow]:
    """One row per run: final validation ROUGE and mean quality of the selected pseudo-labels."""
    if len(histories) < 2:
        raise ValueError("need at least two runs to compare")
    keys = {res.splits_key for res in histories.values()}
    if len(keys) > 1:
        raise ValueError("runs were made on different splits or seeds")
    rows = []
    for name, res in histories.items():
        q = [r.pseudo_label_rouge2 for r in res.history if r.pseudo_label_rouge2 is not None]
        last = res.history[-1] if res.history else None
        rows.append(StrategyRow(
            strategy=name,
            n_cycles=len(res.history),
            final_labeled=last.n_labeled if last else len(res.state.labeled),
            validation=dict(last.validation) if last else {},
            pseudo_label_rouge2=float(np.mean(q)) if q else None,
        ))
    return rows


def strategy_table(rows: Sequence[StrategyRow]) -> str:
    lines = ["| Strategy | Cycles | Labeled | R-1 (%) | R-2 (%) | R-L (%) | Pseudo-label R-2 (%) |",
             "|---|---:|---:|---:|---:|---:|---:|"]
    for r in rows:
        v = r.validation
        cells = [f"{100 * v[m]:.1f}" if m in v else "-" for m in ("rouge1", "rouge2", "rougeL")]
        q = f"{100 * r.pseudo_label_rouge2:.1f}" if r.pseudo_label_rouge2 is not None else "-"
        lines.append(f"| {r.strategy} | {r.n_cycles} | {r.final_labeled} | " + " | ".join(cells) + f" | {q} |")
    return "\n".join(lines) + "\n"
