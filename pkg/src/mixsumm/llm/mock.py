"""Deterministic offline chat client.

Replies are resolved, in order, from: exact prompt fingerprints, substring
rules, a FIFO queue, and finally a responder callable. A script file is JSON::

    {
      "replies": {"<fingerprint>": <reply>, ...},
      "rules": [{"contains": "<substring>", "reply": <reply>}, ...],
      "queue": [<reply>, ...],
      "fallback": "heuristic" | "none"
    }

where ``<reply>`` is a string or ``{"text": str, "top_logprobs": [[token, prob], ...],
"error": "transport" | "timeout" | "status:<code>" | "payload"}``.
"""
from __future__ import annotations

import hashlib
import json
import threading
from collections import Counter, deque
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from ..corpus import LabeledExample, ensure_extractive, segment
from ..rouge import rouge_n_tokens, tokenize
from .client import (
    BaseChatClient,
    ChatRequest,
    ChatResponse,
    LLMError,
    LLMStatusError,
    LLMTimeoutError,
    LLMTransportError,
    MalformedPayloadError,
)
from .prompts import DOC_MARKER, SCALES

Responder = Callable[[ChatRequest], Any]

STOPWORDS = frozenset(
    "a an the and or but if of to in on at by for with from as is are was were be been being it its this "
    "that these those i you he she we they them our your their my me us his her not no do does did have has "
    "had will would can could should may might so than then there here what which who whom when where why "
    "how all any each some such very just also into over after before about up down out more most".split()
)


def fingerprint(request: ChatRequest) -> str:
    blob = json.dumps([list(m) for m in request.messages], ensure_ascii=False)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _rng_for(request: ChatRequest, seed: int = 0, repeat: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, int(fingerprint(request), 16), repeat])


def _content_words(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS and not t.isdigit()]


def _sentences(text: str) -> list[str]:
    return [s.text for s in segment(text, "line" if "\n" in text else "punct")]


def _format_probs(probs) -> str:
    return "\n".join(f"{i}: {p:.3f}" for i, p in enumerate(probs))


def _rating_reply(value: float, lo: int, hi: int, top_n: int) -> dict:
    r = int(round(min(max(value, lo), hi)))
    reply: dict = {"text": str(r)}
    if top_n:
        weights = {r: 0.6}
        for off, w in ((-1, 0.15), (1, 0.15), (-2, 0.04), (2, 0.04)):
            if lo <= r + off <= hi:
                weights[r + off] = w
        reply["top_logprobs"] = [[str(k), v] for k, v in list(weights.items())[:top_n]]
    return reply


class HeuristicResponder:
    """Plausible stand-in replies computed from prompt metadata.

    * sentence probabilities: keyword centrality plus a small lead bonus;
    * generation: sentences resampled from the example groups at the requested mix;
    * paraphrase: the extract itself;
    * rating: coverage of the article's top keywords by the summary.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        # repeats of one sampling prompt get fresh draws, like temperature > 0
        self._repeats: Counter = Counter()
        self._lock = threading.Lock()

    def __call__(self, request: ChatRequest):
        task = request.meta.get("task")
        handler = getattr(self, f"_{task}", None)
        if handler is None:
            raise LLMError(f"heuristic responder cannot answer task {task!r}")
        return handler(request)

    def _sentence_probs(self, request: ChatRequest):
        sents = request.meta["sentences"]
        words = [_content_words(s) for s in sents]
        tf = Counter(w for ws in words for w in ws)
        raw = []
        for i, ws in enumerate(words):
            central = sum(tf[w] - 1 for w in set(ws)) / (len(set(ws)) + 1)
            raw.append(central + 0.5 / (1 + i))
        raw = np.asarray(raw, dtype=float)
        span = raw.max() - raw.min()
        probs = 0.05 + 0.9 * (raw - raw.min()) / span if span > 0 else np.full(len(raw), 0.5)
        return _format_probs(probs)

    def _abstractive(self, request: ChatRequest):
        return request.meta["extract"]

    def _score(self, request: ChatRequest):
        lo, hi = SCALES[request.meta["scale"]]
        tf = Counter(_content_words(request.meta["article"]))
        top = {w for w, _ in tf.most_common(10)}
        covered = top & set(_content_words(request.meta["summary"]))
        quality = len(covered) / len(top) if top else 0.0
        return _rating_reply(lo + quality * (hi - lo), lo, hi, request.want_top_logprobs)

    def _generate(self, request: ChatRequest):
        fp = fingerprint(request)
        with self._lock:
            repeat = self._repeats[fp]
            self._repeats[fp] += 1
        rng = _rng_for(request, self.seed, repeat)
        meta = request.meta
        groups = [[_sentences(t) for t in meta["group_a"]], [_sentences(t) for t in meta["group_b"]]]
        lengths = [len(s) for g in groups for s in g]
        alpha = meta["alpha"] / 100.0
        docs = []
        for _ in range(meta["n_new"]):
            n = int(rng.choice(lengths))
            out = []
            for pos in range(n):
                g = groups[0] if (not groups[1] or rng.random() < alpha) else groups[1]
                src = g[int(rng.integers(len(g)))]
                j = min(len(src) - 1, int(round(pos * len(src) / max(n, 1))))
                if rng.random() < 0.3:
                    j = int(rng.integers(len(src)))
                out.append(src[j])
            docs.append(" ".join(out))
        return "\n".join(f"{DOC_MARKER}\n{d}" for d in docs)


class OracleResponder:
    """Answers from ground truth, optionally corrupted with Gaussian noise.

    Sentence probabilities are the gold indicator plus ``label_noise`` noise;
    ratings are the candidate's ROUGE-2 F1 against the gold summary (scaled
    to the prompt's range) plus ``score_noise`` noise (on the 0-1 scale).
    Unknown documents fall through to ``fallback``.
    """

    def __init__(self, references: Mapping[str, LabeledExample], label_noise: float = 0.0,
                 score_noise: float = 0.0, seed: int = 0, fallback: Responder | None = None):
        self.references = dict(references)
        self.label_noise = label_noise
        self.score_noise = score_noise
        self.seed = seed
        self.fallback = fallback or HeuristicResponder(seed)

    def __call__(self, request: ChatRequest):
        ref = self.references.get(request.meta.get("doc_id"))
        task = request.meta.get("task")
        if ref is None or task not in ("sentence_probs", "score"):
            return self.fallback(request)
        rng = _rng_for(request, self.seed)
        if task == "sentence_probs":
            gold = set(ensure_extractive(ref, request.meta.get("p", 4)).sentence_indices)
            n = request.meta["n_listed"]
            probs = np.array([1.0 if i in gold else 0.0 for i in range(n)])
            if self.label_noise:
                probs = probs + rng.normal(0.0, self.label_noise, n)
            return _format_probs(np.clip(probs, 0.0, 1.0))
        lo, hi = SCALES[request.meta["scale"]]
        gold_text = ref.reference_text()
        q = rouge_n_tokens(tokenize(request.meta["summary"]), tokenize(gold_text), 2).f1
        if self.score_noise:
            q += rng.normal(0.0, self.score_noise)
        return _rating_reply(lo + min(max(q, 0.0), 1.0) * (hi - lo), lo, hi, request.want_top_logprobs)


def _alternatives_for(text: str, top_n: int) -> tuple[tuple[str, float], ...]:
    toks = text.split()
    if not toks or not top_n:
        return ()
    first = toks[0]
    if first.isdigit():
        r = int(first)
        weights = [(r, 0.6), (r - 1, 0.15), (r + 1, 0.15), (r - 2, 0.04), (r + 2, 0.04)]
        return tuple((str(v), w) for v, w in weights if v >= 0)[:top_n]
    return ((first, 1.0),)


class MockChatClient(BaseChatClient):
    def __init__(self, script: Mapping | str | Path | None = None, responder: Responder | None = None,
                 **kw):
        kw.setdefault("backoff", 0.0)
        kw.setdefault("max_in_flight", 1)
        super().__init__(**kw)
        if isinstance(script, (str, Path)):
            script = json.loads(Path(script).read_text())
        script = dict(script or {})
        self.replies: dict = dict(script.get("replies", {}))
        self.rules: list = list(script.get("rules", []))
        self.queue: deque = deque(script.get("queue", []))
        if responder is None and script.get("fallback", "none") == "heuristic":
            responder = HeuristicResponder(int(script.get("seed", 0)))
        self.responder = responder
        self.calls: list[tuple[str, ChatRequest]] = []
        self._lock = threading.Lock()

    def _resolve(self, request: ChatRequest):
        fp = fingerprint(request)
        with self._lock:
            self.calls.append((fp, request))
            if fp in self.replies:
                return self.replies[fp]
            prompt = request.prompt
            for rule in self.rules:
                if rule["contains"] in prompt:
                    return rule["reply"]
            if self.queue:
                return self.queue.popleft()
        if self.responder is not None:
            return self.responder(request)
        raise LLMError(f"mock has no reply for prompt {fp}")

    def _send(self, request: ChatRequest) -> ChatResponse:
        reply = self._resolve(request)
        if isinstance(reply, str):
            reply = {"text": reply}
        err = reply.get("error")
        if err:
            if err == "transport":
                raise LLMTransportError("scripted transport failure")
            if err == "timeout":
                raise LLMTimeoutError("scripted timeout")
            if err == "payload":
                raise MalformedPayloadError("scripted malformed payload")
            if err.startswith("status:"):
                raise LLMStatusError(int(err.split(":", 1)[1]))
            raise LLMError(f"scripted error {err!r}")
        text = reply.get("text", "")
        top_n = request.want_top_logprobs
        if "top_logprobs" in reply:
            raw = reply["top_logprobs"]
            pairs = raw.items() if isinstance(raw, dict) else raw
            alts = tuple((str(t), float(p)) for t, p in pairs)[:top_n] if top_n else ()
        else:
            alts = _alternatives_for(text, top_n)
        return ChatResponse(text=text, first_token_alternatives=alts)
