"""Command line driver.

    mixsumm split     build the few-shot / unlabeled / valid / test files
    mixsumm augment   synthesize labeled training data (mixsumm, mixsumm_nomix, eda)
    mixsumm train     fit the reference teacher on a union of splits
    mixsumm ppsl      run the pseudo-labeling loop for one or more strategies
    mixsumm eval      score trained models (and the k-shot LLM baseline) on the test split
    mixsumm report    merge evaluations over seeds into markdown / CSV / PNG
    mixsumm sweep-t   split + train over several cluster counts

Every stage writes ``<artifact>.manifest.json`` next to its outputs and the
next stage refuses to run when an upstream manifest is missing or has a
different schema version. Outputs depend only on (inputs, seed, mock script),
so re-running a stage overwrites its files with identical bytes.

Exit codes: 0 ok, 1 user error (bad config, missing artifact), 2 pipeline error
(LLM, encoder or generation failure).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .augment import (
    EdaParams,
    GenerationStalledError,
    SynthesisJob,
    eda_augment_example,
    load_lexicon,
    mixsumm_generate,
    mixsumm_label,
)
from .cluster import (
    ClusteringError,
    ClusterModel,
    SamplingError,
    distant_pairs,
    kmeans,
    sample_fewshot,
    sample_random,
    sample_unlabeled,
)
from .corpus import CorpusError, LabeledExample, ingest, load_dataset, load_documents, write_jsonl
from .embed import EncoderError, EndpointConfig, embed_documents, hash_encoder, remote_encoder
from .evaluation import EvalReport, evaluate, markdown_table
from .llm import (
    API_KEY_ENV,
    BaseChatClient,
    LLMError,
    MockChatClient,
    OpenAIChatClient,
    ask_with_retries,
    build_kshot_prompt,
    parse_sentence_probs,
)
from .llm.prompts import PromptBudgetError
from .plotting import quality_bars, strategy_curves, sweep_plot
from .ppsl import STRATEGIES, PpslConfig, read_run_log
from .ppsl import run as run_ppsl
from .seeding import substream
from .teacher import ReferenceTeacher, TeacherConfig, select_top_n

log = logging.getLogger("mixsumm")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USER, EXIT_PIPELINE = 0, 1, 2
DATA = Path(__file__).parent / "data"
AUGMENT_METHODS = ("mixsumm", "mixsumm_nomix", "eda")

DEFAULTS: dict[str, Any] = {
    "corpus": str(DATA / "toy_corpus.jsonl"),
    "segmentation": "punct",
    "description": "",
    "encoder": {"kind": "hash", "dim": 256, "max_tokens": 512, "endpoint": None, "model": None},
    "T": 4,
    "k": 8,
    "m": 40,
    "p": 4,
    "rand": False,
    "augment": {"method": "mixsumm", "target_count": 40, "n_new": 5, "examples_per_group": 5,
                "abstractive": False, "eda": {}},
    "teacher": {},
    "ppsl": {"shortlist_size": 10, "select_count": 5, "n_cycles": 3, "strategy": "confidence_relabel_score",
             "score_scale": "0-100"},
    "eval": {"leval": True, "kshot": []},
    "sweep": {"T": [2, 4]},
    "llm": {"endpoint": None, "model": None, "timeout": 60.0, "retries": 2, "max_in_flight": 4,
            "max_context_tokens": 8192, "max_output_tokens": 1024},
    "mock_script": str(DATA / "mock_script.json"),
    "seeds": [0],
    "out": "runs",
}
_PATH_KEYS = ("corpus", "mock_script", "out")


class UserError(Exception):
    """Bad configuration or missing upstream artifact."""


class PipelineError(Exception):
    """A stage ran but could not produce its output."""


# --------------------------------------------------------------------- config

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _set_dotted(cfg: dict, dotted: str, value: Any) -> None:
    node = cfg
    *parents, leaf = dotted.split(".")
    for k in parents:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise UserError(f"cannot set {dotted!r}: {k!r} is not a section")
    node[leaf] = value


@dataclass
class PipelineConfig:
    corpus: Path
    segmentation: str
    description: str
    encoder: dict
    T: int
    k: int
    m: int
    p: int
    rand: bool
    augment: dict
    teacher: dict
    ppsl: dict
    eval: dict
    sweep: dict
    llm: dict
    mock_script: Path | None
    seeds: list[int]
    out: Path
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "PipelineConfig":
        """Defaults, then the YAML file, then ``overrides`` (already-parsed flag values)."""
        raw = copy.deepcopy(DEFAULTS)
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise UserError(f"config file not found: {path}")
            loaded = yaml.safe_load(path.read_text()) or {}
            if not isinstance(loaded, dict):
                raise UserError(f"{path}: top level must be a mapping")
            unknown = set(loaded) - set(DEFAULTS)
            if unknown:
                raise UserError(f"{path}: unknown keys {sorted(unknown)}")
            for key in _PATH_KEYS:
                if loaded.get(key):
                    loaded[key] = str((path.parent / loaded[key]).resolve()) if not Path(loaded[key]).is_absolute() \
                        else loaded[key]
            raw = _merge(raw, loaded)
        raw = _merge(raw, overrides or {})
        return cls.from_dict(raw, base)

    @classmethod
    def from_dict(cls, raw: dict, base: Path | None = None) -> "PipelineConfig":
        base = base or Path.cwd()

        def resolve(p):
            return None if p in (None, "") else (Path(p) if Path(p).is_absolute() else base / p)

        seeds = raw.get("seeds")
        if isinstance(seeds, int):
            seeds = [seeds]
        if not seeds:
            raise UserError("seeds must be a non-empty list")
        cfg = cls(
            corpus=resolve(raw["corpus"]), segmentation=raw["segmentation"], description=raw["description"] or "",
            encoder=dict(raw["encoder"]), T=int(raw["T"]), k=int(raw["k"]), m=int(raw["m"]), p=int(raw["p"]),
            rand=bool(raw["rand"]), augment=dict(raw["augment"]), teacher=dict(raw["teacher"] or {}),
            ppsl=dict(raw["ppsl"]), eval=dict(raw["eval"]), sweep=dict(raw["sweep"]), llm=dict(raw["llm"]),
            mock_script=resolve(raw["mock_script"]), seeds=[int(s) for s in seeds], out=resolve(raw["out"]),
            raw=raw,
        )
        if not cfg.corpus.exists():
            raise UserError(f"corpus not found: {cfg.corpus}")
        if cfg.mock_script is not None and not cfg.llm.get("endpoint") and not cfg.mock_script.exists():
            raise UserError(f"mock script not found: {cfg.mock_script}")
        if cfg.segmentation not in ("line", "punct"):
            raise UserError("segmentation must be 'line' or 'punct'")
        for name in ("T", "k", "p"):
            if getattr(cfg, name) < 1:
                raise UserError(f"{name} must be >= 1")
        if cfg.m < 0:
            raise UserError("m must be >= 0")
        return cfg

    def seed_dir(self, seed: int) -> Path:
        return self.out / f"seed-{seed}"

    @property
    def budget(self) -> int:
        return int(self.llm["max_context_tokens"]) - int(self.llm["max_output_tokens"])


def stage_seed(seed: int, stage: str) -> int:
    """Integer seed for one pipeline stage, derived from the root seed."""
    return int(substream(seed, stage).integers(2**31 - 1))


# --------------------------------------------------------------------- artifacts

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_manifest(path: Path, stage: str, seed: int, files: Sequence[str], **extra) -> None:
    obj = {"schema_version": SCHEMA_VERSION, "stage": stage, "seed": seed, "files": sorted(files), **extra}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj))


def require_manifest(path: Path, producer: str) -> dict:
    """Load an upstream manifest, checking its schema version and listed files."""
    if not path.exists():
        raise UserError(f"missing {path}; run `mixsumm {producer}` first")
    obj = json.loads(path.read_text())
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise UserError(f"{path} has schema_version {obj.get('schema_version')}, expected {SCHEMA_VERSION}; "
                        f"re-run `mixsumm {producer}`")
    for name in obj.get("files", []):
        if not (path.parent / name).exists():
            raise UserError(f"missing {path.parent / name} (listed in {path}); re-run `mixsumm {producer}`")
    return obj


def _read_examples(path: Path, mode: str) -> list[LabeledExample]:
    with open(path, "rb") as fh:
        return list(ingest(fh, "jsonl", mode).examples)


def make_client(cfg: PipelineConfig) -> BaseChatClient:
    llm = cfg.llm
    common = dict(retries=int(llm["retries"]), max_context_tokens=int(llm["max_context_tokens"]))
    if llm.get("endpoint"):
        if not llm.get("model"):
            raise UserError("llm.model is required when an endpoint is configured")
        return OpenAIChatClient(llm["endpoint"], llm["model"], timeout=float(llm["timeout"]),
                                max_in_flight=int(llm["max_in_flight"]), **common)
    if cfg.mock_script is None:
        raise UserError(f"no LLM endpoint and no mock script; pass --endpoint (token in ${API_KEY_ENV}) "
                        "or --mock-script")
    return MockChatClient(cfg.mock_script, **common)


def make_encoder(cfg: PipelineConfig, seed: int):
    enc = cfg.encoder
    if enc["kind"] == "hash":
        return hash_encoder(int(enc["dim"]), seed=seed, max_tokens=int(enc["max_tokens"]))
    if enc["kind"] == "remote":
        if not enc.get("endpoint"):
            raise UserError("encoder.endpoint is required for kind 'remote'")
        import os

        return remote_encoder(EndpointConfig(enc["endpoint"], enc.get("model"), os.environ.get(API_KEY_ENV),
                                             int(enc["dim"]), int(enc["max_tokens"])))
    raise UserError(f"unknown encoder kind {enc['kind']!r}")


def _teacher_config(cfg: PipelineConfig, seed: int) -> TeacherConfig:
    try:
        return TeacherConfig(**{**cfg.teacher, "summary_size": cfg.p, "seed": seed})
    except TypeError as exc:
        raise UserError(f"bad teacher settings: {exc}") from None


# --------------------------------------------------------------------- split

def split_one(cfg: PipelineConfig, seed: int, dest: Path, T: int | None = None) -> dict:
    T = cfg.T if T is None else T
    ds = load_dataset(cfg.corpus, cfg.segmentation)
    train, valid, test = ds.by_split("train"), ds.by_split("valid"), ds.by_split("test")
    if not train:
        raise UserError(f"{cfg.corpus} has no records with split 'train'")
    s = stage_seed(seed, "split")
    dest.mkdir(parents=True, exist_ok=True)
    files = ["fewshot.jsonl", "unlabeled.jsonl", "valid.jsonl", "test.jsonl"]
    if cfg.rand:
        fewshot = sample_random(train, cfg.k, s)
        (dest / "clusters.json").unlink(missing_ok=True)
    else:
        docs = [ex.document for ex in train]
        vecs = embed_documents(make_encoder(cfg, s), docs)
        model = kmeans(vecs, T, seed=s, ids=[d.id for d in docs], normalize=True)
        model.save(dest / "clusters.json")
        files.append("clusters.json")
        fewshot = sample_fewshot(model, train, cfg.k, s)
    unlabeled = sample_unlabeled(train, fewshot, cfg.m, stage_seed(seed, "split-unlabeled"))
    write_jsonl(dest / "fewshot.jsonl", fewshot)
    write_jsonl(dest / "unlabeled.jsonl", unlabeled)
    write_jsonl(dest / "valid.jsonl", valid)
    write_jsonl(dest / "test.jsonl", test)
    write_manifest(dest / "manifest.json", "split", seed, files, rand=cfg.rand, T=T, k=cfg.k, m=cfg.m,
                   corpus=cfg.corpus.name)
    log.info("split seed=%d: %d few-shot, %d unlabeled, %d valid, %d test", seed, len(fewshot), len(unlabeled),
             len(valid), len(test))
    return {"fewshot": len(fewshot), "unlabeled": len(unlabeled)}


def cmd_split(cfg: PipelineConfig, args) -> None:
    for seed in cfg.seeds:
        split_one(cfg, seed, cfg.seed_dir(seed) / "split")


# --------------------------------------------------------------------- augment

def _groups(cfg: PipelineConfig, seed: int, split_dir: Path, fewshot: list[LabeledExample]):
    """Few-shot examples grouped by cluster, plus the distant cluster pairs."""
    path = split_dir / "clusters.json"
    if path.exists():
        model = ClusterModel.load(path)
    else:
        # random few-shot sets carry no clusters; group the sampled examples themselves
        T = max(2, min(cfg.T, len(fewshot) // 2))
        docs = [ex.document for ex in fewshot]
        vecs = embed_documents(make_encoder(cfg, stage_seed(seed, "split")), docs)
        model = kmeans(vecs, T, seed=stage_seed(seed, "augment-groups"), ids=[d.id for d in docs], normalize=True)
    groups = {c: [ex for ex in fewshot if model.assignments.get(ex.id) == c] for c in range(model.T)}
    pairs = [pr for pr in distant_pairs(model) if groups[pr.a] and groups[pr.b]]
    return {c: g for c, g in groups.items() if g}, pairs


def augment_one(cfg: PipelineConfig, seed: int, method: str, client: BaseChatClient | None = None) -> int:
    root = cfg.seed_dir(seed)
    require_manifest(root / "split" / "manifest.json", "split")
    fewshot = _read_examples(root / "split" / "fewshot.jsonl", cfg.segmentation)
    a = cfg.augment
    target = int(a["target_count"])
    s = stage_seed(seed, f"augment-{method}")
    if method == "eda":
        params = EdaParams(**{**dict(a.get("eda") or {}), "synonym_lexicon": load_lexicon()})
        rng = substream(s, "eda")
        out = [eda_augment_example(fewshot[i % len(fewshot)], params, rng, new_id=f"eda-{i:05d}")
               for i in range(target)]
    else:
        client = client or make_client(cfg)
        groups, pairs = _groups(cfg, seed, root / "split", fewshot)
        mix = method == "mixsumm"
        if mix and not pairs:
            raise PipelineError("no cluster pair has few-shot examples on both sides")
        job = SynthesisJob(groups=groups, pairs=pairs, target_count=target, p=cfg.p, seed=s,
                           description=cfg.description, n_new=int(a["n_new"]),
                           examples_per_group=int(a["examples_per_group"]), mix=mix, mode=cfg.segmentation,
                           budget=cfg.budget, retries=int(cfg.llm["retries"]))
        docs = mixsumm_generate(job, client)
        out = mixsumm_label(docs, cfg.p, client, bool(a.get("abstractive")), cfg.budget, int(cfg.llm["retries"]))
        if not out:
            raise PipelineError("every generated document failed labeling")
    dest = root / "augment"
    dest.mkdir(parents=True, exist_ok=True)
    write_jsonl(dest / f"{method}.jsonl", out)
    write_manifest(dest / f"{method}.manifest.json", "augment", seed, [f"{method}.jsonl"], method=method,
                   n_records=len(out))
    log.info("augment %s seed=%d: %d records", method, seed, len(out))
    return len(out)


def cmd_augment(cfg: PipelineConfig, args) -> None:
    method = args.method or cfg.augment["method"]
    if method not in AUGMENT_METHODS:
        raise UserError(f"method must be one of {AUGMENT_METHODS}")
    client = None if method == "eda" else make_client(cfg)
    for seed in cfg.seeds:
        augment_one(cfg, seed, method, client)


# --------------------------------------------------------------------- train

def _training_set(cfg: PipelineConfig, seed: int, source: str) -> list[LabeledExample]:
    root = cfg.seed_dir(seed)
    if source == "fewshot":
        require_manifest(root / "split" / "manifest.json", "split")
        return _read_examples(root / "split" / "fewshot.jsonl", cfg.segmentation)
    if source == "full":
        return load_dataset(cfg.corpus, cfg.segmentation).by_split("train")
    if source in AUGMENT_METHODS:
        require_manifest(root / "augment" / f"{source}.manifest.json", f"augment --method {source}")
        return _read_examples(root / "augment" / f"{source}.jsonl", cfg.segmentation)
    raise UserError(f"unknown training source {source!r}; use fewshot, full or one of {AUGMENT_METHODS}")


def train_one(cfg: PipelineConfig, seed: int, sources: Sequence[str], name: str | None = None) -> Path:
    root = cfg.seed_dir(seed)
    require_manifest(root / "split" / "manifest.json", "split")
    train = [ex for src in sources for ex in _training_set(cfg, seed, src)]
    valid = _read_examples(root / "split" / "valid.jsonl", cfg.segmentation) \
        if (root / "split" / "valid.jsonl").stat().st_size else []
    name = name or "+".join(sources)
    teacher = ReferenceTeacher(_teacher_config(cfg, stage_seed(seed, "train"))).fit(train, valid)
    dest = root / "train"
    dest.mkdir(parents=True, exist_ok=True)
    teacher.save(dest / f"{name}.json")
    write_manifest(dest / f"{name}.manifest.json", "train", seed, [f"{name}.json"], model=f"{name}.json",
                   name=name, sources=list(sources), n_train=len(train))
    log.info("train %s seed=%d: %d examples", name, seed, len(train))
    return dest / f"{name}.json"


def cmd_train(cfg: PipelineConfig, args) -> None:
    sources = [s for s in args.on.split(",") if s]
    for seed in cfg.seeds:
        train_one(cfg, seed, sources, args.name)


# --------------------------------------------------------------------- ppsl

def ppsl_one(cfg: PipelineConfig, seed: int, strategy: str, client: BaseChatClient | None = None) -> Path:
    root = cfg.seed_dir(seed)
    require_manifest(root / "split" / "manifest.json", "split")
    labeled = _read_examples(root / "split" / "fewshot.jsonl", cfg.segmentation)
    with open(root / "split" / "unlabeled.jsonl", "rb") as fh:
        pool = load_documents(fh, "jsonl", cfg.segmentation) if (root / "split" / "unlabeled.jsonl").stat().st_size \
            else []
    valid = _read_examples(root / "split" / "valid.jsonl", cfg.segmentation) \
        if (root / "split" / "valid.jsonl").stat().st_size else []
    pseed = stage_seed(seed, "ppsl")
    settings = {k: v for k, v in cfg.ppsl.items() if k != "strategy"}
    try:
        config = PpslConfig(**settings, strategy=strategy, seed=pseed, p=cfg.p, budget=cfg.budget,
                            retries=int(cfg.llm["retries"]))
    except TypeError as exc:
        raise UserError(f"bad ppsl settings: {exc}") from None
    if strategy != "random" and client is None:
        client = make_client(cfg)
    # gold labels of pool documents are used only to report pseudo-label quality
    gold = load_dataset(cfg.corpus, cfg.segmentation).by_id()
    refs = {d.id: gold[d.id] for d in pool if d.id in gold}
    tcfg = _teacher_config(cfg, pseed)
    result = run_ppsl(config, labeled, pool, client, valid, refs or None, lambda: ReferenceTeacher(tcfg))
    dest = root / "ppsl"
    dest.mkdir(parents=True, exist_ok=True)
    result.write(dest / f"{strategy}.jsonl")
    result.teacher.save(dest / f"{strategy}.teacher.json")
    write_manifest(dest / f"{strategy}.manifest.json", "ppsl", seed,
                   [f"{strategy}.jsonl", f"{strategy}.teacher.json"], model=f"{strategy}.teacher.json",
                   name=f"ppsl-{strategy}", strategy=strategy, splits_key=result.splits_key,
                   n_cycles=len(result.history), stop_reason=result.stop_reason)
    log.info("ppsl %s seed=%d: %d cycles, %d labeled", strategy, seed, len(result.history),
             len(result.state.labeled))
    return dest / f"{strategy}.jsonl"


def cmd_ppsl(cfg: PipelineConfig, args) -> None:
    strategies = (args.strategy or cfg.ppsl["strategy"]).split(",")
    for s in strategies:
        if s not in STRATEGIES:
            raise UserError(f"strategy must be one of {STRATEGIES}, got {s!r}")
    client = make_client(cfg) if any(s != "random" for s in strategies) else None
    for seed in cfg.seeds:
        for s in strategies:
            ppsl_one(cfg, seed, s, client)


# --------------------------------------------------------------------- eval

def available_models(root: Path) -> dict[str, Path]:
    """``name -> checkpoint`` for every trained teacher under a seed directory."""
    out = {}
    for stage in ("train", "ppsl"):
        for mf in sorted((root / stage).glob("*.manifest.json")):
            obj = require_manifest(mf, stage)
            out[obj["name"]] = mf.parent / obj["model"]
    return out


def kshot_predictions(fewshot: Sequence[LabeledExample], test: Sequence[LabeledExample], k: int, p: int,
                      client: BaseChatClient, seed: int, budget: int | None, retries: int):
    rng = substream(seed, f"kshot-{k}")
    preds = {}
    for ex in test:
        shots = [fewshot[i] for i in sorted(rng.choice(len(fewshot), size=min(k, len(fewshot)), replace=False))]
        req = build_kshot_prompt(shots, ex.document, p, budget)
        n = req.meta["n_listed"]
        probs = ask_with_retries(client, req, lambda r: parse_sentence_probs(r.text, n), retries)
        preds[ex.id] = select_top_n(list(probs) + [0.0] * (len(ex.document) - n), p)
    return preds


def eval_one(cfg: PipelineConfig, seed: int, names: Sequence[str] | None, leval: bool, kshot: Sequence[int],
             client: BaseChatClient | None = None) -> list[EvalReport]:
    root = cfg.seed_dir(seed)
    require_manifest(root / "split" / "manifest.json", "split")
    test = _read_examples(root / "split" / "test.jsonl", cfg.segmentation) \
        if (root / "split" / "test.jsonl").stat().st_size else []
    if not test:
        raise UserError(f"{root / 'split' / 'test.jsonl'} is empty; the corpus needs records with split 'test'")
    models = available_models(root)
    if names:
        missing = [n for n in names if n not in models]
        if missing:
            raise UserError(f"no trained model named {missing} under {root}; available: {sorted(models)}")
        models = {n: models[n] for n in names}
    if not models and not kshot:
        raise UserError(f"nothing to evaluate under {root}; run `mixsumm train` or `mixsumm ppsl` first")
    if (leval or kshot) and client is None:
        client = make_client(cfg)
    dest = root / "eval"
    dest.mkdir(parents=True, exist_ok=True)
    reports = []
    jobs: list[tuple[str, Any]] = [(n, ReferenceTeacher.load(path)) for n, path in models.items()]
    if kshot:
        fewshot = _read_examples(root / "split" / "fewshot.jsonl", cfg.segmentation)
        for k in kshot:
            preds = kshot_predictions(fewshot, test, k, cfg.p, client, stage_seed(seed, "eval"), cfg.budget,
                                      int(cfg.llm["retries"]))
            jobs.append((f"llm-{k}shot", preds))
    for name, model in jobs:
        rep = evaluate(model, test, want_leval=leval, client=client, p=cfg.p, name=name)
        (dest / f"{name}.json").write_text(_dump(rep.to_json()))
        (dest / f"{name}.csv").write_text(rep.to_csv())
        write_manifest(dest / f"{name}.manifest.json", "eval", seed, [f"{name}.json", f"{name}.csv"], name=name,
                       report=f"{name}.json", leval=leval)
        log.info("eval %s seed=%d: %s", name, seed, {k: round(v, 4) for k, v in rep.means().items()})
        reports.append(rep)
    return reports


def _int_list(text: str | None) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()] if text else []
    except ValueError:
        raise UserError(f"expected a comma-separated list of integers, got {text!r}") from None


def cmd_eval(cfg: PipelineConfig, args) -> None:
    names = [n for n in args.models.split(",") if n] if args.models else None
    leval = cfg.eval["leval"] if args.leval is None else args.leval
    kshot = _int_list(args.kshot) if args.kshot is not None else [int(k) for k in cfg.eval.get("kshot") or []]
    client = make_client(cfg) if (leval or kshot) else None
    for seed in cfg.seeds:
        eval_one(cfg, seed, names, leval, kshot, client)


# --------------------------------------------------------------------- report

def _order(name: str) -> tuple:
    # baselines first, then augmentation, then pseudo-labeling, then LLM in-context
    rank = 0 if name in ("fewshot", "full") else 3 if name.startswith("llm-") else 2 if name.startswith("ppsl-") else 1
    return rank, name


def welch_tests(reports: Sequence[EvalReport], metric: str = "rouge1") -> list[tuple[str, str, float, float]]:
    """Welch t-test of every method against the best-scoring one on per-seed means."""
    from scipy import stats

    usable = [r for r in reports if len(r.runs) >= 2 and all(metric in run for run in r.runs)]
    if len(usable) < 2:
        return []
    best = max(usable, key=lambda r: np.mean([run[metric] for run in r.runs]))
    a = [run[metric] for run in best.runs]
    out = []
    for rep in usable:
        if rep is best:
            continue
        b = [run[metric] for run in rep.runs]
        if np.std(a) + np.std(b) < 1e-9:
            # (near) zero variance on both sides: the statistic is undefined
            out.append((best.name, rep.name, float("nan"), float("nan")))
            continue
        with warnings.catch_warnings():
            # constant arm: scipy flags the exact-zero variance as precision loss
            warnings.filterwarnings("ignore", "Precision loss", RuntimeWarning)
            t, pval = stats.ttest_ind(a, b, equal_var=False)
        out.append((best.name, rep.name, float(t), float(pval)))
    return out


def strategy_aggregate(cfg: PipelineConfig) -> tuple[dict, dict]:
    """Per-strategy validation curves and selected pseudo-label quality across seeds."""
    logs: dict[str, list] = {}
    for seed in cfg.seeds:
        for mf in sorted((cfg.seed_dir(seed) / "ppsl").glob("*.manifest.json")):
            obj = require_manifest(mf, "ppsl")
            logs.setdefault(obj["strategy"], []).append(read_run_log(mf.parent / f"{obj['strategy']}.jsonl"))
    curves, quality = {}, {}
    for strategy in [s for s in STRATEGIES if s in logs]:
        runs = logs[strategy]
        pts = []
        for c in range(1, max(len(r) for r in runs) + 1):
            vals = [r[c - 1].validation["rouge1"] for r in runs if len(r) >= c and "rouge1" in r[c - 1].validation]
            if vals:
                pts.append((c, float(np.mean(vals)), float(np.std(vals)), len(vals)))
        curves[strategy] = pts
        q = [np.mean([rec.pseudo_label_rouge2 for rec in r if rec.pseudo_label_rouge2 is not None])
             for r in runs if any(rec.pseudo_label_rouge2 is not None for rec in r)]
        if q:
            quality[strategy] = (float(np.mean(q)), float(np.std(q)))
    return curves, quality


def build_report(cfg: PipelineConfig, dest: Path | None = None) -> Path:
    dest = dest or cfg.out / "report"
    per_name: dict[str, list[EvalReport]] = {}
    for seed in cfg.seeds:
        for mf in sorted((cfg.seed_dir(seed) / "eval").glob("*.manifest.json")):
            obj = require_manifest(mf, "eval")
            rep = EvalReport.from_json(json.loads((mf.parent / obj["report"]).read_text()))
            per_name.setdefault(obj["name"], []).append(rep)
    if not per_name:
        raise UserError(f"no evaluations found under {cfg.out}/seed-*/eval; run `mixsumm eval` first")
    combined = [EvalReport.combine(name, reps) for name, reps in sorted(per_name.items(), key=lambda kv: _order(kv[0]))]
    dest.mkdir(parents=True, exist_ok=True)

    lines = ["# Results", "", f"Test-set scores over seeds {cfg.seeds}; cells are mean (std) when more than one "
             "seed ran.", "", markdown_table(combined)]
    tests = welch_tests(combined)
    if tests:
        lines += ["## Welch t-test on R-1", "", "| Best | Other | t | p |", "|---|---|---:|---:|"]
        lines += [f"| {a} | {b} | {t:.3f} | {p:.4f} |" for a, b, t, p in tests] + [""]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "metric", "mean", "std", "n_runs"])
    for rep in combined:
        for metric, (m, s) in rep.summary().items():
            w.writerow([rep.name, metric, f"{m:.6f}", f"{s:.6f}", len(rep.runs)])
    (dest / "results.csv").write_text(buf.getvalue())

    curves, quality = strategy_aggregate(cfg)
    if curves:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["strategy", "cycle", "rouge1_mean", "rouge1_std", "n_seeds"])
        for strategy, pts in curves.items():
            for c, m, s, n in pts:
                w.writerow([strategy, c, f"{m:.6f}", f"{s:.6f}", n])
        (dest / "curves.csv").write_text(buf.getvalue())
        strategy_curves({k: [(c, 100 * m, 100 * s) for c, m, s, _ in v] for k, v in curves.items()},
                        dest / "strategy_curves.png")
        lines += ["## Pseudo-labeling strategies", "",
                  "| Strategy | Cycles | Final validation R-1 (%) | Selected pseudo-label R-2 (%) |",
                  "|---|---:|---:|---:|"]
        for strategy, pts in curves.items():
            final = f"{100 * pts[-1][1]:.1f}" if pts else "-"
            q = f"{100 * quality[strategy][0]:.1f}" if strategy in quality else "-"
            lines.append(f"| {strategy} | {len(pts)} | {final} | {q} |")
        lines += ["", "Validation R-1 per cycle: `curves.csv`, `strategy_curves.png`.", ""]
        if quality:
            quality_bars({k: (100 * m, 100 * s) for k, (m, s) in quality.items()}, dest / "pseudo_label_quality.png")
    (dest / "report.md").write_text("\n".join(lines).rstrip() + "\n")
    log.info("report written to %s", dest / "report.md")
    return dest / "report.md"


def cmd_report(cfg: PipelineConfig, args) -> None:
    build_report(cfg, Path(args.dest) if args.dest else None)


# --------------------------------------------------------------------- sweep over T

def sweep_t(cfg: PipelineConfig, Ts: Sequence[int], leval: bool, client: BaseChatClient | None = None) -> Path:
    if any(T < 2 for T in Ts):
        raise UserError("every T must be >= 2")
    if leval and client is None:
        client = make_client(cfg)
    rows = []
    for T in Ts:
        scores = []
        for seed in cfg.seeds:
            split_dir = cfg.out / "sweep" / f"T{T}" / f"seed-{seed}" / "split"
            split_one(cfg, seed, split_dir, T=T)
            fewshot = _read_examples(split_dir / "fewshot.jsonl", cfg.segmentation)
            valid = _read_examples(split_dir / "valid.jsonl", cfg.segmentation) \
                if (split_dir / "valid.jsonl").stat().st_size else []
            if not valid:
                raise UserError("sweep-t scores on the validation split, but the corpus has none")
            teacher = ReferenceTeacher(_teacher_config(cfg, stage_seed(seed, "train"))).fit(fewshot, valid)
            scores.append(evaluate(teacher, valid, want_leval=leval, client=client, p=cfg.p).means())
        row = {"T": T, "n_seeds": len(scores)}
        for metric in ("rouge2", "leval"):
            vals = [s[metric] for s in scores if metric in s]
            if vals:
                row[metric], row[f"{metric}_std"] = float(np.mean(vals)), float(np.std(vals))
        rows.append(row)
    dest = cfg.out / "sweep"
    buf = io.StringIO()
    cols = ["T", "n_seeds", "rouge2", "rouge2_std"] + (["leval", "leval_std"] if leval else [])
    w = csv.DictWriter(buf, cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    (dest / "sweep.csv").write_text(buf.getvalue())
    head = "| T | Validation R-2 (%) |" + (" L-Eval (%) |" if leval else "")
    lines = [head, "|---:|---:|" + ("---:|" if leval else "")]
    for r in rows:
        cell = f"| {r['T']} | {100 * r['rouge2']:.1f} ({100 * r['rouge2_std']:.1f}) |"
        if leval:
            cell += f" {10 * r['leval']:.1f} ({10 * r['leval_std']:.1f}) |"
        lines.append(cell)
    (dest / "sweep.md").write_text("\n".join(lines) + "\n")
    sweep_plot(rows, dest / "sweep.png")
    return dest / "sweep.md"


def cmd_sweep_t(cfg: PipelineConfig, args) -> None:
    Ts = _int_list(args.T) if args.T else [int(t) for t in cfg.sweep["T"]]
    leval = cfg.eval["leval"] if args.leval is None else args.leval
    sweep_t(cfg, Ts, leval)


# --------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file; flags override its values")
    common.add_argument("--seed", type=int, help="run a single root seed instead of the configured list")
    common.add_argument("--mock-script", help="JSON script for the offline mock LLM")
    common.add_argument("--endpoint", help=f"OpenAI-compatible LLM endpoint (token read from ${API_KEY_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set ppsl.n_cycles=5 (value parsed as YAML)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mixsumm", description="Low-resource summarization pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", parents=[common], help="build few-shot and unlabeled splits")
    p.add_argument("--rand", action="store_true", default=None, help="uniform k-sample instead of clustering")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", parents=[common], help="synthesize labeled training data")
    p.add_argument("--method", choices=AUGMENT_METHODS)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common], help="fit the reference teacher")
    p.add_argument("--on", default="fewshot", help="comma-separated sources: fewshot, full, mixsumm, ...")
    p.add_argument("--name", help="model name (default: sources joined by '+')")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ppsl", parents=[common], help="run prompt-based pseudo-labeling")
    p.add_argument("--strategy", help=f"comma-separated, from {', '.join(STRATEGIES)}")
    p.set_defaults(func=cmd_ppsl)

    p = sub.add_parser("eval", parents=[common], help="score models on the test split")
    p.add_argument("--models", help="comma-separated model names (default: all trained)")
    p.add_argument("--leval", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--kshot", help="comma-separated k values for the in-context LLM baseline")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="merge evaluations into report files")
    p.add_argument("--dest", help="report directory (default: <out>/report)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep-t", parents=[common], help="split + train over several cluster counts")
    p.add_argument("--T", help="comma-separated cluster counts")
    p.add_argument("--leval", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_sweep_t)
    return parser


def config_from_args(args) -> PipelineConfig:
    over: dict = {}
    for item in args.set:
        if "=" not in item:
            raise UserError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        _set_dotted(over, key.strip(), yaml.safe_load(value))
    if args.seed is not None:
        over["seeds"] = [args.seed]
    if args.mock_script:
        over["mock_script"] = str(Path(args.mock_script).resolve())
    if args.endpoint:
        over.setdefault("llm", {})["endpoint"] = args.endpoint
    if args.out:
        over["out"] = str(Path(args.out).resolve())
    if getattr(args, "rand", None):
        over["rand"] = True
    return PipelineConfig.load(args.config, over)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        args.func(cfg, args)
    except (PipelineError, LLMError, EncoderError, GenerationStalledError, PromptBudgetError) as exc:
        log.error("%s", exc)
        print(f"mixsumm {args.command}: pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (UserError, CorpusError, ClusteringError, SamplingError, FileNotFoundError, ValueError) as exc:
        print(f"mixsumm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
