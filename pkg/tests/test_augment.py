import time

import numpy as np
import pytest

from mixsumm.augment import (
    EdaParams,
    GenerationStalledError,
    SynthesisJob,
    eda_augment,
    eda_augment_example,
    eda_sentence,
    label_document,
    load_lexicon,
    mixsumm_generate,
    mixsumm_label,
)
from mixsumm.cluster import ClusterPair
from mixsumm.corpus import dumps_jsonl
from mixsumm.llm import MockChatClient

from conftest import doc_of

HEURISTIC = {"fallback": "heuristic"}


@pytest.fixture
def groups(toy_corpus):
    train = [ex for ex in toy_corpus if ex.document.split == "train"][:20]
    return {c: train[c::4] for c in range(4)}


def pairs():
    return [ClusterPair(0, 2), ClusterPair(1, 3)]


def run_pipeline(groups, seed=0, target=40):
    client = MockChatClient(HEURISTIC)
    docs = mixsumm_generate(SynthesisJob(groups, pairs(), target, seed=seed, description="news"), client)
    return docs, mixsumm_label(docs, 4, client)


def test_generate_exact_count_ids_alpha(groups):
    docs, labeled = run_pipeline(groups)
    assert len(docs) == 40 and len(labeled) == 40
    assert len({d.id for d in docs}) == 40
    for d in docs:
        assert d.origin == "mixsumm" and d.split == "synthetic"
        assert 1 <= d.alpha <= 99 and d.pair in {(0, 2), (1, 3)}
    for ex in labeled:
        idx = ex.extractive.sentence_indices
        assert len(idx) == min(4, len(ex.document))
        assert list(idx) == sorted(set(idx)) and all(0 <= i < len(ex.document) for i in idx)


def test_generate_deterministic(groups):
    a, la = run_pipeline(groups, seed=3, target=12)
    b, lb = run_pipeline(groups, seed=3, target=12)
    assert dumps_jsonl(la) == dumps_jsonl(lb)
    c, _ = run_pipeline(groups, seed=4, target=12)
    assert [d.alpha for d in a] != [d.alpha for d in c]


def test_no_verbatim_copies(groups):
    docs, _ = run_pipeline(groups, target=20)
    seeds = {" ".join(ex.document.text.lower().split()) for g in groups.values() for ex in g}
    texts = [" ".join(d.text.lower().split()) for d in docs]
    assert len(set(texts)) == len(texts) and not seeds & set(texts)


def test_duplicates_discarded_then_stall(groups):
    seed_text = groups[0][0].document.text
    reply = f"@@@ DOCUMENT @@@\n{seed_text}\n@@@ DOCUMENT @@@\nA fresh document. It is new."
    client = MockChatClient({"rules": [{"contains": "Group A", "reply": reply}]})
    job = SynthesisJob(groups, pairs(), 3, n_new=2)
    with pytest.raises(GenerationStalledError) as err:
        mixsumm_generate(job, client)
    assert err.value.produced == 1 and err.value.target == 3


def test_failed_invocations_skip(groups):
    good = "@@@ DOCUMENT @@@\nDoc one here.\n@@@ DOCUMENT @@@\nDoc two here."
    client = MockChatClient({"queue": [{"error": "status:400"}, good]})
    docs = mixsumm_generate(SynthesisJob(groups, pairs(), 2, n_new=2), client)
    assert [list(d.texts) for d in docs] == [["Doc one here."], ["Doc two here."]]


def test_no_mix_single_group(groups):
    client = MockChatClient(HEURISTIC)
    docs = mixsumm_generate(SynthesisJob(groups, [], 7, mix=False, n_new=3), client)
    assert len(docs) == 7 and all(d.alpha is None and d.pair is None for d in docs)
    assert all("Group B" not in req.prompt for _, req in client.calls)


def test_job_validation(groups):
    with pytest.raises(ValueError):
        SynthesisJob(groups, pairs(), 0)
    with pytest.raises(ValueError):
        SynthesisJob({0: groups[0], 1: []}, [ClusterPair(0, 1)], 5)


def test_runtime_budget(groups):
    t = time.perf_counter()
    run_pipeline(groups)
    assert time.perf_counter() - t < 30


def test_label_document_short_and_abstractive():
    doc = doc_of("Only one.", "And two.", id="s")
    client = MockChatClient({"queue": ["0: 0.2\n1: 0.9", "A paraphrase."]})
    ex = label_document(doc, 4, client, want_abstractive=True)
    assert ex.extractive.sentence_indices == (0, 1)
    assert ex.abstractive.text == "A paraphrase."


def test_label_failures_dropped():
    docs = [doc_of("A b c.", "D e f.", id=f"x{i}") for i in range(3)]
    client = MockChatClient({"queue": ["0: 1\n1: 0", "garbage", "garbage", "garbage", "0: 0\n1: 1"]})
    out = mixsumm_label(docs, 1, client, retries=2)
    assert [ex.id for ex in out] == ["x0", "x2"]
    assert out[1].extractive.sentence_indices == (1,)


# --------------------------------------------------------------------- EDA

def test_eda_preserves_sentence_count_and_labels(small_example, rng):
    params = EdaParams(0.3, 0.3, 0.3, 0.3, load_lexicon())
    for _ in range(20):
        ex = eda_augment_example(small_example, params, rng, new_id="aug")
        assert len(ex.document) == len(small_example.document)
        assert ex.extractive == small_example.extractive
        assert ex.document.origin == "eda" and ex.id == "aug"


def test_eda_zero_rates_is_identity(small_example, rng):
    doc = eda_augment(small_example.document, EdaParams(0, 0, 0, 0), rng)
    assert doc.texts == small_example.document.texts and doc.text == small_example.document.text


def test_eda_synonyms_and_terminal_punctuation():
    params = EdaParams(0, 0, 0, 1.0, {"storm": ["gale"]})
    out = eda_sentence("The storm hit.", params, np.random.default_rng(0), [])
    assert out == "The gale hit."
    out = eda_sentence("Storm!", params, np.random.default_rng(0), [])
    assert out == "Gale!"


def test_eda_deterministic(small_example):
    p = EdaParams(0.2, 0.2, 0.2, 0.2, load_lexicon())
    a = eda_augment(small_example.document, p, np.random.default_rng(5))
    b = eda_augment(small_example.document, p, np.random.default_rng(5))
    assert a == b


def test_eda_params_validation():
    with pytest.raises(ValueError):
        EdaParams(swap_rate=1.5)


def test_lexicon_file(tmp_path):
    f = tmp_path / "lex.txt"
    f.write_text("# comment\nbig large\nBig huge\n\n")
    assert load_lexicon(f) == {"big": ["large", "huge"]}
    assert len(load_lexicon()) > 10
