import itertools
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixsumm.corpus import (
    AbstractiveSummary,
    CorpusError,
    Dataset,
    Document,
    ExtractiveSummary,
    LabeledExample,
    dumps_jsonl,
    ensure_extractive,
    greedy_extractive_oracle,
    ingest,
    load_dataset,
    load_documents,
    render_extractive,
    segment,
    sub_document,
    truncate_around_summary,
    window_indices,
)
from mixsumm.rouge import rouge_n

from conftest import doc_of

FIX = Path(__file__).parent / "fixtures"
TOY = Path(__file__).parents[1] / "src" / "mixsumm" / "data" / "toy_corpus.jsonl"


# --------------------------------------------------------------------- segmentation

def test_segment_three_marks():
    assert [s.text for s in segment("A. B! C?")] == ["A.", "B!", "C?"]


def test_segment_line_mode():
    sents = segment("Customer: hi\nAgent: hello\n\n")
    assert len(sents) == 1  # punct mode sees no terminal mark
    sents = segment("Customer: hi\nAgent: hello\n\n", "line")
    assert [s.text for s in sents] == ["Customer: hi", "Agent: hello"]
    assert [s.index for s in sents] == [0, 1]


def test_segment_abbreviation_fixture():
    fx = json.loads((FIX / "segmentation.json").read_text())
    assert [s.text for s in segment(fx["text"])] == fx["sentences"]


def test_segment_reconstructs_input():
    fx = json.loads((FIX / "segmentation.json").read_text())
    assert " ".join(s.text for s in segment(fx["text"])) == " ".join(fx["text"].split())


def test_segment_errors():
    with pytest.raises(CorpusError):
        segment("   ")
    with pytest.raises(ValueError):
        segment("a.", "paragraph")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["alpha", "beta", "gamma", "delta"]), min_size=1, max_size=6).map(
    lambda ws: [w.capitalize() + " ok" + p for w, p in zip(ws, itertools.cycle(".!?"))]))
def test_segment_round_trip_property(sentences):
    text = " ".join(sentences)
    out = segment(text)
    assert [s.text for s in out] == sentences
    assert [s.index for s in out] == list(range(len(sentences)))


# --------------------------------------------------------------------- types

def test_extractive_invariants():
    with pytest.raises(ValueError):
        ExtractiveSummary((2, 1), 4)
    with pytest.raises(ValueError):
        ExtractiveSummary((1, 1), 4)
    with pytest.raises(ValueError):
        ExtractiveSummary((0, 1, 2), 2)
    with pytest.raises(ValueError):
        ExtractiveSummary((), 0)
    doc = doc_of("a.", "b.")
    with pytest.raises(ValueError):
        LabeledExample(doc, ExtractiveSummary((2,), 1))


def test_labeled_example_needs_a_summary():
    with pytest.raises(CorpusError):
        LabeledExample(doc_of("a."))
    with pytest.raises(ValueError):
        AbstractiveSummary("  ")


def test_document_validation():
    with pytest.raises(CorpusError):
        Document("x", (), "")
    with pytest.raises(CorpusError):
        doc_of("a.", split="holdout")
    with pytest.raises(CorpusError):
        doc_of("a.", origin="robot")


def test_reference_text_prefers_extractive():
    doc = doc_of("One.", "Two.", "Three.")
    ex = LabeledExample(doc, ExtractiveSummary((0, 2), 2), AbstractiveSummary("Summary."))
    assert ex.reference_text() == "One. Three."
    assert ex.reference_text("abstractive") == "Summary."
    assert LabeledExample(doc, abstractive=AbstractiveSummary("S.")).reference_text() == "S."


# --------------------------------------------------------------------- ingest

def test_ingest_three_records():
    ds = ingest((FIX / "dialog.jsonl").read_bytes(), mode="line")
    assert len(ds) == 3
    assert [ex.id for ex in ds] == ["dlg-1", "dlg-2", "dlg-3"]
    assert len(ds.by_id()["dlg-1"].document) == 8
    assert ds.by_split("test")[0].abstractive.text.startswith("App crash")
    assert ds.by_id()["dlg-3"].document.origin == "eda"


def test_ingest_round_trip_is_byte_stable():
    raw = (FIX / "dialog.jsonl").read_text()
    ds = ingest(raw, mode="line")
    assert dumps_jsonl(ds) == raw


def test_ingest_errors_name_the_line():
    good = '{"id": "a", "text": "x.", "ext_indices": [0]}\n'
    with pytest.raises(CorpusError, match="line 2") as info:
        ingest(good + '{"id": "b", "text": "y."}\n')
    assert info.value.line == 2
    with pytest.raises(CorpusError, match="line 2.*duplicate"):
        ingest(good + good)
    with pytest.raises(CorpusError, match="line 1.*JSON"):
        ingest("{not json}\n")
    with pytest.raises(CorpusError, match="empty"):
        ingest("\n\n")
    with pytest.raises(CorpusError, match="line 1"):
        ingest('{"id": "a", "text": "x.", "ext_indices": [3]}\n')
    with pytest.raises(CorpusError):
        ingest(good, format_id="csv")


def test_load_documents_ignores_labels():
    docs = load_documents('{"id": "u1", "text": "Only text here. Two."}\n')
    assert len(docs) == 1 and len(docs[0]) == 2


def test_bundled_toy_corpus():
    ds = load_dataset(TOY)
    assert len(ds) == 100
    assert len({ex.id for ex in ds}) == 100
    counts = {s: len(ds.by_split(s)) for s in ("train", "valid", "test")}
    assert counts == {"train": 70, "valid": 15, "test": 15}
    assert all(ex.extractive is not None and ex.abstractive is not None for ex in ds)
    assert dumps_jsonl(ds) == TOY.read_text()


def test_dataset_rejects_duplicates():
    ex = LabeledExample(doc_of("a."), abstractive=AbstractiveSummary("a"))
    with pytest.raises(CorpusError):
        Dataset((ex, ex))


# --------------------------------------------------------------------- rendering

def test_render_extractive():
    doc = doc_of("a", "b", "c")
    assert render_extractive(doc, [0, 2]) == "a c"
    assert render_extractive(doc, ExtractiveSummary((), 1)) == ""


def test_render_dialog_fixture():
    ds = ingest((FIX / "dialog.jsonl").read_bytes(), mode="line")
    ex = ds.by_id()["dlg-1"]
    assert render_extractive(ex.document, ex.extractive) == (
        "Agent: sorry to hear that, can I have the order number? Agent: thanks, checking now "
        "Customer: can you resend it? Customer: great, thanks")


# --------------------------------------------------------------------- greedy oracle

FIVE = doc_of(
    "The council approved the new budget for schools.",
    "Rain is expected over the weekend.",
    "Teachers will receive a pay rise next year.",
    "The budget also funds two new libraries.",
    "A local team won the regional final.",
)
FIVE_REF = "Council approves school budget with teacher pay rise and new libraries."


def _score(doc, sel, ref):
    text = render_extractive(doc, sorted(sel))
    return rouge_n(text, ref, 1).f1 + rouge_n(text, ref, 2).f1 if text else 0.0


def test_greedy_exact_sentence():
    doc = doc_of("Cats sleep a lot.", "Dogs bark loudly.", "Markets rallied on strong earnings.")
    assert greedy_extractive_oracle(doc, "Markets rallied on strong earnings.", 1).sentence_indices == (2,)


def test_greedy_no_overlap_selects_nothing():
    assert greedy_extractive_oracle(FIVE, "zebra quokka", 3).sentence_indices == ()


def test_greedy_matches_exhaustive_or_follows_definition():
    got = greedy_extractive_oracle(FIVE, FIVE_REF, 2).sentence_indices
    best = max(itertools.combinations(range(5), 2), key=lambda c: (_score(FIVE, c, FIVE_REF), [-i for i in c]))
    if got == best:
        return
    # disagreement: check the greedy definition step by step
    first = max(range(5), key=lambda i: (_score(FIVE, [i], FIVE_REF), -i))
    assert first in got
    rest = [i for i in range(5) if i != first]
    second = max(rest, key=lambda i: (_score(FIVE, [first, i], FIVE_REF), -i))
    assert tuple(sorted((first, second))) == got


def test_greedy_steps_have_positive_gain():
    sel = greedy_extractive_oracle(FIVE, FIVE_REF, 4).sentence_indices
    # replay: every prefix chosen in greedy order strictly improves
    order, prev = [], 0.0
    remaining = set(sel)
    while remaining:
        nxt = max(remaining, key=lambda i: (_score(FIVE, order + [i], FIVE_REF), -i))
        cur = _score(FIVE, order + [nxt], FIVE_REF)
        assert cur > prev
        order.append(nxt)
        remaining.discard(nxt)
        prev = cur


def test_greedy_errors():
    with pytest.raises(ValueError):
        greedy_extractive_oracle(FIVE, "x", 0)
    with pytest.raises(ValueError):
        greedy_extractive_oracle(FIVE, "  ", 2)


def test_ensure_extractive_falls_back_to_oracle():
    ex = LabeledExample(FIVE, abstractive=AbstractiveSummary(FIVE_REF))
    assert ensure_extractive(ex, 2) == greedy_extractive_oracle(FIVE, FIVE_REF, 2)
    lab = LabeledExample(FIVE, ExtractiveSummary((1,), 1))
    assert ensure_extractive(lab, 3).sentence_indices == (1,)


# --------------------------------------------------------------------- truncation

def test_window_single():
    assert window_indices(10, [4], 1) == [3, 4, 5]


def test_window_overlap_union():
    assert window_indices(10, [2, 4], 2) == list(range(7))


def test_window_clipped_at_edges():
    assert window_indices(5, [0, 4], 1) == [0, 1, 3, 4]


def test_truncate_keeps_summary_sentences():
    doc = doc_of(*[f"S{i}." for i in range(10)])
    out = truncate_around_summary(doc, [4], 1)
    assert out.texts == ["S3.", "S4.", "S5."]
    assert [s.index for s in out.sentences] == [0, 1, 2]


def test_truncate_long_fixture_size():
    # 8 summary sentences, well separated, on a 200-sentence document
    summary = [10 + 24 * j for j in range(8)]
    sizes = {l: len(window_indices(200, summary, l)) for l in (5, 6)}
    assert sizes == {5: 88, 6: 104}  # (2l + 1) * 8 without overlaps
    # an average window of 5.21 lines interpolates to ~91 retained sentences
    interp = sizes[5] + 0.21 * (sizes[6] - sizes[5])
    assert interp == pytest.approx((2 * 5.21 + 1) * 8)
    assert round(interp) == 91


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.integers(0, n - 1), min_size=1, max_size=n), st.integers(0, 6))))
def test_truncation_properties(args):
    n, summary, l = args
    kept = window_indices(n, summary, l)
    assert set(summary) <= set(kept)
    assert kept == sorted(set(kept)) and len(kept) <= n
    assert len(kept) <= (2 * l + 1) * len(summary)


def test_window_errors():
    with pytest.raises(ValueError):
        window_indices(5, [1], -1)
    with pytest.raises(ValueError):
        window_indices(5, [5], 1)


def test_sub_document_reindexes():
    doc = doc_of("a.", "b.", "c.", "d.")
    sub = sub_document(doc, [1, 3], "#x")
    assert sub.id == "d#x" and sub.texts == ["b.", "d."]
    assert [s.index for s in sub.sentences] == [0, 1]
