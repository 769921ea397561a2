import math

import pytest
from hypothesis import given, strategies as st

from mixsumm.corpus import ExtractiveSummary, LabeledExample
from mixsumm.evaluation import (
    EvalReport,
    EvalRow,
    evaluate,
    expected_rating,
    l_eval,
    markdown_table,
    rating_mass,
)
from mixsumm.llm import MalformedResponseError, MockChatClient
from mixsumm.teacher import ReferenceTeacher

from conftest import doc_of


def scored(alts):
    return MockChatClient({"queue": [{"text": alts[0][0], "top_logprobs": alts}]})


def leval_of(alts):
    return l_eval(doc_of("An article."), "A summary.", scored(alts)).value


def test_full_mass():
    assert leval_of([["7", 1.0]]) == 7.0


def test_split_mass():
    assert leval_of([["8", .5], ["6", .5]]) == pytest.approx(7.0)


def test_no_renormalization():
    # 0.6 * 9 + 0.1 * 8 = 6.2; the remaining 0.3 sits on non-rating tokens and counts as zero
    assert leval_of([["9", .6], ["The", .2], ["8", .1], ["**", .1]]) == pytest.approx(6.2)
    # renormalizing would have given 6.2 / 0.7
    assert not math.isclose(leval_of([["9", .6], ["8", .1]]), 6.2 / 0.7)


def test_no_integer_alternative():
    with pytest.raises(MalformedResponseError):
        leval_of([["Good", .9], ["0", .1]])


def test_ten_as_single_token():
    assert leval_of([["10", .5], ["9", .5]]) == pytest.approx(9.5)


def test_prompt_requests_top5_on_1_to_10():
    m = scored([["5", 1.0]])
    l_eval(doc_of("Article."), "Sum.", m)
    req = m.calls[0][1]
    assert req.want_top_logprobs == 5 and "between 1 and 10" in req.prompt


mass_st = st.dictionaries(st.integers(1, 10), st.floats(0, 0.2, allow_nan=False), min_size=1, max_size=5)


@given(mass_st)
def test_expected_rating_oracle(mass):
    assert expected_rating(mass) == pytest.approx(sum(r * p for r, p in mass.items()), abs=1e-9)
    assert 0 <= expected_rating(mass) <= 10


@given(mass_st, st.data())
def test_monotone_mass_shift(mass, data):
    lo = data.draw(st.sampled_from(sorted(mass)))
    hi = data.draw(st.integers(lo, 10))
    amount = data.draw(st.floats(0, mass[lo]))
    moved = dict(mass)
    moved[lo] -= amount
    moved[hi] = moved.get(hi, 0.0) + amount
    assert expected_rating(moved) >= expected_rating(mass) - 1e-12


def test_rating_mass_filters_tokens():
    assert rating_mass([(" 7", .3), ("7", .2), ("11", .1), ("x", .4)]) == {7: .5}


# --------------------------------------------------------------------- evaluate

def two_doc_fixture():
    d1 = doc_of("Rain fell all day.", "The river rose.", "Roads closed.", id="d1")
    d2 = doc_of("the cat sat", "a dog ran", id="d2", delimiter="\n")
    return [LabeledExample(d1, ExtractiveSummary((0, 1), 2)), LabeledExample(d2, ExtractiveSummary((0,), 1))]


def test_two_doc_hand_mean():
    test = two_doc_fixture()
    preds = {"d1": ExtractiveSummary((0, 1), 2), "d2": "the cat ran"}
    m = evaluate(preds, test).means()
    # d1 exact; d2: unigrams 2/3, bigrams 1/2, LCS 2/3
    assert m["rouge1"] == pytest.approx((1 + 2 / 3) / 2)
    assert m["rouge2"] == pytest.approx((1 + 1 / 2) / 2)
    assert m["rougeL"] == pytest.approx((1 + 2 / 3) / 2)
    assert "leval" not in m


def test_predictions_equal_references(toy_corpus):
    test = toy_corpus[:10]
    m = evaluate({ex.id: ex.extractive for ex in test}, test).means()
    assert m == {"rouge1": 1.0, "rouge2": 1.0, "rougeL": 1.0}


def test_evaluate_model_with_leval(toy_corpus):
    t = ReferenceTeacher().fit(toy_corpus[:20])
    rep = evaluate(t, toy_corpus[40:45], want_leval=True, client=MockChatClient({"fallback": "heuristic"}),
                   name="teacher")
    assert all(r.leval is not None and 0 <= r.leval <= 10 for r in rep.rows)
    assert "leval" in rep.means() and "L-Eval (%)" in markdown_table([rep])


def test_evaluate_errors(toy_corpus):
    with pytest.raises(ValueError):
        evaluate({}, toy_corpus[:1], want_leval=True)
    with pytest.raises(KeyError):
        evaluate({}, toy_corpus[:1])


def test_report_combine_table_and_csv():
    a = EvalReport("m", [EvalRow("x", .5, .2, .4, 6.0)])
    b = EvalReport("m", [EvalRow("x", .7, .4, .6, 8.0)])
    single = markdown_table([a])
    assert single.splitlines()[0] == "| Method | R-1 (%) | R-2 (%) | R-L (%) | L-Eval (%) |"
    assert single.splitlines()[2] == "| m | 50.0 | 20.0 | 40.0 | 60.0 |"
    both = EvalReport.combine("m", [a, b])
    summ = both.summary()
    assert summ["rouge1"] == pytest.approx((0.6, 0.1))
    assert markdown_table([both]).splitlines()[2] == "| m | 60.0 (10.0) | 30.0 (10.0) | 50.0 (10.0) | 70.0 (10.0) |"
    assert a.to_csv() == "doc_id,rouge1,rouge2,rougeL,leval\nx,0.500000,0.200000,0.400000,6.000000\n"
    assert EvalReport.from_json(both.to_json()) == both


def test_table_without_leval_has_four_columns():
    rep = EvalReport("fewshot", [EvalRow("x", .5, .2, .4)])
    header = markdown_table([rep]).splitlines()[0]
    assert header == "| Method | R-1 (%) | R-2 (%) | R-L (%) |"
