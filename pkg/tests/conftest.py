import numpy as np
import pytest

from mixsumm.corpus import Document, ExtractiveSummary, LabeledExample
from mixsumm.synthetic import make_corpus


def doc_of(*texts, id="d", **kw):
    return Document.from_sentences(id, list(texts), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_corpus():
    return make_corpus(60, seed=3, splits={"train": 40, "valid": 10, "test": 10}, key_terms=3)


@pytest.fixture
def small_example():
    doc = doc_of("The storm hit the coast.", "Power failed in the city.", "Crews worked all night.",
                 "Schools will reopen on Monday.", "Officials praised the response.", id="ex-1")
    return LabeledExample(doc, ExtractiveSummary((0, 3), 2))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
