import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from subband_svm.corpus import SyntheticSpec, make_synthetic_corpus  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus():
    """40 utterances of the default 8-class synthetic corpus."""
    return make_synthetic_corpus(SyntheticSpec(n_utterances=40), seed=0)


@pytest.fixture(scope="session")
def three_class_corpus():
    return make_synthetic_corpus(SyntheticSpec(n_classes=3, n_utterances=12), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line and fail the test when ``ok`` is false."""

    def record(tag: str, ok: bool, detail: str):
        line = f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
