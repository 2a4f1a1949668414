import numpy as np
import pytest

from diarmetric.features import Corpus, SegmentRecord

_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report("AC3", "PASS", "detail")``."""

    def _record(criterion, status, detail=""):
        _ACCEPTANCE_LINES.append(f"{criterion:<5} {status:<5} {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda l: int(l[2:5].strip())):
            terminalreporter.write_line(line)


def make_corpus(spec, T=4, d=3, seed=0, dur=2.0):
    """Corpus from ``{conv_id: [speaker, ...]}`` with random features."""
    rng = np.random.default_rng(seed)
    convs = {}
    for cid, speakers in spec.items():
        convs[cid] = [
            SegmentRecord(cid, spk, i * dur, dur, rng.normal(size=(T, d)).astype(np.float32))
            for i, spk in enumerate(speakers)
        ]
    return Corpus(convs, T, d, {cid: {"group": "g"} for cid in spec})


@pytest.fixture
def small_corpus():
    speakers = [f"s{i}" for i in range(5)]
    return make_corpus({f"c{i}": [speakers[i]] * 10 for i in range(5)})
