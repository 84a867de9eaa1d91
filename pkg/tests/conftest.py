import numpy as np
import pytest
import torch

from citeimpact.corpus import PaperRecord, ingest_corpus, synth_corpus
from citeimpact.features import EmbeddingTable, HashingProvider


def rec(pid, t, refs=(), authors=("A1",), venue="V1", title="a title", abstract="an abstract", high_impact=False):
    return PaperRecord(pid, title, abstract, tuple(authors), venue, t, tuple(refs), high_impact)


@pytest.fixture
def tiny_records():
    """Six papers over four steps with known citation structure."""
    return [
        rec("a", 2000),
        rec("b", 2000, authors=("A2",)),
        rec("c", 2001, refs=("a", "b"), authors=("A1", "A3"), venue="V2"),
        rec("d", 2002, refs=("a", "c"), authors=("A3",)),
        rec("e", 2002, refs=("a", "b", "c"), authors=("A2",), venue="V2"),
        rec("f", 2003, refs=("c", "d", "e")),
    ]


@pytest.fixture
def tiny_network(tiny_records):
    return ingest_corpus(tiny_records)


@pytest.fixture(scope="session")
def small_network():
    return ingest_corpus(synth_corpus(300, seed=3))


@pytest.fixture(scope="session")
def small_table(small_network):
    return EmbeddingTable.build(small_network, HashingProvider(32))


@pytest.fixture(autouse=True)
def _deterministic():
    torch.manual_seed(0)
    np.random.seed(0)
    yield


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criterion lines collected during the run."""
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
