from dataclasses import dataclass

import pytest

from kneeloc import linsvm
from kneeloc.detector import build_trainset, phantom_corpus
from kneeloc.proposer import ProposerConfig

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@dataclass
class SmallSetup:
    pcfg: ProposerConfig
    model: linsvm.SvmModel
    width: int
    height: int


@pytest.fixture(scope="session")
def small_setup():
    """A model trained on a dozen 800x640 phantoms, with the x step scaled to the leg width."""
    width, height = 800, 640
    pcfg = ProposerConfig(x_step=32)
    corpus = list(phantom_corpus(100, 12, width, height))
    model = linsvm.train(build_trainset(corpus, pcfg))
    return SmallSetup(pcfg, model, width, height)
